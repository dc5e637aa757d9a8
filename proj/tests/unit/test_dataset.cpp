#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "common.hpp"
#include "vpsynth/dataset.hpp"
#include "vpsynth/rng.hpp"

using namespace vps;

namespace {

Sample sample(std::string id, TaskType task = TaskType::Counting) {
    Sample s;
    s.sample_id = std::move(id);
    s.scene_id = "s_0003";
    s.query_text = "How many dogs are in the picture?";
    s.task = task;
    s.gold_answer = "2";
    return s;
}

FilterOutcome selected() {
    FilterOutcome o;
    o.status = FilterStatus::SelectedProgram;
    o.candidate_rank = 2;
    o.program_hash = 0x0123456789abcdefULL;
    o.answer = "two";
    o.trace.entries.resize(3);
    o.trace.outcome.returned = true;
    return o;
}

Rationale rationale() {
    Rationale r;
    r.text = "There are 2 dogs at 1 2 3 4 and 5 6 7 8. Thus, there are 2 dogs.";
    return r;
}

TrainingRecord random_record(Rng& rng, std::size_t i) {
    static const std::vector<std::string> texts = {"yes", "2", "A", "a tennis ball", "quote \" and \\ slash",
                                                   "line\nbreak", "caf\xc3\xa9", "tab\tin"};
    TrainingRecord r;
    r.id = "q_" + std::to_string(i) + (rng.bernoulli(0.5) ? ":label" : ":rationale");
    r.image_ref = "s_" + std::to_string(rng.index(100));
    r.query = texts[rng.index(texts.size())] + "?";
    r.task = static_cast<TaskType>(rng.index(3));
    r.instruction = std::string(rng.bernoulli(0.5) ? kFreeformInstruction : kRationaleSuffix);
    r.target = texts[rng.index(texts.size())];
    r.objective = rng.bernoulli(0.5) ? Objective::Label : Objective::Rationale;
    if (rng.bernoulli(0.7)) r.meta.program_hash = vpl::hash_hex(rng.next_u64());
    r.meta.trace_len = rng.index(20);
    r.meta.filter_status = std::string(to_string(static_cast<FilterStatus>(rng.index(3))));
    r.meta.global_seed = rng.next_u64();
    return r;
}

}  // namespace

TEST_CASE("instructions are the fixed task strings") {
    CHECK(task_instruction(TaskType::VqaFreeform) == "Answer with a single word or phrase");
    CHECK(task_instruction(TaskType::Counting) == "Answer with a single word or phrase");
    CHECK(task_instruction(TaskType::MultipleChoice) == "Answer with the option letter from the given choices directly");
    CHECK(kRationaleSuffix == "Explain the rationale to answer the question");
}

TEST_CASE("a selected program gives a label and a rationale record") {
    const auto recs = emit_records(sample("q_0001"), selected(), rationale(), 9);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].objective == Objective::Label);
    CHECK(recs[0].id == "q_0001:label");
    CHECK(recs[0].instruction == task_instruction(TaskType::Counting));
    CHECK(recs[0].target == "2");
    CHECK(recs[1].objective == Objective::Rationale);
    CHECK(recs[1].id == "q_0001:rationale");
    CHECK(std::string_view(recs[1].instruction).ends_with(kRationaleSuffix));
    CHECK(recs[1].target == rationale().text);
    for (const auto& r : recs) {
        CHECK(r.meta.program_hash == "0123456789abcdef");
        CHECK(r.meta.trace_len == 3);
        CHECK(r.meta.filter_status == "selected_program");
        CHECK(r.meta.global_seed == 9);
        CHECK(r.meta.pipeline_version == kPipelineVersion);
        CHECK(r.image_ref == "s_0003");
    }
}

TEST_CASE("label-only gives a single label record") {
    FilterOutcome o;
    o.status = FilterStatus::LabelOnly;
    o.gold_answer = "2";
    const auto recs = emit_records(sample("q_0002"), o, std::nullopt, 0);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].objective == Objective::Label);
    CHECK_FALSE(recs[0].meta.program_hash);
    CHECK(recs[0].meta.filter_status == "label_only");
}

TEST_CASE("unlabeled samples use the program answer as the label target") {
    auto s = sample("q_0003");
    s.gold_answer.reset();
    auto o = selected();
    o.status = FilterStatus::UnlabeledTop;
    const auto recs = emit_records(s, o, rationale(), 0);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].target == "two");
}

TEST_CASE("missing rationale and failed generation") {
    CHECK_THROWS_AS(emit_records(sample("q_0004"), selected(), std::nullopt, 0), DatasetError);
    FilterOutcome failed;
    CHECK(emit_records(sample("q_0005"), failed, std::nullopt, 0).empty());
}

TEST_CASE("70 selected and 30 label-only samples give 170 records") {
    std::vector<TrainingRecord> all;
    for (int i = 0; i < 100; ++i) {
        FilterOutcome o = i < 70 ? selected() : FilterOutcome{};
        if (i >= 70) o.status = FilterStatus::LabelOnly;
        auto recs = emit_records(sample("q_" + std::to_string(i)), o, i < 70 ? std::optional(rationale()) : std::nullopt, 0);
        all.insert(all.end(), recs.begin(), recs.end());
    }
    CHECK(all.size() == 170);
    CHECK(std::count_if(all.begin(), all.end(), [](const auto& r) { return r.objective == Objective::Rationale; }) == 70);
}

TEST_CASE("field order is stable") {
    const auto j = to_json(emit_records(sample("q_0001"), selected(), rationale(), 1)[0]);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"id", "image_ref", "query", "task", "instruction", "target", "objective", "meta"});
    std::vector<std::string> meta;
    for (const auto& [k, v] : j["meta"].items()) meta.push_back(k);
    CHECK(meta == std::vector<std::string>{"program_hash", "trace_len", "filter_status", "pipeline_version", "global_seed"});
}

TEST_CASE("1000 mixed records round-trip through a file") {
    Rng rng(77);
    std::vector<TrainingRecord> recs;
    for (std::size_t i = 0; i < 1000; ++i) recs.push_back(random_record(rng, i));
    const auto path = std::filesystem::temp_directory_path() / "vpsynth_records.jsonl";
    write_jsonl(recs, path);
    CHECK(read_jsonl(path) == recs);
    CHECK(to_jsonl(read_jsonl(path)) == test::slurp(path));
    std::filesystem::remove(path);
}

TEST_CASE("an empty record list is an empty file") {
    const auto path = std::filesystem::temp_directory_path() / "vpsynth_empty.jsonl";
    write_jsonl({}, path);
    CHECK(std::filesystem::file_size(path) == 0);
    CHECK(read_jsonl(path).empty());
    std::filesystem::remove(path);
}

TEST_CASE("a record without objective is rejected with its line") {
    auto recs = emit_records(sample("q_0001"), selected(), rationale(), 1);
    auto text = to_jsonl(recs);
    auto bad = to_json(recs[0]);
    bad.erase("objective");
    text += bad.dump() + "\n";
    try {
        parse_jsonl(text);
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        CHECK(std::string(e.what()).find("objective") != std::string::npos);
    }
}

TEST_CASE("unknown fields: strict rejects, lenient keeps and writes back") {
    auto j = to_json(emit_records(sample("q_0001"), selected(), rationale(), 1)[0]);
    j["weight"] = 0.5;
    const auto line = j.dump() + "\n";
    CHECK_THROWS_AS(parse_jsonl(line, ReadMode::Strict), DatasetError);
    const auto recs = parse_jsonl(line, ReadMode::Lenient);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].extra["weight"] == 0.5);
    CHECK(to_jsonl(recs) == line);
}

TEST_CASE("schema violations in values are rejected") {
    auto j = to_json(emit_records(sample("q_0001"), selected(), rationale(), 1)[0]);
    auto bad = j;
    bad["task"] = "poetry";
    CHECK_THROWS_AS(record_from_json(bad), DatasetError);
    bad = j;
    bad["target"] = "";
    CHECK_THROWS_AS(record_from_json(bad), DatasetError);
    bad = j;
    bad["meta"]["program_hash"] = "xyz";
    CHECK_THROWS_AS(record_from_json(bad), DatasetError);
    CHECK_THROWS_AS(parse_jsonl("{oops\n"), DatasetError);
}
