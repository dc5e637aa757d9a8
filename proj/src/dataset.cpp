#include "vpsynth/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "vpsynth/vpl.hpp"

namespace vps {

std::string_view task_instruction(TaskType task) {
    return task == TaskType::MultipleChoice ? kMultipleChoiceInstruction : kFreeformInstruction;
}

std::string_view to_string(Objective o) { return o == Objective::Label ? "label" : "rationale"; }

std::optional<Objective> objective_from_string(std::string_view s) {
    if (s == "label") return Objective::Label;
    if (s == "rationale") return Objective::Rationale;
    return std::nullopt;
}

std::vector<TrainingRecord> emit_records(const Sample& sample, const FilterOutcome& outcome,
                                         const std::optional<Rationale>& rationale, std::uint64_t global_seed) {
    if (outcome.status == FilterStatus::GenerationFailed) return {};
    const bool with_program =
        outcome.status == FilterStatus::SelectedProgram || outcome.status == FilterStatus::UnlabeledTop;
    if (with_program && !rationale) {
        throw DatasetError("sample " + sample.sample_id + " has a selected program but no rationale");
    }

    TrainingRecord base;
    base.image_ref = sample.scene_id;
    base.query = sample.query_text;
    base.task = sample.task;
    base.meta.filter_status = std::string(to_string(outcome.status));
    base.meta.global_seed = global_seed;
    if (with_program) {
        base.meta.program_hash = vpl::hash_hex(outcome.program_hash);
        base.meta.trace_len = outcome.trace.entries.size();
    }

    TrainingRecord label = base;
    label.id = sample.sample_id + ":label";
    label.instruction = std::string(task_instruction(sample.task));
    label.objective = Objective::Label;
    label.target = sample.labeled() ? *sample.gold_answer : outcome.answer;
    if (label.target.empty()) throw DatasetError("sample " + sample.sample_id + " has an empty label target");

    std::vector<TrainingRecord> out{std::move(label)};
    if (with_program) {
        TrainingRecord r = base;
        r.id = sample.sample_id + ":rationale";
        r.instruction = std::string(kRationaleSuffix);
        r.objective = Objective::Rationale;
        r.target = rationale->text;
        if (r.target.empty()) throw DatasetError("sample " + sample.sample_id + " has an empty rationale");
        out.push_back(std::move(r));
    }
    return out;
}

ojson to_json(const TrainingRecord& r) {
    ojson meta = ojson::object();
    if (r.meta.program_hash) meta["program_hash"] = *r.meta.program_hash;
    meta["trace_len"] = r.meta.trace_len;
    meta["filter_status"] = r.meta.filter_status;
    meta["pipeline_version"] = r.meta.pipeline_version;
    meta["global_seed"] = r.meta.global_seed;
    ojson j = {
        {"id", r.id},
        {"image_ref", r.image_ref},
        {"query", r.query},
        {"task", to_string(r.task)},
        {"instruction", r.instruction},
        {"target", r.target},
        {"objective", to_string(r.objective)},
        {"meta", meta},
    };
    for (const auto& [k, v] : r.extra.items()) j[k] = v;
    return j;
}

namespace {

const std::set<std::string, std::less<>> kRecordFields = {"id",          "image_ref", "query",     "task",
                                                          "instruction", "target",    "objective", "meta"};
const std::set<std::string, std::less<>> kMetaFields = {"program_hash", "trace_len", "filter_status",
                                                        "pipeline_version", "global_seed"};

const ojson& field(const ojson& j, const char* name) {
    const auto it = j.find(name);
    if (it == j.end()) throw DatasetError(std::string("missing field \"") + name + "\"");
    return *it;
}

std::string string_field(const ojson& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_string()) throw DatasetError(std::string("field \"") + name + "\" must be a string");
    return v.get<std::string>();
}

std::uint64_t uint_field(const ojson& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_number_unsigned()) throw DatasetError(std::string("field \"") + name + "\" must be a non-negative integer");
    return v.get<std::uint64_t>();
}

}  // namespace

TrainingRecord record_from_json(const ojson& j, bool strict) {
    if (!j.is_object()) throw DatasetError("record must be a JSON object");
    TrainingRecord r;
    r.id = string_field(j, "id");
    r.image_ref = string_field(j, "image_ref");
    r.query = string_field(j, "query");
    const auto task = task_from_string(string_field(j, "task"));
    if (!task) throw DatasetError("unknown task \"" + j["task"].get<std::string>() + "\"");
    r.task = *task;
    r.instruction = string_field(j, "instruction");
    r.target = string_field(j, "target");
    const auto objective = objective_from_string(string_field(j, "objective"));
    if (!objective) throw DatasetError("unknown objective \"" + j["objective"].get<std::string>() + "\"");
    r.objective = *objective;
    if (r.target.empty()) throw DatasetError("empty target");

    const auto& meta = field(j, "meta");
    if (!meta.is_object()) throw DatasetError("field \"meta\" must be an object");
    if (meta.contains("program_hash")) {
        const auto h = string_field(meta, "program_hash");
        if (h.size() != 16 || h.find_first_not_of("0123456789abcdef") != std::string::npos) {
            throw DatasetError("field \"meta.program_hash\" must be 16 lowercase hex digits");
        }
        r.meta.program_hash = h;
    }
    r.meta.trace_len = uint_field(meta, "trace_len");
    r.meta.filter_status = string_field(meta, "filter_status");
    if (!filter_status_from_string(r.meta.filter_status)) {
        throw DatasetError("unknown filter_status \"" + r.meta.filter_status + "\"");
    }
    r.meta.pipeline_version = string_field(meta, "pipeline_version");
    r.meta.global_seed = uint_field(meta, "global_seed");

    for (const auto& [k, v] : meta.items()) {
        if (!kMetaFields.count(k)) throw DatasetError("unknown field \"meta." + k + "\"");
    }
    for (const auto& [k, v] : j.items()) {
        if (kRecordFields.count(k)) continue;
        if (strict) throw DatasetError("unknown field \"" + k + "\"");
        r.extra[k] = v;
    }
    return r;
}

std::string to_jsonl(const std::vector<TrainingRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += to_json(r).dump();
        out += '\n';
    }
    return out;
}

void write_jsonl(const std::vector<TrainingRecord>& records, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DatasetError("cannot open " + path.string() + " for writing");
    f << to_jsonl(records);
    if (!f) throw DatasetError("write to " + path.string() + " failed");
}

std::vector<TrainingRecord> parse_jsonl(std::string_view text, ReadMode mode) {
    std::vector<TrainingRecord> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        const auto j = ojson::parse(line, nullptr, false);
        if (j.is_discarded()) throw DatasetError("line " + std::to_string(line_no) + ": invalid JSON");
        try {
            out.push_back(record_from_json(j, mode == ReadMode::Strict));
        } catch (const DatasetError& e) {
            throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<TrainingRecord> read_jsonl(const std::filesystem::path& path, ReadMode mode) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_jsonl(ss.str(), mode);
}

}  // namespace vps
