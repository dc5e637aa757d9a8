#include "vpsynth/filter.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

namespace vps {

namespace {

const std::map<std::string, std::string, std::less<>>& number_words() {
    static const std::map<std::string, std::string, std::less<>> table = {
        {"zero", "0"},     {"one", "1"},       {"two", "2"},        {"three", "3"},     {"four", "4"},
        {"five", "5"},     {"six", "6"},       {"seven", "7"},      {"eight", "8"},     {"nine", "9"},
        {"ten", "10"},     {"eleven", "11"},   {"twelve", "12"},    {"thirteen", "13"}, {"fourteen", "14"},
        {"fifteen", "15"}, {"sixteen", "16"},  {"seventeen", "17"}, {"eighteen", "18"}, {"nineteen", "19"},
        {"twenty", "20"},
    };
    return table;
}

bool trim_char(unsigned char c) { return std::isspace(c) || std::ispunct(c); }

std::string trim_edges(std::string s) {
    std::size_t b = 0;
    while (b < s.size() && trim_char(static_cast<unsigned char>(s[b]))) ++b;
    std::size_t e = s.size();
    while (e > b && trim_char(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
    std::string s(raw);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    s = trim_edges(std::move(s));
    std::vector<std::string> words;
    std::istringstream in(s);
    for (std::string w; in >> w;) words.push_back(std::move(w));
    auto is_article = [](const std::string& w) { return w == "a" || w == "an" || w == "the"; };
    // A bare "a" is an option letter, not an article.
    const bool keep_articles = std::all_of(words.begin(), words.end(), is_article);
    std::string out;
    for (auto& word : words) {
        if (!keep_articles && is_article(word)) continue;
        if (auto it = number_words().find(word); it != number_words().end()) word = it->second;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

bool string_rules_match(std::string_view pred, std::string_view gold) {
    const auto p = normalize_answer(pred);
    const auto g = normalize_answer(gold);
    if (p.empty() || g.empty()) return false;
    return p == g || p == g + "s" || g == p + "s";
}

LlmAnswerJudge::LlmAnswerJudge(std::shared_ptr<LlmClient> llm, PromptTemplate prompt)
    : llm_(std::move(llm)), prompt_(std::move(prompt)) {
    if (!llm_) throw std::invalid_argument("judge needs an LLM client");
}

std::optional<bool> LlmAnswerJudge::parse_verdict(std::string_view reply) {
    std::size_t i = 0;
    while (i < reply.size() && !std::isalpha(static_cast<unsigned char>(reply[i]))) ++i;
    std::string word;
    while (i < reply.size() && std::isalpha(static_cast<unsigned char>(reply[i]))) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(reply[i++])));
    }
    if (word == "yes") return true;
    if (word == "no") return false;
    return std::nullopt;
}

bool LlmAnswerJudge::affirms(std::string_view question, std::string_view pred, std::string_view gold) {
    const auto prompt = prompt_.fill(
        {{"query", std::string(question)}, {"prediction", std::string(pred)}, {"gold", std::string(gold)}});
    const auto replies = llm_->complete(prompt, 1, 0.0);
    if (replies.empty()) throw LlmError("judge returned no choices");
    const auto verdict = parse_verdict(replies.front().text);
    if (!verdict) {
        spdlog::info("judge reply without a leading yes/no counts as no: {}", replies.front().text);
        return false;
    }
    return *verdict;
}

bool answers_match(std::string_view pred, std::string_view gold, AnswerJudge* judge, std::string_view question) {
    if (string_rules_match(pred, gold)) return true;
    if (!judge || normalize_answer(pred).empty() || normalize_answer(gold).empty()) return false;
    try {
        return judge->affirms(question, pred, gold);
    } catch (const std::exception& e) {
        spdlog::warn("answer judge unavailable, keeping string verdict: {}", e.what());
        return false;
    }
}

std::vector<ExecutedCandidate> execute_candidates(const CandidateSet& set, const VisualInput& input,
                                                  const ToolRegistry& tools, StepBudget budget) {
    std::vector<ExecutedCandidate> out;
    std::map<std::uint64_t, std::size_t> first_run;
    for (const auto& c : set.candidates) {
        ExecutedCandidate e{c, std::nullopt, {}};
        if (c.parsed()) {
            if (auto it = first_run.find(c.hash()); it != first_run.end()) {
                e.result = out[it->second].result;
                e.trace = out[it->second].trace;
            } else {
                auto run = execute(*c.parse_result, input, tools, budget);
                e.result = std::move(run.result);
                e.trace = std::move(run.trace);
                first_run.emplace(c.hash(), out.size());
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::string_view to_string(FilterStatus s) {
    switch (s) {
        case FilterStatus::SelectedProgram: return "selected_program";
        case FilterStatus::LabelOnly: return "label_only";
        case FilterStatus::UnlabeledTop: return "unlabeled_top";
        case FilterStatus::GenerationFailed: return "generation_failed";
    }
    return "generation_failed";
}

std::optional<FilterStatus> filter_status_from_string(std::string_view s) {
    for (auto st : {FilterStatus::SelectedProgram, FilterStatus::LabelOnly, FilterStatus::UnlabeledTop,
                    FilterStatus::GenerationFailed}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

namespace {

bool better(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.hash() < b.hash();
}

}  // namespace

FilterOutcome filter_candidates(const Sample& sample, const std::vector<ExecutedCandidate>& executed,
                                AnswerJudge* judge) {
    FilterOutcome out;
    std::map<std::uint64_t, bool> executed_hashes;
    const ExecutedCandidate* best = nullptr;
    for (const auto& e : executed) {
        if (!e.candidate.parsed()) continue;
        executed_hashes.emplace(e.candidate.hash(), true);
        if (!e.result) continue;
        if (sample.labeled()) {
            if (!answers_match(*e.result, *sample.gold_answer, judge, sample.query_text)) continue;
            ++out.candidates_correct;
            out.correct_ranks.push_back(e.candidate.rank);
        }
        if (!best || better(e.candidate, best->candidate)) best = &e;
    }
    out.candidates_executed = executed_hashes.size();

    if (best) {
        out.status = sample.labeled() ? FilterStatus::SelectedProgram : FilterStatus::UnlabeledTop;
        out.candidate_rank = best->candidate.rank;
        out.program_hash = best->candidate.hash();
        out.program_source = best->candidate.source;
        out.answer = *best->result;
        out.trace = best->trace;
    } else if (sample.labeled()) {
        out.status = FilterStatus::LabelOnly;
    } else {
        out.status = FilterStatus::GenerationFailed;
    }
    if (sample.labeled()) out.gold_answer = *sample.gold_answer;
    return out;
}

}  // namespace vps
