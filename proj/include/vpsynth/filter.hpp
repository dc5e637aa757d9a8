#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vpsynth/interpreter.hpp"
#include "vpsynth/llm.hpp"
#include "vpsynth/prompts.hpp"
#include "vpsynth/progen.hpp"

namespace vps {

/// Lowercase, trim whitespace and punctuation, drop articles, spell-out
/// numbers zero..twenty as digits, collapse whitespace.
std::string normalize_answer(std::string_view raw);

/// Normalized equality or a trailing-"s" plural difference.
bool string_rules_match(std::string_view pred, std::string_view gold);

class AnswerJudge {
public:
    virtual ~AnswerJudge() = default;
    /// Throws LlmError when the judge cannot be reached.
    virtual bool affirms(std::string_view question, std::string_view pred, std::string_view gold) = 0;
};

/// Asks an LLM with the answer-verification prompt; reads a leading yes/no.
class LlmAnswerJudge final : public AnswerJudge {
public:
    LlmAnswerJudge(std::shared_ptr<LlmClient> llm, PromptTemplate prompt);
    bool affirms(std::string_view question, std::string_view pred, std::string_view gold) override;

    /// true for a leading "yes", false for "no"; nullopt otherwise.
    static std::optional<bool> parse_verdict(std::string_view reply);

private:
    std::shared_ptr<LlmClient> llm_;
    PromptTemplate prompt_;
};

/// String rules first; the judge only when they fail. Judge transport errors
/// fall back to the string verdict.
bool answers_match(std::string_view pred, std::string_view gold, AnswerJudge* judge = nullptr,
                   std::string_view question = {});

struct ExecutedCandidate {
    Candidate candidate;
    std::optional<std::string> result;  // set iff the program parsed and returned
    ExecutionTrace trace;
};

/// Runs every parse-valid candidate; candidates sharing a program hash are
/// executed once and share the result.
std::vector<ExecutedCandidate> execute_candidates(const CandidateSet& set, const VisualInput& input,
                                                  const ToolRegistry& tools, StepBudget budget = {});

enum class FilterStatus { SelectedProgram, LabelOnly, UnlabeledTop, GenerationFailed };

std::string_view to_string(FilterStatus s);
std::optional<FilterStatus> filter_status_from_string(std::string_view s);

struct FilterOutcome {
    FilterStatus status = FilterStatus::GenerationFailed;
    // SelectedProgram / UnlabeledTop
    int candidate_rank = 0;
    std::uint64_t program_hash = 0;
    std::string program_source;
    std::string answer;
    ExecutionTrace trace;
    // LabelOnly
    std::string gold_answer;

    std::size_t candidates_executed = 0;
    std::size_t candidates_correct = 0;
    /// Ranks of candidates whose answer matched the gold label.
    std::vector<int> correct_ranks;
};

FilterOutcome filter_candidates(const Sample& sample, const std::vector<ExecutedCandidate>& executed,
                                AnswerJudge* judge = nullptr);

}  // namespace vps
