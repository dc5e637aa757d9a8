#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "vpsynth/interpreter.hpp"
#include "vpsynth/llm.hpp"
#include "vpsynth/prompts.hpp"

namespace vps {

struct Rationale {
    std::string text;
    std::vector<std::string> sentences;  // template path only
    std::vector<std::size_t> covered_steps;
    std::size_t answer_offset = 0;
    std::size_t answer_length = 0;

    std::string_view answer_span() const { return std::string_view(text).substr(answer_offset, answer_length); }
};

class RationaleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Deterministic trace-to-text rendering, one sentence per trace entry plus a
/// conclusion. Entries that raised a tool error are covered without a
/// sentence. Throws RationaleError for failed traces.
Rationale render_rationale_template(const ExecutionTrace& trace, std::string_view query_text,
                                    std::string_view answer);

/// Text a rationale must mention for a trace entry: result boxes, receiver
/// boxes and scalar results. Each inner list is a set of accepted spellings.
/// Empty for entries that raised.
std::vector<std::vector<std::string>> required_mentions(const TraceEntry& entry);

/// Last token window of `text` whose normalized form equals the normalized
/// answer, as (offset, length). nullopt when the answer never appears.
std::optional<std::pair<std::size_t, std::size_t>> locate_answer(std::string_view text, std::string_view answer);

/// Empty when the rationale covers every trace entry and its answer span
/// normalizes to `answer`; otherwise the first problem found.
std::string validate_rationale(const Rationale& r, const ExecutionTrace& trace, std::string_view answer);

/// Asks the LLM for a rationale with the CoT-conversion prompt. Output that
/// fails validation, or any transport error, falls back to the template.
class LlmRationaleRenderer {
public:
    LlmRationaleRenderer(std::shared_ptr<LlmClient> llm, PromptTemplate prompt, double temperature = 0.0);

    Rationale render(const ExecutionTrace& trace, std::string_view query_text, std::string_view program_source,
                     std::string_view answer) const;

    /// Builds a Rationale from raw LLM text, or nullopt when it fails validation.
    static std::optional<Rationale> accept(std::string text, const ExecutionTrace& trace, std::string_view answer);

private:
    std::shared_ptr<LlmClient> llm_;
    PromptTemplate prompt_;
    double temperature_;
};

}  // namespace vps
