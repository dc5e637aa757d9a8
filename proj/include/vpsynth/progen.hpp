#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vpsynth/llm.hpp"
#include "vpsynth/scene.hpp"
#include "vpsynth/vpl.hpp"

namespace vps {

enum class GenMode { Template, Llm };

std::string_view to_string(GenMode m);
std::optional<GenMode> gen_mode_from_string(std::string_view s);

struct GenConfig {
    int k = 5;
    double temperature = 0.5;
    GenMode mode = GenMode::Template;
    std::uint64_t seed = 0;
    /// Template mode: probability that the canonical program is not ranked first.
    double corruption_rate = 0.5;
    std::filesystem::path prompt_template_path;  // llm mode
    std::filesystem::path tool_api_path;         // llm mode

    void validate() const;
};

struct Candidate {
    int rank = 0;
    std::string source;
    double score = 0.0;
    Result<vpl::Program, vpl::ParseError> parse_result = vpl::ParseError{};
    /// Template name ("canonical", "drop_attribute", ...) or "llm".
    std::string origin;

    bool parsed() const noexcept { return parse_result.ok(); }
    /// Program hash, or the FNV-1a of the raw source when it does not parse.
    std::uint64_t hash() const;
};

struct CandidateSet {
    std::vector<Candidate> candidates;
    bool generation_failed = false;
    std::string failure;
};

struct TemplateProgram {
    std::string name;
    std::string source;
};

/// Canonical program first, then `n_corruptions` distinct corrupted variants
/// in a fixed per-kind order.
std::vector<TemplateProgram> template_catalog(const StructuredQuery& query, std::size_t n_corruptions);

std::string canonical_program(const StructuredQuery& query);

/// Template mode draws `max(k, 5)` candidates and keeps the top k, so the
/// k=1 set is always a prefix of the k=5 set under the same seed.
std::size_t template_pool_size(int k);

CandidateSet generate_candidates(const Sample& sample, const GenConfig& config, LlmClient* llm = nullptr,
                                 std::string_view caption = {});

}  // namespace vps
