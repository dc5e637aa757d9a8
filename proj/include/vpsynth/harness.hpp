#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vpsynth/cot.hpp"
#include "vpsynth/dataset.hpp"
#include "vpsynth/filter.hpp"
#include "vpsynth/progen.hpp"
#include "vpsynth/tools.hpp"

namespace vps {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ToolBackendKind { Oracle, Remote };

struct PipelineConfig {
    std::uint64_t global_seed = 0;
    int k = 5;
    double temperature = 0.5;
    GenMode mode = GenMode::Template;
    double corruption_rate = 0.5;
    /// The noise seed is always derived from global_seed.
    NoiseConfig noise;
    bool offline = false;
    std::size_t workers = 1;
    std::size_t step_budget = 10000;

    std::filesystem::path corpus;
    std::filesystem::path output;
    std::filesystem::path report;  // defaults to <output>.report.json
    std::filesystem::path assets;  // defaults to assets_dir()

    ToolBackendKind backend = ToolBackendKind::Oracle;
    std::string tools_url;

    std::string llm_base_url;
    std::string llm_model;
    std::string llm_api_key_env = "OPENAI_API_KEY";
    bool use_judge = false;
    bool llm_rationales = false;

    bool report_wall_time = false;

    /// Throws ConfigError naming the first inconsistency, including
    /// offline with anything that would need the network.
    void validate() const;
    GenConfig gen_config() const;
    NoiseConfig resolved_noise() const;
    std::filesystem::path assets_root() const;
    std::filesystem::path report_path() const;
    /// Resolved settings that determine outputs; excludes workers and paths.
    ojson echo() const;
};

/// The external collaborators of a run. Everything except `backend_for` may
/// be null; offline runs must leave them null.
struct PipelineServices {
    std::function<std::shared_ptr<ToolBackend>(const SceneGraph&)> backend_for;
    std::shared_ptr<LlmClient> generator;
    std::shared_ptr<AnswerJudge> judge;
    std::shared_ptr<LlmRationaleRenderer> rationale_renderer;
};

/// Oracle backends over the shipped vocabulary and knowledge assets, plus LLM
/// clients when the config asks for them. Throws ConfigError / AssetError.
PipelineServices make_services(const PipelineConfig& config);

struct SampleResult {
    Sample sample;
    std::size_t candidates_generated = 0;
    FilterOutcome outcome;
    bool top1_correct = false;
    std::optional<Rationale> rationale;
    std::vector<TrainingRecord> records;
    std::optional<std::string> error;
};

struct TaskStats {
    std::size_t n_samples = 0;
    std::size_t n_labeled = 0;
    std::size_t top1_correct = 0;
    std::size_t selected = 0;
    std::size_t label_only = 0;
    std::size_t unlabeled_top = 0;
    std::size_t generation_failed = 0;
    std::size_t errors = 0;
    std::size_t trace_len_total = 0;
    std::size_t traces = 0;
    std::size_t candidates_executed_total = 0;
    std::size_t label_records = 0;
    std::size_t rationale_records = 0;

    double success_at_1() const;
    double success_at_k() const;
    double label_only_fraction() const;
    double mean_trace_len() const;
    double mean_candidates_executed() const;

    void add(const SampleResult& r);
    ojson to_json() const;
};

/// Published success-rate gains of the original large-scale setting; kept
/// as reference numbers only, nothing here reproduces them.
struct ReferenceDeltas {
    double gqa = 0.45;
    double aokvqa = 0.45;
    double okvqa = 0.33;
    double tallyqa = 0.10;
};

struct PipelineReport {
    ojson config;
    std::map<std::string, TaskStats> per_task;  // keyed by TaskType name
    TaskStats overall;
    std::vector<std::string> sample_errors;     // "<sample_id>: <message>"
    std::optional<double> wall_time_seconds;

    ojson to_json() const;
    std::string pretty() const;
};

/// Human-readable table of a report's JSON form.
std::string pretty_report(const ojson& report);

struct PipelineRun {
    std::vector<SampleResult> samples;  // ordered by sample id
    std::vector<TrainingRecord> records;
    PipelineReport report;
};

/// Processes one sample end to end. Never throws for sample-level failures;
/// they land in SampleResult::error.
SampleResult process_sample(const SceneGraph& scene, const Sample& sample, const PipelineConfig& config,
                            const PipelineServices& services);

PipelineRun run_pipeline(const Corpus& corpus, const PipelineConfig& config, const PipelineServices& services);

/// run_pipeline plus writing the JSONL and the report file.
PipelineRun run_pipeline_to_files(const Corpus& corpus, const PipelineConfig& config,
                                  const PipelineServices& services);

enum class Metric { EM, VQAScore };

std::optional<Metric> metric_from_string(std::string_view s);

/// EM compares against the first reference with string rules only; VQAScore
/// is min(1, matching references / 3) per item. Throws std::invalid_argument
/// on a length mismatch or an item without references.
double score_answers(const std::vector<std::string>& predictions,
                     const std::vector<std::vector<std::string>>& references, Metric metric);

}  // namespace vps
