#include "vpsynth/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vpsynth/prompts.hpp"
#include "vpsynth/rng.hpp"

namespace vps {

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be non-negative");
    if (!(corruption_rate >= 0.0 && corruption_rate <= 1.0)) throw ConfigError("corruption_rate must be in [0, 1]");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (step_budget < 1) throw ConfigError("step_budget must be at least 1");
    try {
        noise.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (offline) {
        if (mode == GenMode::Llm) throw ConfigError("offline mode requires --mode template");
        if (use_judge) throw ConfigError("offline mode cannot use the answer judge");
        if (llm_rationales) throw ConfigError("offline mode cannot use LLM rationales");
        if (backend == ToolBackendKind::Remote) throw ConfigError("offline mode requires the oracle tool backend");
    }
    const bool needs_llm = mode == GenMode::Llm || use_judge || llm_rationales;
    if (needs_llm && (llm_base_url.empty() || llm_model.empty())) {
        throw ConfigError("LLM features need llm_base_url and llm_model");
    }
    if (backend == ToolBackendKind::Remote && tools_url.empty()) {
        throw ConfigError("the remote tool backend needs tools_url");
    }
}

GenConfig PipelineConfig::gen_config() const {
    GenConfig g;
    g.k = k;
    g.temperature = temperature;
    g.mode = mode;
    g.seed = global_seed;
    g.corruption_rate = corruption_rate;
    g.prompt_template_path = assets_root() / "prompts" / "code_generation.txt";
    g.tool_api_path = assets_root() / "prompts" / "tool_api.txt";
    return g;
}

NoiseConfig PipelineConfig::resolved_noise() const {
    NoiseConfig n = noise;
    n.seed = mix_seed(global_seed, "noise");
    return n;
}

std::filesystem::path PipelineConfig::assets_root() const { return assets.empty() ? assets_dir() : assets; }

std::filesystem::path PipelineConfig::report_path() const {
    if (!report.empty()) return report;
    auto p = output;
    p += ".report.json";
    return p;
}

ojson PipelineConfig::echo() const {
    const auto n = resolved_noise();
    return ojson{
        {"global_seed", global_seed},
        {"k", k},
        {"temperature", temperature},
        {"mode", to_string(mode)},
        {"corruption_rate", corruption_rate},
        {"offline", offline},
        {"step_budget", step_budget},
        {"backend", backend == ToolBackendKind::Oracle ? "oracle" : "remote"},
        {"use_judge", use_judge},
        {"llm_rationales", llm_rationales},
        {"llm_model", llm_model},
        {"noise",
         {{"seed", n.seed},
          {"p_miss", n.p_miss},
          {"p_false_positive", n.p_false_positive},
          {"p_attr_flip", n.p_attr_flip},
          {"p_vqa_error", n.p_vqa_error},
          {"p_depth_jitter", n.p_depth_jitter},
          {"depth_jitter_sigma", n.depth_jitter_sigma}}},
        {"pipeline_version", kPipelineVersion},
    };
}

PipelineServices make_services(const PipelineConfig& config) {
    config.validate();
    PipelineServices s;
    const auto root = config.assets_root();
    if (config.backend == ToolBackendKind::Oracle) {
        auto vocab = std::make_shared<const Vocabulary>(Vocabulary::load(root / "vocab_v1.txt"));
        auto knowledge = std::make_shared<const KnowledgeTable>(KnowledgeTable::load(root / "knowledge_v1.tsv"));
        const auto noise = config.resolved_noise();
        s.backend_for = [vocab, knowledge, noise](const SceneGraph& scene) -> std::shared_ptr<ToolBackend> {
            return std::make_shared<OracleTools>(scene, vocab, knowledge, noise);
        };
    } else {
        RemoteToolConfig rc;
        rc.base_url = config.tools_url;
        auto remote = std::make_shared<RemoteTools>(rc);
        s.backend_for = [remote](const SceneGraph&) -> std::shared_ptr<ToolBackend> { return remote; };
    }

    std::shared_ptr<LlmClient> llm;
    if (config.mode == GenMode::Llm || config.use_judge || config.llm_rationales) {
        LlmConfig lc;
        lc.base_url = config.llm_base_url;
        lc.model = config.llm_model;
        lc.api_key_env = config.llm_api_key_env;
        llm = std::make_shared<ChatCompletionsClient>(lc);
    }
    if (config.mode == GenMode::Llm) s.generator = llm;
    if (config.use_judge) {
        s.judge = std::make_shared<LlmAnswerJudge>(
            llm, PromptTemplate::load(root / "prompts" / "answer_verification.txt"));
    }
    if (config.llm_rationales) {
        s.rationale_renderer = std::make_shared<LlmRationaleRenderer>(
            llm, PromptTemplate::load(root / "prompts" / "cot_conversion.txt"));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Per-sample pipeline

SampleResult process_sample(const SceneGraph& scene, const Sample& sample, const PipelineConfig& config,
                            const PipelineServices& services) {
    SampleResult r;
    r.sample = sample;
    try {
        if (!services.backend_for) throw ConfigError("no tool backend configured");
        auto backend = services.backend_for(scene);
        const auto tools = ToolRegistry::standard(backend);
        const auto input = VisualInput::of(scene);

        std::string caption;
        if (config.mode == GenMode::Llm) caption = backend->simple_query(input.image_patch(), "Describe the image.", 0);

        auto gen = config.gen_config();
        if (!sample.labeled()) gen.k = 1;  // nothing to filter against, so only the top program is used
        const auto candidates = generate_candidates(sample, gen, services.generator.get(), caption);
        r.candidates_generated = candidates.candidates.size();
        if (candidates.generation_failed) {
            spdlog::warn("{}: program generation failed: {}", sample.sample_id, candidates.failure);
        }
        const auto executed = execute_candidates(candidates, input, tools, StepBudget{config.step_budget});
        r.outcome = filter_candidates(sample, executed, services.judge.get());
        const auto& ranks = r.outcome.correct_ranks;
        r.top1_correct = sample.labeled() && std::find(ranks.begin(), ranks.end(), 1) != ranks.end();

        const bool with_program = r.outcome.status == FilterStatus::SelectedProgram ||
                                  r.outcome.status == FilterStatus::UnlabeledTop;
        if (with_program) {
            const auto& o = r.outcome;
            Rationale rat = services.rationale_renderer
                                ? services.rationale_renderer->render(o.trace, sample.query_text, o.program_source,
                                                                      o.answer)
                                : render_rationale_template(o.trace, sample.query_text, o.answer);
            if (auto problem = validate_rationale(rat, o.trace, o.answer); !problem.empty()) {
                throw RationaleError("rationale failed validation: " + problem);
            }
            r.rationale = std::move(rat);
        }
        r.records = emit_records(sample, r.outcome, r.rationale, config.global_seed);
    } catch (const std::exception& e) {
        r.error = e.what();
        r.records.clear();
        spdlog::error("{}: {}", sample.sample_id, e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Stats and report

namespace {

double ratio(std::size_t num, std::size_t den) { return den ? static_cast<double>(num) / den : 0.0; }

}  // namespace

double TaskStats::success_at_1() const { return ratio(top1_correct, n_labeled); }
double TaskStats::success_at_k() const { return ratio(selected, n_labeled); }
double TaskStats::label_only_fraction() const { return ratio(label_only, n_labeled); }
double TaskStats::mean_trace_len() const { return ratio(trace_len_total, traces); }
double TaskStats::mean_candidates_executed() const { return ratio(candidates_executed_total, n_samples); }

void TaskStats::add(const SampleResult& r) {
    ++n_samples;
    if (r.sample.labeled()) ++n_labeled;
    if (r.error) {
        ++errors;
        return;
    }
    if (r.top1_correct) ++top1_correct;
    candidates_executed_total += r.outcome.candidates_executed;
    switch (r.outcome.status) {
        case FilterStatus::SelectedProgram: ++selected; break;
        case FilterStatus::LabelOnly: ++label_only; break;
        case FilterStatus::UnlabeledTop: ++unlabeled_top; break;
        case FilterStatus::GenerationFailed: ++generation_failed; break;
    }
    if (r.outcome.status == FilterStatus::SelectedProgram || r.outcome.status == FilterStatus::UnlabeledTop) {
        trace_len_total += r.outcome.trace.entries.size();
        ++traces;
    }
    for (const auto& rec : r.records) {
        if (rec.objective == Objective::Label) {
            ++label_records;
        } else {
            ++rationale_records;
        }
    }
}

ojson TaskStats::to_json() const {
    return ojson{
        {"n_samples", n_samples},
        {"n_labeled", n_labeled},
        {"success_at_1", success_at_1()},
        {"success_at_k", success_at_k()},
        {"label_only_fraction", label_only_fraction()},
        {"mean_trace_len", mean_trace_len()},
        {"mean_candidates_executed", mean_candidates_executed()},
        {"selected_program", selected},
        {"label_only", label_only},
        {"unlabeled_top", unlabeled_top},
        {"generation_failed", generation_failed},
        {"errors", errors},
        {"label_records", label_records},
        {"rationale_records", rationale_records},
    };
}

ojson PipelineReport::to_json() const {
    ojson tasks = ojson::object();
    for (const auto& [name, stats] : per_task) tasks[name] = stats.to_json();
    const ReferenceDeltas ref;
    ojson j = {
        {"format", "vpsynth-report/1"},
        {"config", config},
        {"overall", overall.to_json()},
        {"per_task", tasks},
        {"reference_success_deltas",
         {{"gqa", ref.gqa}, {"aokvqa", ref.aokvqa}, {"okvqa", ref.okvqa}, {"tallyqa", ref.tallyqa},
          {"note", "published large-scale gains from 1 to 5 programs; not reproduced here"}}},
        {"sample_errors", sample_errors},
    };
    if (wall_time_seconds) j["wall_time_seconds"] = *wall_time_seconds;
    return j;
}

std::string PipelineReport::pretty() const { return pretty_report(to_json()); }

std::string pretty_report(const ojson& report) {
    auto num = [](const ojson& j, const char* key) -> double {
        const auto it = j.find(key);
        return it != j.end() && it->is_number() ? it->get<double>() : 0.0;
    };
    auto row = [&](const std::string& name, const ojson& s) {
        return fmt::format("{:<16} {:>7} {:>7} {:>8.3f} {:>8.3f} {:>9.3f} {:>9.2f} {:>7}\n", name,
                           static_cast<long>(num(s, "n_samples")), static_cast<long>(num(s, "n_labeled")),
                           num(s, "success_at_1"), num(s, "success_at_k"), num(s, "label_only_fraction"),
                           num(s, "mean_trace_len"), static_cast<long>(num(s, "errors")));
    };
    std::string out;
    if (report.contains("config")) {
        const auto& c = report["config"];
        out += fmt::format("seed {}  k {}  T {}  mode {}  corruption {}\n", c.value("global_seed", 0ULL),
                           c.value("k", 0), c.value("temperature", 0.0), c.value("mode", std::string("?")),
                           c.value("corruption_rate", 0.0));
    }
    out += fmt::format("{:<16} {:>7} {:>7} {:>8} {:>8} {:>9} {:>9} {:>7}\n", "task", "samples", "labeled",
                       "succ@1", "succ@k", "label_only", "trace_len", "errors");
    if (report.contains("per_task")) {
        for (const auto& [name, s] : report["per_task"].items()) out += row(name, s);
    }
    if (report.contains("overall")) out += row("overall", report["overall"]);
    if (report.contains("overall")) {
        const auto& o = report["overall"];
        out += fmt::format("records: {} label, {} rationale\n", static_cast<long>(num(o, "label_records")),
                           static_cast<long>(num(o, "rationale_records")));
    }
    if (report.contains("wall_time_seconds")) {
        out += fmt::format("wall time: {:.2f} s\n", report["wall_time_seconds"].get<double>());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch driver

PipelineRun run_pipeline(const Corpus& corpus, const PipelineConfig& config, const PipelineServices& services) {
    config.validate();
    if (config.offline && (services.generator || services.judge || services.rationale_renderer)) {
        throw ConfigError("offline run was given network services");
    }
    const auto started = std::chrono::steady_clock::now();

    struct Job {
        const SceneGraph* scene;
        const Sample* sample;
    };
    std::vector<Job> jobs;
    for (const auto& entry : corpus.entries) {
        for (const auto& s : entry.samples) jobs.push_back({&entry.scene, &s});
    }
    std::sort(jobs.begin(), jobs.end(),
              [](const Job& a, const Job& b) { return a.sample->sample_id < b.sample->sample_id; });

    std::vector<SampleResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            results[i] = process_sample(*jobs[i].scene, *jobs[i].sample, config, services);
        }
    };
    const auto n_threads = std::min(config.workers, std::max<std::size_t>(jobs.size(), 1));
    if (n_threads <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    }

    PipelineRun run;
    run.report.config = config.echo();
    for (auto& r : results) {
        run.report.overall.add(r);
        run.report.per_task[std::string(to_string(r.sample.task))].add(r);
        if (r.error) run.report.sample_errors.push_back(r.sample.sample_id + ": " + *r.error);
        run.records.insert(run.records.end(), r.records.begin(), r.records.end());
    }
    if (config.report_wall_time) {
        run.report.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    run.samples = std::move(results);
    return run;
}

PipelineRun run_pipeline_to_files(const Corpus& corpus, const PipelineConfig& config,
                                  const PipelineServices& services) {
    if (config.output.empty()) throw ConfigError("no output path");
    auto run = run_pipeline(corpus, config, services);
    write_jsonl(run.records, config.output);
    std::ofstream f(config.report_path(), std::ios::binary | std::ios::trunc);
    if (!f) throw DatasetError("cannot open " + config.report_path().string() + " for writing");
    f << run.report.to_json().dump(2) << '\n';
    if (!f) throw DatasetError("write to " + config.report_path().string() + " failed");
    return run;
}

// ---------------------------------------------------------------------------
// Scoring

std::optional<Metric> metric_from_string(std::string_view s) {
    if (s == "em" || s == "EM") return Metric::EM;
    if (s == "vqa" || s == "vqascore" || s == "VQAScore") return Metric::VQAScore;
    return std::nullopt;
}

double score_answers(const std::vector<std::string>& predictions,
                     const std::vector<std::vector<std::string>>& references, Metric metric) {
    if (predictions.size() != references.size()) {
        throw std::invalid_argument(fmt::format("{} predictions but {} references", predictions.size(),
                                                references.size()));
    }
    if (predictions.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& refs = references[i];
        if (refs.empty()) throw std::invalid_argument(fmt::format("item {} has no reference answers", i));
        if (metric == Metric::EM) {
            total += string_rules_match(predictions[i], refs.front()) ? 1.0 : 0.0;
        } else {
            const auto hits = std::count_if(refs.begin(), refs.end(),
                                            [&](const std::string& g) { return string_rules_match(predictions[i], g); });
            total += std::min(1.0, static_cast<double>(hits) / 3.0);
        }
    }
    return total / static_cast<double>(predictions.size());
}

}  // namespace vps
