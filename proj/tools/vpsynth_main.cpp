#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vpsynth/cot.hpp"
#include "vpsynth/harness.hpp"
#include "vpsynth/interpreter.hpp"
#include "vpsynth/prompts.hpp"
#include "vpsynth/vpl.hpp"

namespace {

enum Exit : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kConfig = 3,
    kMissingFile = 4,
    kData = 5,
    kParse = 6,
};

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, std::string message) { throw CliError{code, std::move(message)}; }

void require_file(const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::is_regular_file(p)) fail(kMissingFile, std::string(what) + " not found: " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) fail(kMissingFile, "cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<vps::QueryKind> parse_mix(const std::string& text) {
    std::vector<vps::QueryKind> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto k = vps::query_kind_from_string(item);
        if (!k) fail(kConfig, "unknown query kind '" + item + "'");
        out.push_back(*k);
    }
    if (out.empty()) fail(kConfig, "empty --mix");
    return out;
}

std::shared_ptr<const vps::Vocabulary> load_vocabulary(const std::filesystem::path& assets) {
    const auto path = assets / "vocab_v1.txt";
    require_file(path, "vocabulary asset");
    return std::make_shared<const vps::Vocabulary>(vps::Vocabulary::load(path));
}

// ---------------------------------------------------------------------------

struct GenScenesArgs {
    std::uint64_t seed = 0;
    std::size_t n = 500;
    std::string out;
    std::string mix;
    std::size_t unlabeled_every = 0;
    int width = 640;
    int height = 480;
    std::string assets;
};

int cmd_gen_scenes(const GenScenesArgs& a) {
    vps::CorpusGenConfig cfg;
    cfg.seed = a.seed;
    cfg.n_samples = a.n;
    if (!a.mix.empty()) cfg.mix = parse_mix(a.mix);
    cfg.unlabeled_every = a.unlabeled_every;
    cfg.scene.width = a.width;
    cfg.scene.height = a.height;
    cfg.scene.vocabulary = load_vocabulary(a.assets.empty() ? vps::assets_dir() : std::filesystem::path(a.assets));
    const auto corpus = vps::generate_corpus(cfg);
    vps::write_corpus(corpus, a.out);
    std::printf("wrote %zu samples to %s\n", corpus.sample_count(), a.out.c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    vps::PipelineConfig config;
    std::string mode = "template";
    std::string backend = "oracle";
};

int cmd_synth(SynthArgs a) {
    auto& cfg = a.config;
    const auto mode = vps::gen_mode_from_string(a.mode);
    if (!mode) fail(kConfig, "unknown --mode '" + a.mode + "'");
    cfg.mode = *mode;
    if (a.backend == "oracle") {
        cfg.backend = vps::ToolBackendKind::Oracle;
    } else if (a.backend == "remote") {
        cfg.backend = vps::ToolBackendKind::Remote;
    } else {
        fail(kConfig, "unknown --backend '" + a.backend + "'");
    }
    try {
        cfg.validate();
    } catch (const vps::ConfigError& e) {
        fail(kConfig, e.what());
    }
    vps::set_offline(cfg.offline);
    require_file(cfg.corpus, "corpus");

    const auto corpus = vps::read_corpus(cfg.corpus);
    const auto services = vps::make_services(cfg);
    const auto run = vps::run_pipeline_to_files(corpus, cfg, services);
    std::cout << run.report.pretty();
    std::cout << "wrote " << run.records.size() << " records to " << cfg.output.string() << ", report "
              << cfg.report_path().string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct ExecArgs {
    std::string program;
    std::string scene;
    std::string corpus;
    std::uint64_t seed = 0;
    bool json = false;
    std::string assets;
};

// Scenes are named s_NNNN by gen-scenes; without a corpus the scene is
// regenerated from --seed with the default corpus settings.
vps::CorpusEntry locate_scene(const ExecArgs& a, const std::shared_ptr<const vps::Vocabulary>& vocab) {
    if (!a.corpus.empty()) {
        require_file(a.corpus, "corpus");
        const auto corpus = vps::read_corpus(a.corpus);
        for (const auto& e : corpus.entries) {
            if (e.scene.scene_id == a.scene) return e;
        }
        fail(kData, "scene " + a.scene + " is not in " + a.corpus);
    }
    unsigned idx = 0;
    char tail = 0;
    if (std::sscanf(a.scene.c_str(), "s_%u%c", &idx, &tail) != 1) {
        fail(kUsage, "scene id must look like s_0007 when no --corpus is given");
    }
    vps::CorpusGenConfig cfg;
    cfg.seed = a.seed;
    cfg.n_samples = idx + 1;
    cfg.scene.vocabulary = vocab;
    auto corpus = vps::generate_corpus(cfg);
    return corpus.entries.back();
}

int cmd_exec(const ExecArgs& a) {
    require_file(a.program, "program");
    const auto source = read_text(a.program);
    auto parsed = vps::vpl::parse(source);
    if (!parsed) fail(kParse, a.program + ": " + parsed.error().to_string());

    vps::set_offline(true);
    vps::PipelineConfig cfg;
    cfg.global_seed = a.seed;
    cfg.offline = true;
    if (!a.assets.empty()) cfg.assets = a.assets;
    const auto vocab = load_vocabulary(cfg.assets_root());
    const auto entry = locate_scene(a, vocab);
    const auto services = vps::make_services(cfg);

    const auto tools = vps::ToolRegistry::standard(services.backend_for(entry.scene));
    const auto run = vps::execute(*parsed, vps::VisualInput::of(entry.scene), tools);
    const std::string query = entry.samples.empty() ? std::string() : entry.samples.front().query_text;

    if (a.json) {
        std::cout << run.trace.to_json().dump(2) << "\n";
        return run.result ? kOk : kFailure;
    }
    std::cout << "scene: " << entry.scene.scene_id << " (" << entry.scene.width << "x" << entry.scene.height
              << ")\n";
    if (!query.empty()) std::cout << "query: " << query << "\n";
    std::cout << "trace (" << run.trace.entries.size() << " entries):\n" << run.trace.dump();
    if (!run.result) return kFailure;
    std::cout << "result: " << *run.result << "\n";
    const auto rationale = vps::render_rationale_template(run.trace, query, *run.result);
    std::cout << "rationale: " << rationale.text << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
    std::string pred;
    std::string gold;
    std::string metric = "em";
};

std::map<std::string, std::vector<std::string>> read_answers(const std::string& path, bool many) {
    require_file(path, "answer file");
    std::map<std::string, std::vector<std::string>> out;
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = vps::ojson::parse(line, nullptr, false);
        const auto where = path + ":" + std::to_string(line_no);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string()) {
            fail(kData, where + ": expected an object with a string \"id\"");
        }
        std::vector<std::string> answers;
        if (many && j.contains("answers") && j["answers"].is_array()) {
            for (const auto& a : j["answers"]) {
                if (!a.is_string()) fail(kData, where + ": answers must be strings");
                answers.push_back(a.get<std::string>());
            }
        } else if (j.contains("answer") && j["answer"].is_string()) {
            answers.push_back(j["answer"].get<std::string>());
        } else if (j.contains("target") && j["target"].is_string()) {
            answers.push_back(j["target"].get<std::string>());
        } else {
            fail(kData, where + ": no answer field");
        }
        if (!out.emplace(j["id"].get<std::string>(), std::move(answers)).second) {
            fail(kData, where + ": duplicate id");
        }
    }
    return out;
}

int cmd_score(const ScoreArgs& a) {
    const auto metric = vps::metric_from_string(a.metric);
    if (!metric) fail(kConfig, "unknown --metric '" + a.metric + "'");
    const auto preds = read_answers(a.pred, false);
    const auto golds = read_answers(a.gold, true);
    std::vector<std::string> p;
    std::vector<std::vector<std::string>> g;
    for (const auto& [id, refs] : golds) {
        const auto it = preds.find(id);
        if (it == preds.end()) fail(kData, "no prediction for id " + id);
        p.push_back(it->second.front());
        g.push_back(refs);
    }
    if (preds.size() != golds.size()) fail(kData, "prediction ids without a gold answer");
    std::printf("%s %.4f over %zu items\n", a.metric.c_str(), vps::score_answers(p, g, *metric), p.size());
    return kOk;
}

int cmd_report(const std::string& path) {
    require_file(path, "report");
    const auto j = vps::ojson::parse(read_text(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(kData, path + ": not a JSON report");
    std::cout << vps::pretty_report(j);
    return kOk;
}

void add_noise_flags(CLI::App* cmd, vps::NoiseConfig& n) {
    cmd->add_option("--p-miss", n.p_miss, "Probability a detection is dropped");
    cmd->add_option("--p-false-positive", n.p_false_positive, "Probability of a spurious detection");
    cmd->add_option("--p-attr-flip", n.p_attr_flip, "Probability verify_property flips");
    cmd->add_option("--p-vqa-error", n.p_vqa_error, "Probability simple_query answers wrongly");
    cmd->add_option("--p-depth-jitter", n.p_depth_jitter, "Probability a depth reading is jittered");
    cmd->add_option("--depth-jitter-sigma", n.depth_jitter_sigma, "Std-dev of depth jitter");
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("vpsynth"));
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"Synthesizes chain-of-thought training data from visual programs"};
    app.set_config("--config", "", "Config file (key = value, [subcommand] sections); flags win");
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    GenScenesArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-scenes", "Generate a synthetic scene/query corpus");
    gen_cmd->add_option("--seed", gen.seed, "Corpus seed");
    gen_cmd->add_option("--n", gen.n, "Number of samples");
    gen_cmd->add_option("--out", gen.out, "Output corpus JSONL")->required();
    gen_cmd->add_option("--mix", gen.mix, "Comma-separated query kinds, e.g. count,exists");
    gen_cmd->add_option("--unlabeled-every", gen.unlabeled_every, "Drop the gold answer of every n-th sample");
    gen_cmd->add_option("--width", gen.width, "Image width");
    gen_cmd->add_option("--height", gen.height, "Image height");
    gen_cmd->add_option("--assets", gen.assets, "Assets directory");

    SynthArgs synth;
    auto& sc = synth.config;
    std::string corpus_path, out_path, report_path, assets_path;
    auto* synth_cmd = app.add_subcommand("synth", "Run the data synthesis pipeline over a corpus");
    synth_cmd->add_option("--corpus", corpus_path, "Corpus JSONL from gen-scenes")->required();
    synth_cmd->add_option("--out", out_path, "Output training JSONL")->required();
    synth_cmd->add_option("--report", report_path, "Report path (default <out>.report.json)");
    synth_cmd->add_option("--seed", sc.global_seed, "Global seed");
    synth_cmd->add_option("--k", sc.k, "Candidate programs per query");
    synth_cmd->add_option("--temperature", sc.temperature, "Sampling temperature");
    synth_cmd->add_option("--mode", synth.mode, "template or llm");
    synth_cmd->add_option("--corruption-rate", sc.corruption_rate, "Template mode: chance the canonical program is not ranked first");
    synth_cmd->add_flag("--offline", sc.offline, "Forbid all network access");
    synth_cmd->add_option("--workers", sc.workers, "Worker threads");
    synth_cmd->add_option("--step-budget", sc.step_budget, "Interpreter step budget per program");
    synth_cmd->add_option("--backend", synth.backend, "oracle or remote");
    synth_cmd->add_option("--tools-url", sc.tools_url, "Base URL of the remote tool service");
    synth_cmd->add_option("--llm-base-url", sc.llm_base_url, "OpenAI-compatible endpoint");
    synth_cmd->add_option("--llm-model", sc.llm_model, "Model name");
    synth_cmd->add_option("--llm-api-key-env", sc.llm_api_key_env, "Environment variable holding the API key");
    synth_cmd->add_flag("--judge", sc.use_judge, "Use the LLM answer judge after string rules fail");
    synth_cmd->add_flag("--llm-rationales", sc.llm_rationales, "Render rationales with the LLM");
    synth_cmd->add_flag("--wall-time", sc.report_wall_time, "Include wall time in the report");
    synth_cmd->add_option("--assets", assets_path, "Assets directory");
    add_noise_flags(synth_cmd, sc.noise);

    ExecArgs ex;
    auto* exec_cmd = app.add_subcommand("exec", "Execute one program on one scene and print its trace");
    exec_cmd->add_option("program", ex.program, "Program file")->required();
    exec_cmd->add_option("--scene", ex.scene, "Scene id, e.g. s_0007")->required();
    exec_cmd->add_option("--corpus", ex.corpus, "Corpus to take the scene from");
    exec_cmd->add_option("--seed", ex.seed, "Corpus seed when no --corpus is given");
    exec_cmd->add_flag("--json", ex.json, "Print the trace as JSON");
    exec_cmd->add_option("--assets", ex.assets, "Assets directory");

    ScoreArgs score;
    auto* score_cmd = app.add_subcommand("score", "Score predictions against gold answers");
    score_cmd->add_option("--pred", score.pred, "Predictions JSONL ({id, answer})")->required();
    score_cmd->add_option("--gold", score.gold, "Gold JSONL ({id, answer} or {id, answers})")->required();
    score_cmd->add_option("--metric", score.metric, "em or vqa");

    std::string report_file;
    auto* report_cmd = app.add_subcommand("report", "Pretty-print a pipeline report");
    report_cmd->add_option("report", report_file, "Report JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::FileError& e) {
        std::cerr << "vpsynth: " << e.what() << "\n";
        return kMissingFile;
    } catch (const CLI::ConfigError& e) {
        std::cerr << "vpsynth: config: " << e.what() << "\n";
        return kConfig;
    } catch (const CLI::ParseError& e) {
        std::cerr << "vpsynth: " << e.what() << "\n";
        return kUsage;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*gen_cmd) return cmd_gen_scenes(gen);
        if (*synth_cmd) {
            sc.corpus = corpus_path;
            sc.output = out_path;
            sc.report = report_path;
            sc.assets = assets_path;
            return cmd_synth(std::move(synth));
        }
        if (*exec_cmd) return cmd_exec(ex);
        if (*score_cmd) return cmd_score(score);
        if (*report_cmd) return cmd_report(report_file);
    } catch (const CliError& e) {
        std::cerr << "vpsynth: " << e.message << "\n";
        return e.code;
    } catch (const vps::ConfigError& e) {
        std::cerr << "vpsynth: config: " << e.what() << "\n";
        return kConfig;
    } catch (const vps::OfflineError& e) {
        std::cerr << "vpsynth: offline: " << e.what() << "\n";
        return kConfig;
    } catch (const vps::AssetError& e) {
        std::cerr << "vpsynth: asset: " << e.what() << "\n";
        return kMissingFile;
    } catch (const vps::ScenegraphError& e) {
        std::cerr << "vpsynth: corpus: " << e.what() << "\n";
        return kData;
    } catch (const vps::DatasetError& e) {
        std::cerr << "vpsynth: dataset: " << e.what() << "\n";
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "vpsynth: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "vpsynth: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
