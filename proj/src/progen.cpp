#include "vpsynth/progen.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "vpsynth/prompts.hpp"
#include "vpsynth/rng.hpp"

namespace vps {

namespace {

class Source {
public:
    Source& line(int depth, const std::string& text) {
        out_.append(static_cast<std::size_t>(depth) * 4, ' ');
        out_ += text;
        out_ += '\n';
        return *this;
    }
    std::string str() const { return out_; }

private:
    std::string out_;
};

std::string lit(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\\' || c == '\'') out += '\\';
        out += c;
    }
    return out + "'";
}

std::string ident(std::string_view category) {
    std::string out;
    for (char c : category) {
        out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
    }
    if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0]))) out = "obj_" + out;
    return out;
}

std::string letter(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

constexpr std::string_view kDef = "def execute_command(image):";
constexpr std::string_view kLeftHalf = "left_half = image.crop(image.left, image.top, int(image.center_x), image.bottom)";

// Knobs shared by the per-kind builders. Each corruption flips one of them.
struct Variant {
    bool drop_filter = false;
    bool invert = false;
    bool left_half = false;
    int off_by = 0;
};

std::string filter_expr(const std::string& patch, const StructuredQuery& q, bool invert) {
    std::string out;
    for (std::size_t i = 0; i < q.attributes.size(); ++i) {
        if (i) out += " and ";
        out += patch + ".verify_property(" + lit(q.category) + ", " + lit(q.attributes[i]) + ")";
    }
    if (invert) out = q.attributes.size() > 1 ? "not (" + out + ")" : "not " + out;
    return out;
}

std::string count_program(const StructuredQuery& q, Variant v) {
    const std::string var = ident(q.category);
    Source s;
    s.line(0, std::string(kDef));
    std::string region = "image";
    if (v.left_half) {
        s.line(1, std::string(kLeftHalf));
        region = "left_half";
    }
    s.line(1, var + "_patches = " + region + ".find(" + lit(q.category) + ")");
    const std::string plus = v.off_by ? " + " + std::to_string(v.off_by) : "";
    if (q.attributes.empty() || v.drop_filter) {
        s.line(1, "return str(len(" + var + "_patches)" + plus + ")");
        return s.str();
    }
    s.line(1, "count = 0");
    s.line(1, "for " + var + "_patch in " + var + "_patches:");
    s.line(2, "if " + filter_expr(var + "_patch", q, v.invert) + ":");
    s.line(3, "count += 1");
    s.line(1, "return str(count" + plus + ")");
    return s.str();
}

std::string exists_program(const StructuredQuery& q, Variant v) {
    const std::string var = ident(q.category);
    Source s;
    s.line(0, std::string(kDef));
    std::string region = "image";
    if (v.left_half) {
        s.line(1, std::string(kLeftHalf));
        region = "left_half";
    }
    if (v.off_by) {
        // threshold off by one: "more than one" instead of "at least one"
        s.line(1, var + "_patches = " + region + ".find(" + lit(q.category) + ")");
        if (q.attributes.empty() || v.drop_filter) {
            s.line(1, "return bool_to_yesno(len(" + var + "_patches) > " + std::to_string(v.off_by) + ")");
            return s.str();
        }
        s.line(1, "count = 0");
        s.line(1, "for " + var + "_patch in " + var + "_patches:");
        s.line(2, "if " + filter_expr(var + "_patch", q, v.invert) + ":");
        s.line(3, "count += 1");
        s.line(1, "return bool_to_yesno(count > " + std::to_string(v.off_by) + ")");
        return s.str();
    }
    if (q.attributes.empty() || v.drop_filter) {
        const std::string call = region + ".exists(" + lit(q.category) + ")";
        s.line(1, "return bool_to_yesno(" + std::string(v.invert ? "not " : "") + call + ")");
        return s.str();
    }
    s.line(1, var + "_patches = " + region + ".find(" + lit(q.category) + ")");
    s.line(1, "for " + var + "_patch in " + var + "_patches:");
    s.line(2, "if " + filter_expr(var + "_patch", q, v.invert) + ":");
    s.line(3, "return 'yes'");
    s.line(1, "return 'no'");
    return s.str();
}

std::string attribute_program(const StructuredQuery& q, std::string_view mode) {
    const std::string var = ident(q.category);
    const std::string question = "What " + q.attribute_type + " is this?";
    Source s;
    s.line(0, std::string(kDef));
    if (mode == "whole_image_query") {
        s.line(1, "return image.simple_query(" + lit(question) + ")");
        return s.str();
    }
    std::string region = "image";
    if (mode == "left_half_crop") {
        s.line(1, std::string(kLeftHalf));
        region = "left_half";
    }
    s.line(1, var + "_patches = " + region + ".find(" + lit(q.category) + ")");
    s.line(1, var + "_patch = " + var + "_patches[0]");
    std::string asked = question;
    if (mode == "wrong_attribute_type") {
        asked = q.attribute_type == "color" ? "What material is this?" : "What color is this?";
    } else if (mode == "category_query") {
        asked = "What is this?";
    }
    s.line(1, "return " + var + "_patch.simple_query(" + lit(asked) + ")");
    return s.str();
}

struct Axis {
    std::string attr;
    std::string cmp;
    std::string near_edge;  // for the edge-comparison variant: a.<near_edge> cmp b.<far_edge>
    std::string far_edge;
};

Axis spatial_axis(RelationName r) {
    switch (r) {
        case RelationName::LeftOf: return {"center_x", "<", "right", "left"};
        case RelationName::RightOf: return {"center_x", ">", "left", "right"};
        case RelationName::Above: return {"center_y", "<", "bottom", "top"};
        default: return {"center_y", ">", "top", "bottom"};
    }
}

std::string flip(const std::string& cmp) { return cmp == "<" ? ">" : "<"; }

std::string spatial_program(const StructuredQuery& q, std::string_view mode) {
    const std::string a = ident(q.category) + "_patch";
    const std::string b = ident(q.other_category) + "_patch";
    const Axis axis = spatial_axis(q.relation);
    Source s;
    s.line(0, std::string(kDef));
    std::string region = "image";
    if (mode == "left_half_crop") {
        s.line(1, std::string(kLeftHalf));
        region = "left_half";
    }
    s.line(1, a + " = " + region + ".find(" + lit(q.category) + ")[0]");
    s.line(1, b + " = image.find(" + lit(q.other_category) + ")[0]");
    std::string cond;
    if (mode == "wrong_direction") {
        cond = a + "." + axis.attr + " " + flip(axis.cmp) + " " + b + "." + axis.attr;
    } else if (mode == "wrong_axis") {
        const std::string other = axis.attr == "center_x" ? "center_y" : "center_x";
        cond = a + "." + other + " " + axis.cmp + " " + b + "." + other;
    } else if (mode == "edge_comparison") {
        cond = a + "." + axis.near_edge + " " + axis.cmp + " " + b + "." + axis.far_edge;
    } else {
        cond = a + "." + axis.attr + " " + axis.cmp + " " + b + "." + axis.attr;
    }
    s.line(1, "if " + cond + ":");
    s.line(2, "return 'yes'");
    s.line(1, "return 'no'");
    return s.str();
}

std::string depth_program(const StructuredQuery& q, std::string_view mode) {
    const std::string a = ident(q.category) + "_patch";
    const std::string b = ident(q.other_category) + "_patch";
    Source s;
    s.line(0, std::string(kDef));
    std::string region = "image";
    if (mode == "left_half_crop") {
        s.line(1, std::string(kLeftHalf));
        region = "left_half";
    }
    s.line(1, a + " = " + region + ".find(" + lit(q.category) + ")[0]");
    s.line(1, b + " = image.find(" + lit(q.other_category) + ")[0]");
    std::string cond = a + ".compute_depth() < " + b + ".compute_depth()";
    if (mode == "wrong_direction") cond = a + ".compute_depth() > " + b + ".compute_depth()";
    if (mode == "size_heuristic") cond = a + ".bottom > " + b + ".bottom";
    if (mode == "image_depth_baseline") cond = a + ".compute_depth() < image.compute_depth()";
    s.line(1, "if " + cond + ":");
    s.line(2, "return " + lit(q.category));
    s.line(1, "return " + lit(q.other_category));
    return s.str();
}

std::string choice_program(const StructuredQuery& q, std::string_view mode) {
    const std::string var = ident(q.category);
    const std::size_t n = q.options.size();
    auto answer_letter = [&](std::size_t i) { return letter(mode == "shifted_letter" ? (i + 1) % n : i); };
    Source s;
    s.line(0, std::string(kDef));
    if (mode == "first_option") {
        s.line(1, "return 'A'");
        return s.str();
    }
    std::string region = "image";
    if (mode == "left_half_crop") {
        s.line(1, std::string(kLeftHalf));
        region = "left_half";
    }
    if (q.base == QueryKind::Attribute) {
        s.line(1, var + "_patch = " + region + ".find(" + lit(q.category) + ")[0]");
        const std::string neg = mode == "inverted_filter" ? "not " : "";
        for (std::size_t i = 0; i + 1 < n; ++i) {
            s.line(1, "if " + neg + var + "_patch.verify_property(" + lit(q.category) + ", " + lit(q.options[i]) + "):");
            s.line(2, "return " + lit(answer_letter(i)));
        }
    } else {
        s.line(1, var + "_patches = " + region + ".find(" + lit(q.category) + ")");
        const std::string plus = mode == "off_by_one" ? " + 1" : "";
        s.line(1, "answer = str(len(" + var + "_patches)" + plus + ")");
        for (std::size_t i = 0; i + 1 < n; ++i) {
            s.line(1, "if answer == " + lit(q.options[i]) + ":");
            s.line(2, "return " + lit(answer_letter(i)));
        }
    }
    s.line(1, "return " + lit(answer_letter(n - 1)));
    return s.str();
}

std::string syntax_error_variant(const std::string& canonical) {
    std::string out = canonical;
    out.erase(kDef.size() - 1, 1);  // drop the colon after the signature
    return out;
}

std::string runtime_error_variant(const std::string& canonical, const StructuredQuery& q, int n) {
    std::string out = canonical;
    const std::string probe =
        "    probe = image.find(" + lit(q.category) + ")[" + std::to_string(1000 + n) + "]\n";
    out.insert(kDef.size() + 1, probe);
    return out;
}

std::vector<TemplateProgram> kind_corruptions(const StructuredQuery& q) {
    std::vector<TemplateProgram> out;
    switch (q.kind) {
        case QueryKind::Count:
            if (!q.attributes.empty()) {
                out.push_back({"drop_attribute", count_program(q, {.drop_filter = true})});
                out.push_back({"inverted_filter", count_program(q, {.invert = true})});
            }
            out.push_back({"left_half_crop", count_program(q, {.left_half = true})});
            out.push_back({"off_by_one", count_program(q, {.off_by = 1})});
            break;
        case QueryKind::Exists:
            if (!q.attributes.empty()) out.push_back({"drop_attribute", exists_program(q, {.drop_filter = true})});
            out.push_back({"inverted_filter", exists_program(q, {.invert = true})});
            out.push_back({"left_half_crop", exists_program(q, {.left_half = true})});
            out.push_back({"off_by_one", exists_program(q, {.off_by = 1})});
            break;
        case QueryKind::Attribute:
            for (const char* m : {"whole_image_query", "wrong_attribute_type", "left_half_crop", "category_query"}) {
                out.push_back({m, attribute_program(q, m)});
            }
            break;
        case QueryKind::Spatial:
            for (const char* m : {"wrong_direction", "wrong_axis", "left_half_crop", "edge_comparison"}) {
                out.push_back({m, spatial_program(q, m)});
            }
            break;
        case QueryKind::DepthCompare:
            for (const char* m : {"wrong_direction", "size_heuristic", "left_half_crop", "image_depth_baseline"}) {
                out.push_back({m, depth_program(q, m)});
            }
            break;
        case QueryKind::MultiChoice: {
            const char* first = q.base == QueryKind::Attribute ? "inverted_filter" : "off_by_one";
            for (const char* m : {first, "shifted_letter", "left_half_crop", "first_option"}) {
                out.push_back({m, choice_program(q, m)});
            }
            break;
        }
    }
    return out;
}

std::uint64_t source_key(const std::string& source) {
    auto parsed = vpl::parse(source);
    return parsed.ok() ? parsed->hash : fnv1a64(source);
}

}  // namespace

std::string_view to_string(GenMode m) { return m == GenMode::Llm ? "llm" : "template"; }

std::optional<GenMode> gen_mode_from_string(std::string_view s) {
    if (s == "template") return GenMode::Template;
    if (s == "llm") return GenMode::Llm;
    return std::nullopt;
}

void GenConfig::validate() const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
    if (!(corruption_rate >= 0.0 && corruption_rate <= 1.0)) {
        throw std::invalid_argument("corruption_rate must lie in [0, 1]");
    }
}

std::uint64_t Candidate::hash() const { return parse_result.ok() ? parse_result->hash : fnv1a64(source); }

std::string canonical_program(const StructuredQuery& q) {
    switch (q.kind) {
        case QueryKind::Count: return count_program(q, {});
        case QueryKind::Exists: return exists_program(q, {});
        case QueryKind::Attribute: return attribute_program(q, "canonical");
        case QueryKind::Spatial: return spatial_program(q, "canonical");
        case QueryKind::DepthCompare: return depth_program(q, "canonical");
        case QueryKind::MultiChoice: return choice_program(q, "canonical");
    }
    return {};
}

std::vector<TemplateProgram> template_catalog(const StructuredQuery& q, std::size_t n_corruptions) {
    const std::string canonical = canonical_program(q);
    std::vector<TemplateProgram> out{{"canonical", canonical}};
    std::set<std::uint64_t> seen{source_key(canonical)};
    auto offer = [&](TemplateProgram t) {
        if (out.size() > n_corruptions) return;
        if (seen.insert(source_key(t.source)).second) out.push_back(std::move(t));
    };
    for (auto& t : kind_corruptions(q)) offer(std::move(t));
    offer({"syntax_error", syntax_error_variant(canonical)});
    for (int n = 0; out.size() <= n_corruptions; ++n) {
        offer({"runtime_error_" + std::to_string(n), runtime_error_variant(canonical, q, n)});
    }
    return out;
}

std::size_t template_pool_size(int k) { return static_cast<std::size_t>(std::max(k, 5)); }

namespace {

void finalize(std::vector<Candidate>& cs, std::size_t k) {
    std::stable_sort(cs.begin(), cs.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.hash() < b.hash();
    });
    if (cs.size() > k) cs.resize(k);
    for (std::size_t i = 0; i < cs.size(); ++i) cs[i].rank = static_cast<int>(i + 1);
}

CandidateSet template_candidates(const Sample& sample, const GenConfig& config) {
    const std::size_t pool = template_pool_size(config.k);
    const auto catalog = template_catalog(sample.query, pool - 1);
    Rng rng(mix_seed(config.seed, "progen", sample.sample_id));

    // slot -> catalog index; the canonical program leads unless corrupted
    std::vector<std::size_t> slot_of(pool);
    const std::size_t canonical_slot = rng.bernoulli(config.corruption_rate) ? 1 + rng.index(pool - 1) : 0;
    std::vector<std::size_t> corrupt(pool - 1);
    std::iota(corrupt.begin(), corrupt.end(), 1);
    rng.shuffle(corrupt);
    for (std::size_t slot = 0, next = 0; slot < pool; ++slot) {
        slot_of[slot] = slot == canonical_slot ? 0 : corrupt[next++];
    }
    std::vector<double> scores(pool);
    for (auto& s : scores) s = rng.uniform();
    std::sort(scores.begin(), scores.end(), std::greater<>());

    CandidateSet set;
    for (std::size_t slot = 0; slot < pool; ++slot) {
        const auto& t = catalog[slot_of[slot]];
        Candidate c;
        c.source = t.source;
        c.origin = t.name;
        c.score = scores[slot];
        c.parse_result = vpl::parse(t.source);
        set.candidates.push_back(std::move(c));
    }
    finalize(set.candidates, static_cast<std::size_t>(config.k));
    return set;
}

CandidateSet llm_candidates(const Sample& sample, const GenConfig& config, LlmClient& llm, std::string_view caption) {
    CandidateSet set;
    const auto prompt = PromptTemplate::load(config.prompt_template_path)
                            .fill({{"tool_api_description", read_asset(config.tool_api_path)},
                                   {"query", sample.query_text},
                                   {"caption", std::string(caption)}});
    std::vector<Completion> completions;
    try {
        completions = llm.complete(prompt, config.k, config.temperature);
    } catch (const LlmError& e) {
        spdlog::warn("program generation for {} failed: {}", sample.sample_id, e.what());
        set.generation_failed = true;
        set.failure = e.what();
        return set;
    }
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < completions.size(); ++i) {
        Candidate c;
        c.source = vpl::extract_code(completions[i].text);
        c.parse_result = vpl::parse(c.source);
        c.origin = "llm";
        c.score = completions[i].logprob_sum ? *completions[i].logprob_sum : -static_cast<double>(i + 1);
        if (!seen.insert(c.hash()).second) continue;
        set.candidates.push_back(std::move(c));
    }
    finalize(set.candidates, static_cast<std::size_t>(config.k));
    return set;
}

}  // namespace

CandidateSet generate_candidates(const Sample& sample, const GenConfig& config, LlmClient* llm,
                                 std::string_view caption) {
    config.validate();
    if (config.mode == GenMode::Template) return template_candidates(sample, config);
    if (!llm) throw std::invalid_argument("llm mode needs an LLM client");
    return llm_candidates(sample, config, *llm, caption);
}

}  // namespace vps
