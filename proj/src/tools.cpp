#include "vpsynth/tools.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vpsynth/rng.hpp"
#include "vpsynth/vpl.hpp"

namespace vps {

namespace {

std::atomic<bool> g_offline{false};

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

const std::string& str_arg(const ToolCall& call, std::size_t i) {
    const auto& v = (*call.args)[i];
    if (!v.is<std::string>()) {
        throw TypeError(std::string(call.name) + " argument " + std::to_string(i + 1) +
                        " must be str, got " + std::string(type_name(v)));
    }
    return v.as<std::string>();
}

const PatchHandle& receiver(const ToolCall& call) {
    if (!call.receiver) throw TypeError(std::string(call.name) + " must be called on a patch");
    return *call.receiver;
}

int coordinate(const ToolCall& call, std::size_t i) {
    const auto& v = (*call.args)[i];
    double d = 0;
    if (v.is<std::int64_t>()) {
        d = static_cast<double>(v.as<std::int64_t>());
    } else if (v.is<double>()) {
        d = v.as<double>();
    } else {
        throw TypeError("crop coordinates must be numbers, got " + std::string(type_name(v)));
    }
    if (!std::isfinite(d)) throw TypeError("crop coordinate is not finite");
    return static_cast<int>(std::llround(std::clamp(d, -1e9, 1e9)));
}

}  // namespace

void set_offline(bool value) noexcept { g_offline.store(value); }
bool offline() noexcept { return g_offline.load(); }

Box clamp_box(const Box& box, const Box& parent) {
    return Box{std::clamp(box.x1, parent.x1, parent.x2), std::clamp(box.y1, parent.y1, parent.y2),
               std::clamp(box.x2, parent.x1, parent.x2), std::clamp(box.y2, parent.y1, parent.y2)};
}

void NoiseConfig::validate() const {
    const std::pair<const char*, double> probs[] = {
        {"p_miss", p_miss},           {"p_false_positive", p_false_positive},
        {"p_attr_flip", p_attr_flip}, {"p_vqa_error", p_vqa_error},
        {"p_depth_jitter", p_depth_jitter},
    };
    for (const auto& [name, p] : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
        }
    }
    if (!(depth_jitter_sigma >= 0.0)) throw std::invalid_argument("depth_jitter_sigma must be >= 0");
}

// ---------------------------------------------------------------------------
// Knowledge table

std::string KnowledgeTable::normalize_key(std::string_view question) {
    std::string out;
    bool space = false;
    for (char c : lower(question)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += c;
    }
    while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) || out.back() == ' ')) {
        out.pop_back();
    }
    return out;
}

KnowledgeTable KnowledgeTable::parse(std::string_view text) {
    KnowledgeTable table;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab + 1 >= line.size()) {
            throw std::runtime_error("knowledge table line " + std::to_string(lineno) +
                                     ": expected question<TAB>answer");
        }
        table.entries_[normalize_key(line.substr(0, tab))] = line.substr(tab + 1);
    }
    return table;
}

KnowledgeTable KnowledgeTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open knowledge table " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string KnowledgeTable::lookup(std::string_view question) const {
    auto it = entries_.find(normalize_key(question));
    return it == entries_.end() ? "unknown" : it->second;
}

// ---------------------------------------------------------------------------
// Oracle backend

OracleTools::OracleTools(const SceneGraph& scene, std::shared_ptr<const Vocabulary> vocab,
                         std::shared_ptr<const KnowledgeTable> knowledge, NoiseConfig noise)
    : scene_(scene), vocab_(std::move(vocab)), knowledge_(std::move(knowledge)), noise_(noise) {
    if (!vocab_) throw std::invalid_argument("oracle tools need a vocabulary");
    noise_.validate();
}

namespace {

std::string canonical_category(const Vocabulary& vocab, std::string_view category) {
    const std::string c = lower(category);
    if (vocab.has_category(c)) return c;
    std::string s = vocab.singular(c);
    return vocab.has_category(s) ? s : c;
}

}  // namespace

std::vector<const SceneObject*> OracleTools::objects_in(const Box& region, std::string_view category) const {
    std::vector<const SceneObject*> out;
    for (const auto& o : scene_.objects) {
        if (!category.empty() && o.category != category) continue;
        if (region.contains_point(o.box.center_x(), o.box.center_y())) out.push_back(&o);
    }
    return out;
}

const SceneObject* OracleTools::backing_object(const PatchHandle& patch) const {
    if (patch.object_id.empty() || starts_with(patch.object_id, "fp:")) return nullptr;
    return scene_.object(patch.object_id);
}

PatchList OracleTools::detect(const PatchHandle& region, const std::string& category, std::string_view tool,
                              std::size_t call_index) const {
    Rng rng(mix_seed(noise_.seed, scene_.scene_id, tool, call_index));
    const std::string cat = canonical_category(*vocab_, category);
    PatchList out;
    for (const SceneObject* o : objects_in(region.box, cat)) {
        if (rng.bernoulli(noise_.p_miss)) continue;
        PatchHandle p;
        p.patch_id = o->object_id;
        p.scene_ref = region.scene_ref;
        p.box = clamp_box(o->box, region.box);
        p.image_width = region.image_width;
        p.image_height = region.image_height;
        p.label = cat;
        p.object_id = o->object_id;
        if (p.box.valid()) out.push_back(std::move(p));
    }
    const int rw = region.box.x2 - region.box.x1;
    const int rh = region.box.y2 - region.box.y1;
    if (vocab_->has_category(cat) && rw >= 8 && rh >= 8 && rng.bernoulli(noise_.p_false_positive)) {
        const int w = static_cast<int>(rng.uniform_int(rw / 8, rw / 3));
        const int h = static_cast<int>(rng.uniform_int(rh / 8, rh / 3));
        const int x = region.box.x1 + static_cast<int>(rng.uniform_int(0, rw - w));
        const int y = region.box.y1 + static_cast<int>(rng.uniform_int(0, rh - h));
        PatchHandle p;
        p.patch_id = "fp:" + std::to_string(call_index);
        p.scene_ref = region.scene_ref;
        p.box = Box{x, y, x + w, y + h};
        p.image_width = region.image_width;
        p.image_height = region.image_height;
        p.label = cat;
        p.object_id = p.patch_id;
        out.push_back(std::move(p));
    }
    std::stable_sort(out.begin(), out.end(), [](const PatchHandle& a, const PatchHandle& b) {
        if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
        return a.box.y1 < b.box.y1;
    });
    return out;
}

PatchList OracleTools::find(const PatchHandle& region, const std::string& category, std::size_t call_index) {
    return detect(region, category, "find", call_index);
}

bool OracleTools::exists(const PatchHandle& region, const std::string& category, std::size_t call_index) {
    return !detect(region, category, "exists", call_index).empty();
}

bool OracleTools::verify_property(const PatchHandle& patch, const std::string& category,
                                  const std::string& property, std::size_t call_index) {
    Rng rng(mix_seed(noise_.seed, scene_.scene_id, "verify_property", call_index));
    const std::string cat = canonical_category(*vocab_, category);
    const std::string prop = lower(property);
    bool truth = false;
    if (starts_with(patch.object_id, "fp:")) {
        truth = false;
    } else if (const SceneObject* o = backing_object(patch); o && o->category == cat) {
        truth = o->has_attribute(prop);
    } else {
        for (const SceneObject* o : objects_in(patch.box, cat)) {
            if (o->has_attribute(prop)) truth = true;
        }
    }
    if (rng.bernoulli(noise_.p_attr_flip)) truth = !truth;
    return truth;
}

std::string OracleTools::simple_query(const PatchHandle& patch, const std::string& question,
                                      std::size_t call_index) {
    Rng rng(mix_seed(noise_.seed, scene_.scene_id, "simple_query", call_index));
    const std::string q = KnowledgeTable::normalize_key(question);

    const SceneObject* subject = backing_object(patch);
    if (!subject && !starts_with(patch.object_id, "fp:")) {
        long best = -1;
        for (const SceneObject* o : objects_in(patch.box, "")) {
            const long area = static_cast<long>(o->box.x2 - o->box.x1) * (o->box.y2 - o->box.y1);
            if (area > best) {
                best = area;
                subject = o;
            }
        }
    }
    const bool corrupt = rng.bernoulli(noise_.p_vqa_error);

    auto pick_other = [&](const std::vector<std::string>& pool, const std::string& truth) {
        std::vector<std::string> others;
        for (const auto& s : pool) {
            if (s != truth) others.push_back(s);
        }
        return others.empty() ? truth : others[rng.index(others.size())];
    };

    if (q == "what is this") {
        std::string truth = subject ? subject->category : (patch.label.empty() ? "nothing" : patch.label);
        if (!corrupt) return truth;
        std::vector<std::string> pool;
        for (const auto& c : vocab_->categories()) pool.push_back(c.name);
        return pick_other(pool, truth);
    }
    if (starts_with(q, "what ") && q.size() > 13 && q.substr(q.size() - 8) == " is this") {
        const std::string type = q.substr(5, q.size() - 13);
        const auto values = vocab_->attributes_of_type(type);
        if (values.empty()) return "unknown";
        std::string truth = "unknown";
        if (subject) {
            for (const auto& a : subject->attributes) {
                if (vocab_->attribute_type(a) == type) {
                    truth = a;
                    break;
                }
            }
        }
        if (!corrupt || truth == "unknown") return truth;
        return pick_other(values, truth);
    }
    if (starts_with(q, "how many ") && q.size() > 19 && q.substr(q.size() - 10) == " are there") {
        const std::string noun = q.substr(9, q.size() - 19);
        const std::string cat = canonical_category(*vocab_, noun);
        const auto n = static_cast<std::int64_t>(objects_in(patch.box, cat).size());
        if (!corrupt) return std::to_string(n);
        return std::to_string(n == 0 || rng.bernoulli(0.5) ? n + 1 : n - 1);
    }
    if (q == "describe the image") {
        std::map<std::string, int> counts;
        for (const SceneObject* o : objects_in(patch.box, "")) ++counts[o->category];
        if (counts.empty()) return "an empty picture";
        std::string out = "a picture with ";
        bool first = true;
        for (const auto& [cat, n] : counts) {
            if (!first) out += ", ";
            first = false;
            out += std::to_string(n) + " " + (n == 1 ? cat : vocab_->plural(cat));
        }
        return out;
    }
    return "unknown";
}

double OracleTools::compute_depth(const PatchHandle& patch, std::size_t call_index) {
    Rng rng(mix_seed(noise_.seed, scene_.scene_id, "compute_depth", call_index));
    double depth = 1.0;
    if (const SceneObject* o = backing_object(patch)) {
        depth = o->depth;
    } else if (!starts_with(patch.object_id, "fp:")) {
        std::vector<double> ds;
        for (const SceneObject* o : objects_in(patch.box, "")) ds.push_back(o->depth);
        std::sort(ds.begin(), ds.end());
        if (!ds.empty()) {
            const auto n = ds.size();
            depth = n % 2 ? ds[n / 2] : (ds[n / 2 - 1] + ds[n / 2]) / 2.0;
        }
    }
    if (rng.bernoulli(noise_.p_depth_jitter)) depth += rng.gaussian(0.0, noise_.depth_jitter_sigma);
    return depth;
}

std::string OracleTools::llm_query(const std::string& question, std::size_t) {
    return knowledge_ ? knowledge_->lookup(question) : "unknown";
}

// ---------------------------------------------------------------------------
// Registry

ToolRegistry ToolRegistry::standard(std::shared_ptr<ToolBackend> backend) {
    if (!backend) throw std::invalid_argument("tool registry needs a backend");
    ToolRegistry r;
    r.backend_ = backend;
    ToolBackend* b = backend.get();

    r.bind("find", [b](const ToolCall& c) { return Value(b->find(receiver(c), str_arg(c, 0), c.call_index)); }, true);
    r.bind("exists", [b](const ToolCall& c) { return Value(b->exists(receiver(c), str_arg(c, 0), c.call_index)); },
           true);
    r.bind("verify_property",
           [b](const ToolCall& c) {
               return Value(b->verify_property(receiver(c), str_arg(c, 0), str_arg(c, 1), c.call_index));
           },
           true);
    r.bind("simple_query",
           [b](const ToolCall& c) { return Value(b->simple_query(receiver(c), str_arg(c, 0), c.call_index)); }, true);
    r.bind("compute_depth", [b](const ToolCall& c) { return Value(b->compute_depth(receiver(c), c.call_index)); },
           true);
    r.bind("llm_query", [b](const ToolCall& c) { return Value(b->llm_query(str_arg(c, 0), c.call_index)); }, true);

    r.bind("crop",
           [](const ToolCall& c) {
               const PatchHandle& parent = receiver(c);
               const Box wanted{coordinate(c, 0), coordinate(c, 1), coordinate(c, 2), coordinate(c, 3)};
               PatchHandle p;
               p.box = clamp_box(wanted, parent.box);
               if (!p.box.valid()) throw ToolError("crop", "crop region is empty inside the parent patch");
               p.patch_id = parent.patch_id + "/crop" + std::to_string(c.call_index);
               p.scene_ref = parent.scene_ref;
               p.image_width = parent.image_width;
               p.image_height = parent.image_height;
               p.label = "region";
               return Value(std::move(p));
           },
           true);

    r.bind("len",
           [](const ToolCall& c) {
               const Value& v = (*c.args)[0];
               if (v.is<PatchList>()) return Value(static_cast<std::int64_t>(v.as<PatchList>().size()));
               if (v.is<std::string>()) return Value(static_cast<std::int64_t>(v.as<std::string>().size()));
               throw TypeError("len() of " + std::string(type_name(v)));
           },
           false);
    r.bind("str", [](const ToolCall& c) { return Value(render((*c.args)[0])); }, false);
    r.bind("int",
           [](const ToolCall& c) {
               const Value& v = (*c.args)[0];
               if (v.is<std::int64_t>()) return v;
               if (v.is<bool>()) return Value(std::int64_t{v.as<bool>() ? 1 : 0});
               if (v.is<double>()) {
                   const double d = std::trunc(v.as<double>());
                   if (!(d >= -9.2e18 && d <= 9.2e18)) throw TypeError("int() of out-of-range float");
                   return Value(static_cast<std::int64_t>(d));
               }
               if (v.is<std::string>()) {
                   const std::string& s = v.as<std::string>();
                   std::size_t pos = 0;
                   try {
                       const long long n = std::stoll(s, &pos);
                       if (pos == s.size()) return Value(static_cast<std::int64_t>(n));
                   } catch (const std::exception&) {
                   }
                   throw TypeError("invalid literal for int(): '" + s + "'");
               }
               throw TypeError("int() of " + std::string(type_name(v)));
           },
           false);
    r.bind("bool_to_yesno",
           [](const ToolCall& c) {
               const Value& v = (*c.args)[0];
               if (!v.is<bool>()) throw TypeError("bool_to_yesno() of " + std::string(type_name(v)));
               return Value(std::string(v.as<bool>() ? "yes" : "no"));
           },
           false);
    r.bind("distance",
           [](const ToolCall& c) {
               const Value& a = (*c.args)[0];
               const Value& b = (*c.args)[1];
               if (!a.is<PatchHandle>() || !b.is<PatchHandle>()) throw TypeError("distance() needs two patches");
               const Box& x = a.as<PatchHandle>().box;
               const Box& y = b.as<PatchHandle>().box;
               return Value(std::hypot(x.center_x() - y.center_x(), x.center_y() - y.center_y()));
           },
           false);
    return r;
}

void ToolRegistry::bind(std::string name, ToolFn fn, bool traced) {
    bindings_[std::move(name)] = Binding{std::move(fn), traced};
}

const Binding* ToolRegistry::binding(std::string_view name) const {
    auto it = bindings_.find(name);
    return it == bindings_.end() ? nullptr : &it->second;
}

std::vector<std::string> ToolRegistry::missing() const {
    std::vector<std::string> out;
    for (const auto& b : vpl::builtins()) {
        if (b.kind == vpl::BuiltinKind::Attribute) continue;
        if (!binding(b.name)) out.emplace_back(b.name);
    }
    return out;
}

}  // namespace vps
