#include "vpsynth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vpsynth/rng.hpp"

namespace vps {

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \r\n\t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \r\n\t");
    return std::string(s.substr(b, e - b + 1));
}

const std::map<std::string, std::string, std::less<>>& irregular_plurals() {
    static const std::map<std::string, std::string, std::less<>> table = {
        {"person", "people"}, {"man", "men"},       {"woman", "women"}, {"child", "children"},
        {"knife", "knives"},  {"mouse", "mice"},    {"foot", "feet"},   {"tooth", "teeth"},
        {"sheep", "sheep"},   {"fish", "fish"},     {"leaf", "leaves"}, {"shelf", "shelves"},
        {"bus", "buses"},     {"gas", "gases"},
    };
    return table;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_vowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }

std::string plural_word(std::string_view w) {
    if (auto it = irregular_plurals().find(w); it != irregular_plurals().end()) return it->second;
    if (ends_with(w, "s") || ends_with(w, "x") || ends_with(w, "z") || ends_with(w, "ch") ||
        ends_with(w, "sh")) {
        return std::string(w) + "es";
    }
    if (w.size() >= 2 && w.back() == 'y' && !is_vowel(w[w.size() - 2])) {
        return std::string(w.substr(0, w.size() - 1)) + "ies";
    }
    return std::string(w) + "s";
}

std::string singular_word(std::string_view w) {
    for (const auto& [sing, plur] : irregular_plurals()) {
        if (plur == w) return sing;
    }
    if (ends_with(w, "ies") && w.size() > 3) return std::string(w.substr(0, w.size() - 3)) + "y";
    for (std::string_view suf : {"ches", "shes", "xes", "sses", "zes"}) {
        if (ends_with(w, suf)) return std::string(w.substr(0, w.size() - 2));
    }
    if (ends_with(w, "s") && !ends_with(w, "ss")) return std::string(w.substr(0, w.size() - 1));
    return std::string(w);
}

// Applies `fn` to the last whitespace-separated word of a phrase.
template <typename Fn>
std::string map_last_word(std::string_view phrase, Fn fn) {
    const auto pos = phrase.rfind(' ');
    if (pos == std::string_view::npos) return fn(phrase);
    return std::string(phrase.substr(0, pos + 1)) + fn(phrase.substr(pos + 1));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

std::string quantize_box(const Box& box, int width, int height) {
    auto q = [](int v, int extent) {
        const long scaled = static_cast<long>(v) * 1000 / std::max(extent, 1);
        return std::clamp<long>(scaled, 0, 999);
    };
    std::ostringstream os;
    os << q(box.x1, width) << ' ' << q(box.y1, height) << ' ' << q(box.x2, width) << ' '
       << q(box.y2, height);
    return os.str();
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::parse(std::string_view text) {
    Vocabulary v;
    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_tabs(line);
        auto fail = [&](const std::string& what) {
            throw ScenegraphError("vocabulary line " + std::to_string(lineno) + ": " + what);
        };
        if (fields[0] == "version") {
            if (fields.size() != 2) fail("expected 'version<TAB>N'");
            v.version_ = std::stoi(fields[1]);
        } else if (fields[0] == "category") {
            if (fields.size() < 2 || fields.size() > 3 || fields[1].empty()) {
                fail("expected 'category<TAB>name[<TAB>plural]'");
            }
            if (!seen.insert("c:" + fields[1]).second) fail("duplicate category " + fields[1]);
            v.categories_.push_back(
                {fields[1], fields.size() == 3 ? fields[2] : pluralize(fields[1])});
        } else if (fields[0] == "attribute") {
            if (fields.size() != 3 || fields[1].empty() || fields[2].empty()) {
                fail("expected 'attribute<TAB>name<TAB>type'");
            }
            if (!seen.insert("a:" + fields[1]).second) fail("duplicate attribute " + fields[1]);
            v.attributes_.push_back({fields[1], fields[2]});
        } else {
            fail("unknown entry '" + fields[0] + "'");
        }
    }
    if (v.version_ <= 0) throw ScenegraphError("vocabulary: missing version line");
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenegraphError("cannot open vocabulary " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

bool Vocabulary::has_category(std::string_view name) const {
    return std::any_of(categories_.begin(), categories_.end(),
                       [&](const auto& c) { return c.name == name; });
}

bool Vocabulary::has_attribute(std::string_view name) const {
    return !attribute_type(name).empty();
}

std::string Vocabulary::attribute_type(std::string_view attribute) const {
    for (const auto& a : attributes_) {
        if (a.name == attribute) return a.type;
    }
    return {};
}

std::vector<std::string> Vocabulary::attributes_of_type(std::string_view type) const {
    std::vector<std::string> out;
    for (const auto& a : attributes_) {
        if (a.type == type) out.push_back(a.name);
    }
    return out;
}

std::string Vocabulary::plural(std::string_view category) const {
    for (const auto& c : categories_) {
        if (c.name == category) return c.plural;
    }
    return pluralize(category);
}

std::string Vocabulary::singular(std::string_view noun) const {
    for (const auto& c : categories_) {
        if (c.plural == noun || c.name == noun) return c.name;
    }
    return singularize(noun);
}

std::string pluralize(std::string_view noun) { return map_last_word(noun, plural_word); }
std::string singularize(std::string_view noun) { return map_last_word(noun, singular_word); }

std::string_view indefinite_article(std::string_view phrase) {
    if (!phrase.empty() && is_vowel(static_cast<char>(std::tolower(phrase.front())))) return "an";
    return "a";
}

// ---------------------------------------------------------------------------
// Scene graph

std::string_view to_string(RelationName r) {
    switch (r) {
        case RelationName::LeftOf: return "left_of";
        case RelationName::RightOf: return "right_of";
        case RelationName::Above: return "above";
        case RelationName::Below: return "below";
        case RelationName::On: return "on";
        case RelationName::Holding: return "holding";
        case RelationName::Near: return "near";
    }
    return "near";
}

std::optional<RelationName> relation_from_string(std::string_view s) {
    for (auto r : {RelationName::LeftOf, RelationName::RightOf, RelationName::Above,
                   RelationName::Below, RelationName::On, RelationName::Holding,
                   RelationName::Near}) {
        if (to_string(r) == s) return r;
    }
    return std::nullopt;
}

bool SceneObject::has_attribute(std::string_view a) const {
    return std::binary_search(attributes.begin(), attributes.end(), a);
}

const SceneObject* SceneGraph::object(std::string_view id) const {
    for (const auto& o : objects) {
        if (o.object_id == id) return &o;
    }
    return nullptr;
}

void SceneGraph::validate(const Vocabulary* vocab) const {
    auto fail = [&](const std::string& what) {
        throw ScenegraphError("scene " + scene_id + ": " + what);
    };
    if (scene_id.empty()) fail("empty scene_id");
    if (width <= 0 || height <= 0) fail("non-positive image size");
    std::set<std::string> ids;
    for (const auto& o : objects) {
        if (!ids.insert(o.object_id).second) fail("duplicate object id " + o.object_id);
        if (!o.box.valid()) fail("degenerate box for " + o.object_id);
        if (!bounds().contains(o.box)) fail("box outside image for " + o.object_id);
        if (!(o.depth > 0.0 && o.depth <= 1.0)) fail("depth outside (0,1] for " + o.object_id);
        if (!std::is_sorted(o.attributes.begin(), o.attributes.end()) ||
            std::adjacent_find(o.attributes.begin(), o.attributes.end()) != o.attributes.end()) {
            fail("attributes not a sorted set for " + o.object_id);
        }
        if (vocab) {
            if (!vocab->has_category(o.category)) fail("unknown category " + o.category);
            for (const auto& a : o.attributes) {
                if (!vocab->has_attribute(a)) fail("unknown attribute " + a);
            }
        }
    }
    for (const auto& r : relations) {
        if (!ids.count(r.subject) || !ids.count(r.object)) {
            fail("relation references unknown object");
        }
    }
}

namespace {

std::vector<RelationName> geometric_relations(const SceneObject& a, const SceneObject& b,
                                              int width, int height, bool a_is_person) {
    std::vector<RelationName> out;
    const double dzx = kSpatialDeadZone * width;
    const double dzy = kSpatialDeadZone * height;
    if (a.box.center_x() < b.box.center_x() - dzx) out.push_back(RelationName::LeftOf);
    if (a.box.center_x() > b.box.center_x() + dzx) out.push_back(RelationName::RightOf);
    if (a.box.center_y() < b.box.center_y() - dzy) out.push_back(RelationName::Above);
    if (a.box.center_y() > b.box.center_y() + dzy) out.push_back(RelationName::Below);
    const bool x_overlap = a.box.x1 < b.box.x2 && b.box.x1 < a.box.x2;
    const bool y_overlap = a.box.y1 < b.box.y2 && b.box.y1 < a.box.y2;
    if (x_overlap && a.box.y2 >= b.box.y1 && a.box.y2 <= b.box.center_y()) {
        out.push_back(RelationName::On);
    }
    if (a_is_person && x_overlap && y_overlap) out.push_back(RelationName::Holding);
    const double dx = a.box.center_x() - b.box.center_x();
    const double dy = a.box.center_y() - b.box.center_y();
    const double diag = std::hypot(width, height);
    if (std::hypot(dx, dy) < 0.2 * diag) out.push_back(RelationName::Near);
    return out;
}

}  // namespace

SceneGraph generate_scene(std::uint64_t seed, const SceneGenConfig& config,
                          std::string scene_id) {
    const auto& vocab = config.vocabulary;
    if (!vocab || vocab->categories().empty() || vocab->attributes().empty()) {
        throw std::invalid_argument("scene config: empty vocabulary");
    }
    if (config.max_objects <= 0 || config.min_objects < 0 ||
        config.min_objects > config.max_objects) {
        throw std::invalid_argument("scene config: bad object-count range");
    }
    if (config.width < 10 || config.height < 10) {
        throw std::invalid_argument("scene config: image too small");
    }

    Rng rng(mix_seed(seed, "scene"));
    SceneGraph scene;
    scene.scene_id = scene_id.empty() ? "scene_" + std::to_string(seed) : std::move(scene_id);
    scene.width = config.width;
    scene.height = config.height;

    const auto colors = vocab->attributes_of_type("color");
    const auto materials = vocab->attributes_of_type("material");
    const auto n = rng.uniform_int(config.min_objects, config.max_objects);
    for (std::int64_t i = 0; i < n; ++i) {
        SceneObject o;
        o.object_id = "o" + std::to_string(i);
        o.category = vocab->categories()[rng.index(vocab->categories().size())].name;
        const int w = static_cast<int>(
            rng.uniform_int(std::max(2, config.width * 6 / 100), std::max(3, config.width * 35 / 100)));
        const int h = static_cast<int>(rng.uniform_int(std::max(2, config.height * 6 / 100),
                                                       std::max(3, config.height * 35 / 100)));
        o.box.x1 = static_cast<int>(rng.uniform_int(0, config.width - w));
        o.box.y1 = static_cast<int>(rng.uniform_int(0, config.height - h));
        o.box.x2 = o.box.x1 + w;
        o.box.y2 = o.box.y1 + h;
        if (!colors.empty() && rng.bernoulli(config.p_color)) {
            o.attributes.push_back(colors[rng.index(colors.size())]);
        }
        if (!materials.empty() && rng.bernoulli(config.p_material)) {
            o.attributes.push_back(materials[rng.index(materials.size())]);
        }
        std::sort(o.attributes.begin(), o.attributes.end());
        o.depth = std::round(rng.uniform(0.05, 1.0) * 1000.0) / 1000.0;
        o.depth = std::clamp(o.depth, 0.001, 1.0);
        scene.objects.push_back(std::move(o));
    }

    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        for (std::size_t j = 0; j < scene.objects.size(); ++j) {
            if (i == j || !rng.bernoulli(config.relation_density)) continue;
            const auto& a = scene.objects[i];
            const auto& b = scene.objects[j];
            const auto options = geometric_relations(a, b, scene.width, scene.height,
                                                     a.category == "person");
            if (options.empty()) continue;
            scene.relations.push_back({a.object_id, options[rng.index(options.size())], b.object_id});
        }
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Queries

std::string_view to_string(QueryKind k) {
    switch (k) {
        case QueryKind::Count: return "count";
        case QueryKind::Exists: return "exists";
        case QueryKind::Attribute: return "attribute";
        case QueryKind::Spatial: return "spatial";
        case QueryKind::DepthCompare: return "depth_compare";
        case QueryKind::MultiChoice: return "multi_choice";
    }
    return "count";
}

std::optional<QueryKind> query_kind_from_string(std::string_view s) {
    for (auto k : {QueryKind::Count, QueryKind::Exists, QueryKind::Attribute, QueryKind::Spatial,
                   QueryKind::DepthCompare, QueryKind::MultiChoice}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::string_view to_string(TaskType t) {
    switch (t) {
        case TaskType::VqaFreeform: return "vqa_freeform";
        case TaskType::MultipleChoice: return "multiple_choice";
        case TaskType::Counting: return "counting";
    }
    return "vqa_freeform";
}

std::optional<TaskType> task_from_string(std::string_view s) {
    for (auto t : {TaskType::VqaFreeform, TaskType::MultipleChoice, TaskType::Counting}) {
        if (to_string(t) == s) return t;
    }
    return std::nullopt;
}

TaskType task_for(QueryKind k) {
    switch (k) {
        case QueryKind::Count: return TaskType::Counting;
        case QueryKind::MultiChoice: return TaskType::MultipleChoice;
        default: return TaskType::VqaFreeform;
    }
}

void StructuredQuery::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("query: ") + what);
    };
    need(!category.empty(), "missing category");
    switch (kind) {
        case QueryKind::Count:
        case QueryKind::Exists: break;
        case QueryKind::Attribute:
            need(!attribute_type.empty(), "missing attribute_type");
            need(!value_space.empty(), "missing value_space");
            break;
        case QueryKind::Spatial:
            need(!other_category.empty(), "missing other_category");
            need(relation == RelationName::LeftOf || relation == RelationName::RightOf ||
                     relation == RelationName::Above || relation == RelationName::Below,
                 "spatial relation must be left_of/right_of/above/below");
            break;
        case QueryKind::DepthCompare:
            need(!other_category.empty(), "missing other_category");
            need(other_category != category, "depth comparison needs two categories");
            break;
        case QueryKind::MultiChoice:
            need(base == QueryKind::Count || base == QueryKind::Attribute,
                 "multiple choice base must be count or attribute");
            need(options.size() >= 2 && options.size() <= 4, "multiple choice needs 2-4 options");
            if (base == QueryKind::Attribute) {
                need(!attribute_type.empty() && !value_space.empty(), "missing attribute space");
            }
            break;
    }
}

namespace {

std::vector<const SceneObject*> objects_of(const SceneGraph& scene, std::string_view category) {
    std::vector<const SceneObject*> out;
    for (const auto& o : scene.objects) {
        if (o.category == category) out.push_back(&o);
    }
    return out;
}

const SceneObject* unique_object(const SceneGraph& scene, std::string_view category) {
    const auto found = objects_of(scene, category);
    return found.size() == 1 ? found.front() : nullptr;
}

std::string count_answer(const SceneGraph& scene, const StructuredQuery& q) {
    int n = 0;
    for (const auto& o : scene.objects) {
        if (o.category != q.category) continue;
        if (std::all_of(q.attributes.begin(), q.attributes.end(),
                        [&](const auto& a) { return o.has_attribute(a); })) {
            ++n;
        }
    }
    return std::to_string(n);
}

std::string attribute_answer(const SceneGraph& scene, const StructuredQuery& q) {
    const auto* o = unique_object(scene, q.category);
    if (!o) return "ambiguous";
    for (const auto& a : o->attributes) {
        if (std::find(q.value_space.begin(), q.value_space.end(), a) != q.value_space.end()) {
            return a;
        }
    }
    return "none";
}

std::string spatial_answer(const SceneGraph& scene, const StructuredQuery& q) {
    const auto* a = unique_object(scene, q.category);
    const auto* b = unique_object(scene, q.other_category);
    if (!a || !b || a == b) return "ambiguous";
    double delta = 0;
    double dead = 0;
    switch (q.relation) {
        case RelationName::LeftOf:
            delta = b->box.center_x() - a->box.center_x();
            dead = kSpatialDeadZone * scene.width;
            break;
        case RelationName::RightOf:
            delta = a->box.center_x() - b->box.center_x();
            dead = kSpatialDeadZone * scene.width;
            break;
        case RelationName::Above:
            delta = b->box.center_y() - a->box.center_y();
            dead = kSpatialDeadZone * scene.height;
            break;
        case RelationName::Below:
            delta = a->box.center_y() - b->box.center_y();
            dead = kSpatialDeadZone * scene.height;
            break;
        default: return "ambiguous";
    }
    if (std::abs(delta) < dead) return "ambiguous";
    return delta > 0 ? "yes" : "no";
}

std::string depth_answer(const SceneGraph& scene, const StructuredQuery& q) {
    const auto* a = unique_object(scene, q.category);
    const auto* b = unique_object(scene, q.other_category);
    if (!a || !b || a == b) return "ambiguous";
    if (std::abs(a->depth - b->depth) < kDepthTieEpsilon) return "ambiguous";
    return a->depth < b->depth ? a->category : b->category;
}

std::string option_letter(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

}  // namespace

std::string oracle_answer(const SceneGraph& scene, const StructuredQuery& q) {
    switch (q.kind) {
        case QueryKind::Count: return count_answer(scene, q);
        case QueryKind::Exists: return count_answer(scene, q) == "0" ? "no" : "yes";
        case QueryKind::Attribute: return attribute_answer(scene, q);
        case QueryKind::Spatial: return spatial_answer(scene, q);
        case QueryKind::DepthCompare: return depth_answer(scene, q);
        case QueryKind::MultiChoice: {
            StructuredQuery base = q;
            base.kind = q.base;
            const auto truth = oracle_answer(scene, base);
            std::string letter;
            for (std::size_t i = 0; i < q.options.size(); ++i) {
                if (q.options[i] == truth) {
                    if (!letter.empty()) return "ambiguous";
                    letter = option_letter(i);
                }
            }
            return letter.empty() ? "none" : letter;
        }
    }
    return "ambiguous";
}

std::string render_query_text(const StructuredQuery& q, const Vocabulary& vocab) {
    auto qualified = [&](const std::string& noun) {
        auto parts = q.attributes;
        parts.push_back(noun);
        return join(parts, " ");
    };
    switch (q.kind) {
        case QueryKind::Count:
            return "How many " + qualified(vocab.plural(q.category)) + " are in the picture?";
        case QueryKind::Exists: {
            const auto phrase = qualified(q.category);
            return "Is there " + std::string(indefinite_article(phrase)) + " " + phrase +
                   " in the picture?";
        }
        case QueryKind::Attribute:
            return "What " + q.attribute_type + " is the " + q.category + "?";
        case QueryKind::Spatial: {
            std::string rel;
            switch (q.relation) {
                case RelationName::LeftOf: rel = "to the left of"; break;
                case RelationName::RightOf: rel = "to the right of"; break;
                case RelationName::Above: rel = "above"; break;
                default: rel = "below"; break;
            }
            return "Is the " + q.category + " " + rel + " the " + q.other_category + "?";
        }
        case QueryKind::DepthCompare:
            return "Which is closer to the camera, the " + q.category + " or the " +
                   q.other_category + "?";
        case QueryKind::MultiChoice: {
            StructuredQuery base = q;
            base.kind = q.base;
            std::string text = render_query_text(base, vocab);
            for (std::size_t i = 0; i < q.options.size(); ++i) {
                text += " (" + option_letter(i) + ") " + q.options[i];
            }
            return text;
        }
    }
    return {};
}

namespace {

std::vector<std::string> present_categories(const SceneGraph& scene) {
    std::set<std::string> cats;
    for (const auto& o : scene.objects) cats.insert(o.category);
    return {cats.begin(), cats.end()};
}

std::vector<const SceneObject*> unique_objects(const SceneGraph& scene) {
    std::vector<const SceneObject*> out;
    for (const auto& o : scene.objects) {
        if (unique_object(scene, o.category) == &o) out.push_back(&o);
    }
    return out;
}

void pick_count_params(const SceneGraph& scene, const Vocabulary& vocab, Rng& rng,
                       double p_present, double p_attribute, StructuredQuery& q) {
    const auto present = present_categories(scene);
    if (!present.empty() && rng.bernoulli(p_present)) {
        q.category = present[rng.index(present.size())];
    } else {
        q.category = vocab.categories()[rng.index(vocab.categories().size())].name;
    }
    if (rng.bernoulli(p_attribute)) {
        std::set<std::string> pool;
        for (const auto* o : objects_of(scene, q.category)) {
            pool.insert(o->attributes.begin(), o->attributes.end());
        }
        if (!pool.empty() && rng.bernoulli(0.8)) {
            std::vector<std::string> v(pool.begin(), pool.end());
            q.attributes.push_back(v[rng.index(v.size())]);
        } else {
            q.attributes.push_back(vocab.attributes()[rng.index(vocab.attributes().size())].name);
        }
    }
}

}  // namespace

Result<Sample, NoViableQuery> generate_query(const SceneGraph& scene, std::uint64_t seed,
                                             QueryKind kind, const Vocabulary& vocab) {
    Rng rng(mix_seed(seed, "query", static_cast<std::uint64_t>(kind)));
    StructuredQuery q;
    q.kind = kind;

    switch (kind) {
        case QueryKind::Count: pick_count_params(scene, vocab, rng, 0.75, 0.5, q); break;
        case QueryKind::Exists: pick_count_params(scene, vocab, rng, 0.5, 0.4, q); break;
        case QueryKind::Attribute: {
            std::vector<const SceneObject*> pool;
            for (const auto* o : unique_objects(scene)) {
                if (!o->attributes.empty()) pool.push_back(o);
            }
            if (pool.empty()) return NoViableQuery{"no uniquely named object with attributes"};
            const auto* o = pool[rng.index(pool.size())];
            const auto& attr = o->attributes[rng.index(o->attributes.size())];
            q.category = o->category;
            q.attribute_type = vocab.attribute_type(attr);
            q.value_space = vocab.attributes_of_type(q.attribute_type);
            if (q.attribute_type.empty()) return NoViableQuery{"attribute outside vocabulary"};
            break;
        }
        case QueryKind::Spatial: {
            if (scene.objects.size() < 2) return NoViableQuery{"spatial query needs two objects"};
            std::vector<StructuredQuery> viable;
            const auto uniq = unique_objects(scene);
            for (const auto* a : uniq) {
                for (const auto* b : uniq) {
                    if (a == b) continue;
                    for (auto rel : {RelationName::LeftOf, RelationName::RightOf,
                                     RelationName::Above, RelationName::Below}) {
                        StructuredQuery cand = q;
                        cand.category = a->category;
                        cand.other_category = b->category;
                        cand.relation = rel;
                        if (spatial_answer(scene, cand) != "ambiguous") viable.push_back(cand);
                    }
                }
            }
            if (viable.empty()) return NoViableQuery{"no unambiguous object pair"};
            q = viable[rng.index(viable.size())];
            break;
        }
        case QueryKind::DepthCompare: {
            if (scene.objects.size() < 2) return NoViableQuery{"depth query needs two objects"};
            std::vector<std::pair<const SceneObject*, const SceneObject*>> pairs;
            const auto uniq = unique_objects(scene);
            for (std::size_t i = 0; i < uniq.size(); ++i) {
                for (std::size_t j = i + 1; j < uniq.size(); ++j) {
                    if (std::abs(uniq[i]->depth - uniq[j]->depth) >= kDepthTieEpsilon) {
                        pairs.emplace_back(uniq[i], uniq[j]);
                    }
                }
            }
            if (pairs.empty()) return NoViableQuery{"no depth-separable object pair"};
            auto [a, b] = pairs[rng.index(pairs.size())];
            if (rng.bernoulli(0.5)) std::swap(a, b);
            q.category = a->category;
            q.other_category = b->category;
            break;
        }
        case QueryKind::MultiChoice: {
            std::vector<const SceneObject*> colored;
            for (const auto* o : unique_objects(scene)) {
                for (const auto& a : o->attributes) {
                    if (vocab.attribute_type(a) == "color") {
                        colored.push_back(o);
                        break;
                    }
                }
            }
            std::string correct;
            std::vector<std::string> distractors;
            if (!colored.empty()) {
                const auto* o = colored[rng.index(colored.size())];
                q.base = QueryKind::Attribute;
                q.category = o->category;
                q.attribute_type = "color";
                q.value_space = vocab.attributes_of_type("color");
                StructuredQuery base = q;
                base.kind = QueryKind::Attribute;
                correct = attribute_answer(scene, base);
                for (const auto& c : q.value_space) {
                    if (c != correct) distractors.push_back(c);
                }
            } else {
                q.base = QueryKind::Count;
                const auto present = present_categories(scene);
                q.category = present.empty()
                                 ? vocab.categories()[rng.index(vocab.categories().size())].name
                                 : present[rng.index(present.size())];
                StructuredQuery base = q;
                base.kind = QueryKind::Count;
                correct = count_answer(scene, base);
                const int n = std::stoi(correct);
                for (int d = std::max(0, n - 2); d <= n + 3; ++d) {
                    if (d != n) distractors.push_back(std::to_string(d));
                }
            }
            if (distractors.empty()) return NoViableQuery{"no distractor options"};
            rng.shuffle(distractors);
            const auto n_opts = static_cast<std::size_t>(
                rng.uniform_int(2, static_cast<std::int64_t>(std::min<std::size_t>(4, distractors.size() + 1))));
            q.options.assign(distractors.begin(), distractors.begin() + (n_opts - 1));
            q.options.push_back(correct);
            rng.shuffle(q.options);
            break;
        }
    }

    q.validate();
    Sample s;
    s.scene_id = scene.scene_id;
    s.sample_id = scene.scene_id + "/" + std::string(to_string(kind));
    s.query = q;
    s.query_text = render_query_text(q, vocab);
    s.task = task_for(kind);
    s.gold_answer = oracle_answer(scene, q);
    if (s.gold_answer == "ambiguous" || s.gold_answer == "none" || s.gold_answer->empty()) {
        return NoViableQuery{"query has no unambiguous answer"};
    }
    return s;
}

// ---------------------------------------------------------------------------
// Serialization

ojson to_json(const SceneGraph& scene) {
    ojson objects = ojson::array();
    for (const auto& o : scene.objects) {
        objects.push_back({{"object_id", o.object_id},
                           {"category", o.category},
                           {"box", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}},
                           {"attributes", o.attributes},
                           {"depth", o.depth}});
    }
    ojson relations = ojson::array();
    for (const auto& r : scene.relations) {
        relations.push_back(
            {{"subject", r.subject}, {"relation", to_string(r.name)}, {"object", r.object}});
    }
    return {{"scene_id", scene.scene_id},
            {"width", scene.width},
            {"height", scene.height},
            {"objects", objects},
            {"relations", relations}};
}

SceneGraph scene_from_json(const ojson& j) {
    SceneGraph s;
    s.scene_id = j.at("scene_id").get<std::string>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    for (const auto& o : j.at("objects")) {
        SceneObject obj;
        obj.object_id = o.at("object_id").get<std::string>();
        obj.category = o.at("category").get<std::string>();
        const auto& b = o.at("box");
        if (!b.is_array() || b.size() != 4) throw ScenegraphError("box must have 4 coordinates");
        obj.box = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
        obj.attributes = o.at("attributes").get<std::vector<std::string>>();
        obj.depth = o.at("depth").get<double>();
        s.objects.push_back(std::move(obj));
    }
    for (const auto& r : j.at("relations")) {
        const auto name = relation_from_string(r.at("relation").get<std::string>());
        if (!name) throw ScenegraphError("unknown relation " + r.at("relation").dump());
        s.relations.push_back(
            {r.at("subject").get<std::string>(), *name, r.at("object").get<std::string>()});
    }
    s.validate();
    return s;
}

ojson to_json(const StructuredQuery& q) {
    ojson j = {{"kind", to_string(q.kind)}, {"category", q.category}};
    switch (q.kind) {
        case QueryKind::Count:
        case QueryKind::Exists: j["attributes"] = q.attributes; break;
        case QueryKind::Attribute:
            j["attribute_type"] = q.attribute_type;
            j["value_space"] = q.value_space;
            break;
        case QueryKind::Spatial:
            j["relation"] = to_string(q.relation);
            j["other_category"] = q.other_category;
            break;
        case QueryKind::DepthCompare: j["other_category"] = q.other_category; break;
        case QueryKind::MultiChoice:
            j["base"] = to_string(q.base);
            if (q.base == QueryKind::Attribute) {
                j["attribute_type"] = q.attribute_type;
                j["value_space"] = q.value_space;
            } else {
                j["attributes"] = q.attributes;
            }
            j["options"] = q.options;
            break;
    }
    return j;
}

StructuredQuery query_from_json(const ojson& j) {
    StructuredQuery q;
    const auto kind = query_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw ScenegraphError("unknown query kind " + j.at("kind").dump());
    q.kind = *kind;
    q.category = j.at("category").get<std::string>();
    q.attributes = j.value("attributes", std::vector<std::string>{});
    q.attribute_type = j.value("attribute_type", std::string{});
    q.value_space = j.value("value_space", std::vector<std::string>{});
    q.other_category = j.value("other_category", std::string{});
    q.options = j.value("options", std::vector<std::string>{});
    if (j.contains("relation")) {
        const auto rel = relation_from_string(j.at("relation").get<std::string>());
        if (!rel) throw ScenegraphError("unknown relation " + j.at("relation").dump());
        q.relation = *rel;
    }
    if (j.contains("base")) {
        const auto base = query_kind_from_string(j.at("base").get<std::string>());
        if (!base) throw ScenegraphError("unknown base kind " + j.at("base").dump());
        q.base = *base;
    }
    q.validate();
    return q;
}

ojson to_json(const Sample& s) {
    ojson j = {{"sample_id", s.sample_id},
               {"scene_id", s.scene_id},
               {"query", to_json(s.query)},
               {"query_text", s.query_text},
               {"task", to_string(s.task)}};
    if (s.gold_answer) j["gold_answer"] = *s.gold_answer;
    return j;
}

Sample sample_from_json(const ojson& j) {
    Sample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.scene_id = j.at("scene_id").get<std::string>();
    s.query = query_from_json(j.at("query"));
    s.query_text = j.at("query_text").get<std::string>();
    const auto task = task_from_string(j.at("task").get<std::string>());
    if (!task) throw ScenegraphError("unknown task " + j.at("task").dump());
    s.task = *task;
    if (j.contains("gold_answer") && !j.at("gold_answer").is_null()) {
        s.gold_answer = j.at("gold_answer").get<std::string>();
    }
    return s;
}

std::size_t Corpus::sample_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.samples.size();
    return n;
}

const SceneGraph* Corpus::scene(std::string_view scene_id) const {
    for (const auto& e : entries) {
        if (e.scene.scene_id == scene_id) return &e.scene;
    }
    return nullptr;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ScenegraphError("cannot write corpus " + path.string());
    if (corpus.header) out << ojson{{"_header", *corpus.header}}.dump() << '\n';
    for (const auto& e : corpus.entries) {
        ojson line = to_json(e.scene);
        ojson samples = ojson::array();
        for (const auto& s : e.samples) samples.push_back(to_json(s));
        line["samples"] = samples;
        out << line.dump() << '\n';
    }
    if (!out) throw ScenegraphError("error writing corpus " + path.string());
}

Corpus read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenegraphError("cannot open corpus " + path.string());
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> scene_ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            const auto j = ojson::parse(line);
            if (j.contains("_header")) {
                corpus.header = j.at("_header");
                continue;
            }
            CorpusEntry entry;
            entry.scene = scene_from_json(j);
            if (!scene_ids.insert(entry.scene.scene_id).second) {
                throw ScenegraphError("duplicate scene_id " + entry.scene.scene_id);
            }
            if (j.contains("samples")) {
                for (const auto& s : j.at("samples")) {
                    entry.samples.push_back(sample_from_json(s));
                    if (entry.samples.back().scene_id != entry.scene.scene_id) {
                        throw ScenegraphError("sample scene_id does not match its scene");
                    }
                }
            }
            corpus.entries.push_back(std::move(entry));
        } catch (const std::exception& e) {
            throw ScenegraphError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return corpus;
}

Corpus generate_corpus(const CorpusGenConfig& config) {
    if (config.mix.empty()) throw std::invalid_argument("corpus config: empty query mix");
    const auto& vocab = config.scene.vocabulary;
    if (!vocab) throw std::invalid_argument("corpus config: missing vocabulary");

    Corpus corpus;
    ojson mix = ojson::array();
    for (auto k : config.mix) mix.push_back(to_string(k));
    corpus.header = ojson{{"format", "vpsynth-scenes/1"},
                          {"vocabulary_version", vocab->version()},
                          {"seed", config.seed},
                          {"n", config.n_samples},
                          {"mix", mix},
                          {"min_objects", config.scene.min_objects},
                          {"max_objects", config.scene.max_objects},
                          {"width", config.scene.width},
                          {"height", config.scene.height},
                          {"relation_density", config.scene.relation_density},
                          {"unlabeled_every", config.unlabeled_every}};

    constexpr int kMaxAttempts = 256;
    for (std::size_t i = 0; i < config.n_samples; ++i) {
        const QueryKind kind = config.mix[i % config.mix.size()];
        char id[32];
        std::snprintf(id, sizeof id, "s_%04zu", i);
        bool done = false;
        for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
            auto scene = generate_scene(mix_seed(config.seed, i, attempt), config.scene, id);
            auto sample = generate_query(scene, mix_seed(config.seed, i, attempt, "q"), kind, *vocab);
            if (!sample) continue;
            Sample s = std::move(sample).value();
            s.sample_id = "q_" + std::string(id + 2);
            if (config.unlabeled_every && (i + 1) % config.unlabeled_every == 0) {
                s.gold_answer.reset();
            }
            corpus.entries.push_back({std::move(scene), {std::move(s)}});
            done = true;
        }
        if (!done) {
            throw std::runtime_error("could not generate a viable " +
                                     std::string(to_string(kind)) + " sample for " + id);
        }
    }
    return corpus;
}

}  // namespace vps
