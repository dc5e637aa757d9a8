#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vpsynth/result.hpp"

namespace vps {

using ojson = nlohmann::ordered_json;

/// Pixel-space box, x1 < x2 and y1 < y2.
struct Box {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    double center_x() const noexcept { return (x1 + x2) / 2.0; }
    double center_y() const noexcept { return (y1 + y2) / 2.0; }
    bool valid() const noexcept { return x1 < x2 && y1 < y2; }
    bool contains(const Box& inner) const noexcept {
        return inner.x1 >= x1 && inner.y1 >= y1 && inner.x2 <= x2 && inner.y2 <= y2;
    }
    bool contains_point(double x, double y) const noexcept {
        return x >= x1 && x <= x2 && y >= y1 && y <= y2;
    }
    friend bool operator==(const Box&, const Box&) = default;
};

/// Box on the 0-999 grid used in traces and rationales, "x1 y1 x2 y2".
std::string quantize_box(const Box& box, int width, int height);

class ScenegraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Vocabulary

struct CategoryEntry {
    std::string name;
    std::string plural;
};

struct AttributeEntry {
    std::string name;
    std::string type;  // "color", "material", ...
};

/// Category/attribute vocabulary, loaded from a versioned text asset.
class Vocabulary {
public:
    static Vocabulary parse(std::string_view text);
    static Vocabulary load(const std::filesystem::path& path);

    int version() const noexcept { return version_; }
    const std::vector<CategoryEntry>& categories() const noexcept { return categories_; }
    const std::vector<AttributeEntry>& attributes() const noexcept { return attributes_; }

    bool has_category(std::string_view name) const;
    bool has_attribute(std::string_view name) const;
    /// Empty when the attribute is unknown.
    std::string attribute_type(std::string_view attribute) const;
    std::vector<std::string> attributes_of_type(std::string_view type) const;
    std::string plural(std::string_view category) const;
    /// Inverse of plural(); falls back to suffix stripping.
    std::string singular(std::string_view noun) const;

private:
    int version_ = 0;
    std::vector<CategoryEntry> categories_;
    std::vector<AttributeEntry> attributes_;
};

/// English pluralization for nouns outside the vocabulary.
std::string pluralize(std::string_view noun);
std::string singularize(std::string_view noun);
/// "a" or "an" for the noun phrase.
std::string_view indefinite_article(std::string_view phrase);

// ---------------------------------------------------------------------------
// Scene graph

enum class RelationName { LeftOf, RightOf, Above, Below, On, Holding, Near };

std::string_view to_string(RelationName r);
std::optional<RelationName> relation_from_string(std::string_view s);

struct SceneObject {
    std::string object_id;
    std::string category;
    Box box;
    std::vector<std::string> attributes;  // sorted, unique
    double depth = 1.0;                   // (0, 1], smaller is closer

    bool has_attribute(std::string_view a) const;
    friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Relation {
    std::string subject;
    RelationName name = RelationName::Near;
    std::string object;
    friend bool operator==(const Relation&, const Relation&) = default;
};

struct SceneGraph {
    std::string scene_id;
    int width = 0;
    int height = 0;
    std::vector<SceneObject> objects;
    std::vector<Relation> relations;

    const SceneObject* object(std::string_view id) const;
    Box bounds() const noexcept { return {0, 0, width, height}; }
    /// Throws ScenegraphError naming the first violated invariant. With a
    /// vocabulary, attributes are also checked against it.
    void validate(const Vocabulary* vocab = nullptr) const;

    friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

struct SceneGenConfig {
    std::shared_ptr<const Vocabulary> vocabulary;
    int min_objects = 3;
    int max_objects = 8;
    int width = 640;
    int height = 480;
    double relation_density = 0.3;
    double p_color = 0.85;
    double p_material = 0.35;
};

/// Pure function of (seed, config). Throws std::invalid_argument on a bad config.
SceneGraph generate_scene(std::uint64_t seed, const SceneGenConfig& config,
                          std::string scene_id = {});

// ---------------------------------------------------------------------------
// Queries

enum class QueryKind { Count, Exists, Attribute, Spatial, DepthCompare, MultiChoice };
enum class TaskType { VqaFreeform, MultipleChoice, Counting };

std::string_view to_string(QueryKind k);
std::optional<QueryKind> query_kind_from_string(std::string_view s);
std::string_view to_string(TaskType t);
std::optional<TaskType> task_from_string(std::string_view s);
TaskType task_for(QueryKind k);

/// Parameters used per kind:
///   Count, Exists   category, attributes
///   Attribute       category, attribute_type, value_space
///   Spatial         category (subject), relation, other_category
///   DepthCompare    category, other_category
///   MultiChoice     base (Count or Attribute) with its parameters, options
struct StructuredQuery {
    QueryKind kind = QueryKind::Count;
    std::string category;
    std::vector<std::string> attributes;
    std::string attribute_type;
    std::vector<std::string> value_space;
    RelationName relation = RelationName::LeftOf;
    std::string other_category;
    QueryKind base = QueryKind::Count;
    std::vector<std::string> options;

    /// Throws std::invalid_argument when parameters are incomplete for the kind.
    void validate() const;
    friend bool operator==(const StructuredQuery&, const StructuredQuery&) = default;
};

/// A query over one scene. A gold answer is present for labeled samples.
struct Sample {
    std::string sample_id;
    std::string scene_id;
    StructuredQuery query;
    std::string query_text;
    TaskType task = TaskType::VqaFreeform;
    std::optional<std::string> gold_answer;

    bool labeled() const noexcept { return gold_answer.has_value(); }
    friend bool operator==(const Sample&, const Sample&) = default;
};

struct NoViableQuery {
    std::string reason;
};

Result<Sample, NoViableQuery> generate_query(const SceneGraph& scene, std::uint64_t seed,
                                             QueryKind kind, const Vocabulary& vocab);

/// Deterministic natural-language rendering of a query.
std::string render_query_text(const StructuredQuery& query, const Vocabulary& vocab);

/// Exhaustive evaluation over the scene. Count gives a decimal string,
/// Exists/Spatial "yes"/"no", DepthCompare the closer category, Attribute the
/// attribute value, MultiChoice the option letter. Spatial pairs inside the
/// dead zone, depth ties and non-unique references give "ambiguous".
std::string oracle_answer(const SceneGraph& scene, const StructuredQuery& query);

/// Fraction of the image extent inside which two centers count as level.
inline constexpr double kSpatialDeadZone = 0.02;
inline constexpr double kDepthTieEpsilon = 1e-6;

// ---------------------------------------------------------------------------
// Serialization

ojson to_json(const SceneGraph& scene);
SceneGraph scene_from_json(const ojson& j);
ojson to_json(const StructuredQuery& q);
StructuredQuery query_from_json(const ojson& j);
ojson to_json(const Sample& s);
Sample sample_from_json(const ojson& j);

/// One line of a scene corpus: a scene and the samples posed against it.
struct CorpusEntry {
    SceneGraph scene;
    std::vector<Sample> samples;
    friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

struct Corpus {
    std::optional<ojson> header;
    std::vector<CorpusEntry> entries;

    std::size_t sample_count() const;
    const SceneGraph* scene(std::string_view scene_id) const;
};

void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
/// Throws ScenegraphError with the line number on malformed input.
Corpus read_corpus(const std::filesystem::path& path);

struct CorpusGenConfig {
    std::uint64_t seed = 0;
    std::size_t n_samples = 500;
    std::vector<QueryKind> mix = {QueryKind::Count,  QueryKind::Exists,
                                  QueryKind::Spatial, QueryKind::DepthCompare,
                                  QueryKind::MultiChoice, QueryKind::Attribute};
    SceneGenConfig scene;
    /// Every n-th sample is written without its gold answer; 0 disables.
    std::size_t unlabeled_every = 0;
};

/// One scene per sample; scene i is "s_%04d". Kinds rotate through `mix`.
Corpus generate_corpus(const CorpusGenConfig& config);

}  // namespace vps
