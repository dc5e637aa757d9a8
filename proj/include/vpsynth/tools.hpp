#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vpsynth/scene.hpp"
#include "vpsynth/value.hpp"

namespace vps {

/// A tool invocation that failed; the interpreter retries once.
class ToolError : public std::runtime_error {
public:
    ToolError(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

/// Raised when something tries to open a network client in offline mode.
class OfflineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void set_offline(bool offline) noexcept;
bool offline() noexcept;

// ---------------------------------------------------------------------------
// Backends

/// The vision and knowledge tools. `call_index` is the trace step of the
/// invocation; noisy backends key their randomness on it.
class ToolBackend {
public:
    virtual ~ToolBackend() = default;
    virtual PatchList find(const PatchHandle& region, const std::string& category,
                           std::size_t call_index) = 0;
    virtual bool exists(const PatchHandle& region, const std::string& category,
                        std::size_t call_index) = 0;
    virtual bool verify_property(const PatchHandle& patch, const std::string& category,
                                 const std::string& property, std::size_t call_index) = 0;
    virtual std::string simple_query(const PatchHandle& patch, const std::string& question,
                                     std::size_t call_index) = 0;
    virtual double compute_depth(const PatchHandle& patch, std::size_t call_index) = 0;
    virtual std::string llm_query(const std::string& question, std::size_t call_index) = 0;
};

struct NoiseConfig {
    std::uint64_t seed = 0;
    double p_miss = 0.0;
    double p_false_positive = 0.0;
    double p_attr_flip = 0.0;
    double p_vqa_error = 0.0;
    double p_depth_jitter = 0.0;
    double depth_jitter_sigma = 0.05;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
    bool zero() const noexcept {
        return p_miss == 0 && p_false_positive == 0 && p_attr_flip == 0 && p_vqa_error == 0 &&
               p_depth_jitter == 0;
    }
};

/// question -> answer pairs for llm_query, loaded from a TSV asset.
class KnowledgeTable {
public:
    static KnowledgeTable parse(std::string_view text);
    static KnowledgeTable load(const std::filesystem::path& path);

    /// "unknown" when absent.
    std::string lookup(std::string_view question) const;
    std::size_t size() const noexcept { return entries_.size(); }

    static std::string normalize_key(std::string_view question);

private:
    std::map<std::string, std::string, std::less<>> entries_;
};

/// Answers from the scene graph, optionally corrupted with seeded noise.
class OracleTools final : public ToolBackend {
public:
    OracleTools(const SceneGraph& scene, std::shared_ptr<const Vocabulary> vocab,
                std::shared_ptr<const KnowledgeTable> knowledge, NoiseConfig noise);

    PatchList find(const PatchHandle& region, const std::string& category,
                   std::size_t call_index) override;
    bool exists(const PatchHandle& region, const std::string& category,
                std::size_t call_index) override;
    bool verify_property(const PatchHandle& patch, const std::string& category,
                         const std::string& property, std::size_t call_index) override;
    std::string simple_query(const PatchHandle& patch, const std::string& question,
                             std::size_t call_index) override;
    double compute_depth(const PatchHandle& patch, std::size_t call_index) override;
    std::string llm_query(const std::string& question, std::size_t call_index) override;

    const SceneGraph& scene() const noexcept { return scene_; }

private:
    PatchList detect(const PatchHandle& region, const std::string& category,
                     std::string_view tool, std::size_t call_index) const;
    std::vector<const SceneObject*> objects_in(const Box& region, std::string_view category) const;
    const SceneObject* backing_object(const PatchHandle& patch) const;

    const SceneGraph& scene_;
    std::shared_ptr<const Vocabulary> vocab_;
    std::shared_ptr<const KnowledgeTable> knowledge_;
    NoiseConfig noise_;
};

// ---------------------------------------------------------------------------
// HTTP plumbing shared by the remote tools and the LLM client

struct HttpResponse {
    int status = 0;
    std::string body;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    /// Throws ToolError("transport", ...) when no response arrives.
    virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                   const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// cpp-httplib transport with a bounded pool of keep-alive clients. Refuses to
/// construct in offline mode.
class HttplibTransport final : public HttpTransport {
public:
    HttplibTransport(std::string base_url, std::chrono::milliseconds timeout, std::size_t pool_size = 4);
    ~HttplibTransport() override;

    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::vector<std::pair<std::string, std::string>>& headers) override;

    /// "http://host:port/prefix" -> ("http://host:port", "/prefix")
    static std::pair<std::string, std::string> split_base(const std::string& base_url);

private:
    struct Pool;
    std::unique_ptr<Pool> pool_;
};

/// Redacts bearer tokens and api keys before a payload reaches the log.
std::string redact_secrets(std::string_view text);

struct RemoteToolConfig {
    std::string base_url;
    std::string api_key_env = "VPSYNTH_TOOLS_API_KEY";
    std::chrono::milliseconds timeout{10000};
    std::map<std::string, std::string> routes = {
        {"find", "/find"},
        {"exists", "/exists"},
        {"verify_property", "/verify_property"},
        {"simple_query", "/simple_query"},
        {"compute_depth", "/compute_depth"},
        {"llm_query", "/llm_query"},
    };

    void validate() const;
};

/// One POST per call with a flat JSON payload; wire schema in docs/remote_tools.md.
class RemoteTools final : public ToolBackend {
public:
    /// Throws OfflineError in offline mode, std::invalid_argument on a bad config.
    explicit RemoteTools(RemoteToolConfig config);
    RemoteTools(RemoteToolConfig config, std::shared_ptr<HttpTransport> transport);

    PatchList find(const PatchHandle& region, const std::string& category,
                   std::size_t call_index) override;
    bool exists(const PatchHandle& region, const std::string& category,
                std::size_t call_index) override;
    bool verify_property(const PatchHandle& patch, const std::string& category,
                         const std::string& property, std::size_t call_index) override;
    std::string simple_query(const PatchHandle& patch, const std::string& question,
                             std::size_t call_index) override;
    double compute_depth(const PatchHandle& patch, std::size_t call_index) override;
    std::string llm_query(const std::string& question, std::size_t call_index) override;

private:
    nlohmann::json call(const std::string& tool, nlohmann::json payload);

    RemoteToolConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    std::string api_key_;
};

// ---------------------------------------------------------------------------
// Registry

/// Arguments of one builtin invocation. `receiver` is set for methods.
struct ToolCall {
    std::string_view name;
    const PatchHandle* receiver = nullptr;
    const std::vector<Value>* args = nullptr;
    std::size_t call_index = 0;
};

using ToolFn = std::function<Value(const ToolCall&)>;

struct Binding {
    ToolFn fn;
    bool traced = true;
};

/// Builtin name -> implementation. Safe for concurrent invocation as long as
/// the bound functions are.
class ToolRegistry {
public:
    /// Binds every VPL builtin, routing the vision/knowledge tools to `backend`.
    static ToolRegistry standard(std::shared_ptr<ToolBackend> backend);

    void bind(std::string name, ToolFn fn, bool traced);
    const Binding* binding(std::string_view name) const;
    /// Names of VPL builtins without a binding; empty for a usable registry.
    std::vector<std::string> missing() const;

private:
    std::map<std::string, Binding, std::less<>> bindings_;
    std::shared_ptr<ToolBackend> backend_;
};

/// Clamps `box` into `parent`; the result may be invalid (empty).
Box clamp_box(const Box& box, const Box& parent);

}  // namespace vps
