#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <regex>

#include <spdlog/spdlog.h>

#include "vpsynth/tools.hpp"

namespace vps {

std::string redact_secrets(std::string_view text) {
    static const std::regex bearer(R"((Bearer\s+)[A-Za-z0-9._\-]+)", std::regex::icase);
    static const std::regex key_field(R"re(("?(api_key|apikey|authorization)"?\s*[:=]\s*"?)[^",\s]+)re",
                                      std::regex::icase);
    std::string out = std::regex_replace(std::string(text), bearer, "$1***");
    return std::regex_replace(out, key_field, "$1***");
}

// ---------------------------------------------------------------------------

struct HttplibTransport::Pool {
    std::string origin;
    std::string prefix;
    std::chrono::milliseconds timeout;
    std::size_t capacity;

    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::unique_ptr<httplib::Client>> idle;
    std::size_t created = 0;

    std::unique_ptr<httplib::Client> acquire() {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !idle.empty() || created < capacity; });
        if (!idle.empty()) {
            auto c = std::move(idle.back());
            idle.pop_back();
            return c;
        }
        ++created;
        lock.unlock();
        auto c = std::make_unique<httplib::Client>(origin);
        c->set_connection_timeout(timeout);
        c->set_read_timeout(timeout);
        c->set_write_timeout(timeout);
        c->set_keep_alive(true);
        return c;
    }

    void release(std::unique_ptr<httplib::Client> c) {
        {
            std::lock_guard lock(mu);
            idle.push_back(std::move(c));
        }
        cv.notify_one();
    }
};

std::pair<std::string, std::string> HttplibTransport::split_base(const std::string& base_url) {
    const auto scheme = base_url.find("://");
    if (scheme == std::string::npos) throw std::invalid_argument("base url needs a scheme: " + base_url);
    const auto slash = base_url.find('/', scheme + 3);
    std::string origin = base_url.substr(0, slash);
    std::string prefix = slash == std::string::npos ? "" : base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {origin, prefix};
}

HttplibTransport::HttplibTransport(std::string base_url, std::chrono::milliseconds timeout, std::size_t pool_size) {
    if (offline()) throw OfflineError("network client requested for " + base_url + " in offline mode");
    if (timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
    auto [origin, prefix] = split_base(base_url);
    pool_ = std::make_unique<Pool>();
    pool_->origin = std::move(origin);
    pool_->prefix = std::move(prefix);
    pool_->timeout = timeout;
    pool_->capacity = std::max<std::size_t>(1, pool_size);
}

HttplibTransport::~HttplibTransport() = default;

HttpResponse HttplibTransport::post_json(const std::string& path, const std::string& body,
                                         const std::vector<std::pair<std::string, std::string>>& headers) {
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    const std::string target = pool_->prefix + path;
    spdlog::debug("POST {}{} {}", pool_->origin, target, redact_secrets(body));

    auto client = pool_->acquire();
    auto res = client->Post(target, h, body, "application/json");
    pool_->release(std::move(client));

    if (!res) {
        throw ToolError("transport", "POST " + target + " failed: " + httplib::to_string(res.error()));
    }
    spdlog::debug("HTTP {} from {}: {}", res->status, target, redact_secrets(res->body));
    return HttpResponse{res->status, res->body};
}

// ---------------------------------------------------------------------------

void RemoteToolConfig::validate() const {
    if (base_url.empty()) throw std::invalid_argument("remote tools: base_url is empty");
    if (timeout.count() <= 0) throw std::invalid_argument("remote tools: timeout must be positive");
    for (const char* tool : {"find", "exists", "verify_property", "simple_query", "compute_depth", "llm_query"}) {
        if (!routes.count(tool)) throw std::invalid_argument(std::string("remote tools: no route for ") + tool);
    }
}

RemoteTools::RemoteTools(RemoteToolConfig config) : RemoteTools(config, nullptr) {}

RemoteTools::RemoteTools(RemoteToolConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
    if (offline()) throw OfflineError("remote tools cannot be constructed in offline mode");
    config_.validate();
    if (!transport_) transport_ = std::make_shared<HttplibTransport>(config_.base_url, config_.timeout);
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

nlohmann::json RemoteTools::call(const std::string& tool, nlohmann::json payload) {
    payload["tool"] = tool;
    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
    const auto& route = config_.routes.at(tool);
    const HttpResponse res = transport_->post_json(route, payload.dump(), headers);
    if (res.status < 200 || res.status >= 300) {
        throw ToolError("http", "HTTP " + std::to_string(res.status) + " from " + route);
    }
    auto j = nlohmann::json::parse(res.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ToolError("schema", tool + ": response is not a JSON object");
    return j;
}

namespace {

nlohmann::json patch_fields(const PatchHandle& p) {
    return {{"scene_ref", p.scene_ref}, {"patch_id", p.patch_id}, {"x1", p.box.x1},
            {"y1", p.box.y1},           {"x2", p.box.x2},         {"y2", p.box.y2},
            {"image_width", p.image_width}, {"image_height", p.image_height}};
}

template <typename T>
T field(const nlohmann::json& j, const char* name, const std::string& tool) {
    try {
        return j.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ToolError("schema", tool + ": missing or mistyped field '" + name + "'");
    }
}

}  // namespace

PatchList RemoteTools::find(const PatchHandle& region, const std::string& category, std::size_t call_index) {
    auto payload = patch_fields(region);
    payload["category"] = category;
    payload["call_index"] = call_index;
    const auto j = call("find", std::move(payload));
    const auto boxes = field<std::vector<std::vector<int>>>(j, "boxes", "find");
    PatchList out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (boxes[i].size() != 4) throw ToolError("schema", "find: each box needs 4 coordinates");
        PatchHandle p;
        p.box = clamp_box(Box{boxes[i][0], boxes[i][1], boxes[i][2], boxes[i][3]}, region.box);
        if (!p.box.valid()) continue;
        p.patch_id = "remote:" + std::to_string(call_index) + ":" + std::to_string(i);
        p.scene_ref = region.scene_ref;
        p.image_width = region.image_width;
        p.image_height = region.image_height;
        p.label = category;
        out.push_back(std::move(p));
    }
    std::stable_sort(out.begin(), out.end(), [](const PatchHandle& a, const PatchHandle& b) {
        return a.box.x1 != b.box.x1 ? a.box.x1 < b.box.x1 : a.box.y1 < b.box.y1;
    });
    return out;
}

bool RemoteTools::exists(const PatchHandle& region, const std::string& category, std::size_t call_index) {
    auto payload = patch_fields(region);
    payload["category"] = category;
    payload["call_index"] = call_index;
    return field<bool>(call("exists", std::move(payload)), "result", "exists");
}

bool RemoteTools::verify_property(const PatchHandle& patch, const std::string& category,
                                  const std::string& property, std::size_t call_index) {
    auto payload = patch_fields(patch);
    payload["category"] = category;
    payload["property"] = property;
    payload["call_index"] = call_index;
    return field<bool>(call("verify_property", std::move(payload)), "result", "verify_property");
}

std::string RemoteTools::simple_query(const PatchHandle& patch, const std::string& question,
                                      std::size_t call_index) {
    auto payload = patch_fields(patch);
    payload["question"] = question;
    payload["call_index"] = call_index;
    return field<std::string>(call("simple_query", std::move(payload)), "answer", "simple_query");
}

double RemoteTools::compute_depth(const PatchHandle& patch, std::size_t call_index) {
    auto payload = patch_fields(patch);
    payload["call_index"] = call_index;
    return field<double>(call("compute_depth", std::move(payload)), "depth", "compute_depth");
}

std::string RemoteTools::llm_query(const std::string& question, std::size_t call_index) {
    nlohmann::json payload = {{"question", question}, {"call_index", call_index}};
    return field<std::string>(call("llm_query", std::move(payload)), "answer", "llm_query");
}

}  // namespace vps
