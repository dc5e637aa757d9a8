#include "vpsynth/llm.hpp"

#include <cstdlib>

#include <spdlog/spdlog.h>

namespace vps {

ChatCompletionsClient::ChatCompletionsClient(LlmConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
    if (offline()) throw OfflineError("LLM client cannot be constructed in offline mode");
    if (config_.base_url.empty()) throw std::invalid_argument("llm: base_url is empty");
    if (config_.model.empty()) throw std::invalid_argument("llm: model is empty");
    if (!transport_) transport_ = std::make_shared<HttplibTransport>(config_.base_url, config_.timeout);
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::vector<Completion> ChatCompletionsClient::parse_response(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("choices") || !j["choices"].is_array()) {
        throw LlmError("chat completion response has no choices array");
    }
    std::vector<Completion> out;
    for (const auto& choice : j["choices"]) {
        Completion c;
        const auto msg = choice.find("message");
        if (msg != choice.end() && msg->contains("content") && (*msg)["content"].is_string()) {
            c.text = (*msg)["content"].get<std::string>();
        } else if (choice.contains("text") && choice["text"].is_string()) {
            c.text = choice["text"].get<std::string>();
        } else {
            throw LlmError("chat completion choice has no text");
        }
        if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
            const auto& lp = choice["logprobs"];
            if (lp.contains("content") && lp["content"].is_array()) {
                double sum = 0;
                for (const auto& tok : lp["content"]) {
                    if (tok.contains("logprob") && tok["logprob"].is_number()) sum += tok["logprob"].get<double>();
                }
                c.logprob_sum = sum;
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Completion> ChatCompletionsClient::request(const std::string& prompt, int n, double temperature) {
    nlohmann::json body = {
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", temperature},
        {"n", n},
        {"max_tokens", config_.max_tokens},
    };
    if (config_.request_logprobs) body["logprobs"] = true;
    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            const auto res = transport_->post_json("/chat/completions", body.dump(), headers);
            if (res.status >= 200 && res.status < 300) return parse_response(res.body);
            last_error = "HTTP " + std::to_string(res.status);
        } catch (const ToolError& e) {
            last_error = e.what();
        } catch (const LlmError& e) {
            last_error = e.what();
        }
        spdlog::warn("chat completion attempt {} failed: {}", attempt + 1, last_error);
    }
    throw LlmError("chat completion failed: " + last_error);
}

std::vector<Completion> ChatCompletionsClient::complete(const std::string& prompt, int n, double temperature) {
    if (n < 1) throw std::invalid_argument("llm: n must be >= 1");
    if (config_.supports_n) return request(prompt, n, temperature);
    std::vector<Completion> out;
    for (int i = 0; i < n; ++i) {
        auto one = request(prompt, 1, temperature);
        out.insert(out.end(), one.begin(), one.end());
    }
    return out;
}

}  // namespace vps
