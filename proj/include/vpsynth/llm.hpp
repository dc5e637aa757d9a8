#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpsynth/tools.hpp"

namespace vps {

class LlmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Completion {
    std::string text;
    /// Sum of token log-probs when the provider returned them.
    std::optional<double> logprob_sum;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    /// `n` samples for one prompt. Throws LlmError.
    virtual std::vector<Completion> complete(const std::string& prompt, int n, double temperature) = 0;
};

struct LlmConfig {
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::milliseconds timeout{60000};
    bool supports_n = true;
    bool request_logprobs = true;
    int max_tokens = 1024;
};

/// OpenAI-compatible POST {base_url}/chat/completions. One request with `n`
/// when the provider supports it, else n sequential requests; each request is
/// retried once.
class ChatCompletionsClient final : public LlmClient {
public:
    explicit ChatCompletionsClient(LlmConfig config, std::shared_ptr<HttpTransport> transport = nullptr);

    std::vector<Completion> complete(const std::string& prompt, int n, double temperature) override;

    /// Parses a chat-completions response body.
    static std::vector<Completion> parse_response(const std::string& body);

private:
    std::vector<Completion> request(const std::string& prompt, int n, double temperature);

    LlmConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    std::string api_key_;
};

}  // namespace vps
