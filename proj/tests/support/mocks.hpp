#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "vpsynth/filter.hpp"
#include "vpsynth/llm.hpp"
#include "vpsynth/tools.hpp"

namespace vps::testing {

/// Replies from a script, in order; an exhausted script repeats the last
/// reply. A reply of "!error" throws LlmError.
class ScriptedLlm final : public LlmClient {
public:
    explicit ScriptedLlm(std::vector<std::string> replies, std::optional<double> logprob = std::nullopt);
    std::vector<Completion> complete(const std::string& prompt, int n, double temperature) override;

    std::vector<std::string> prompts;
    int calls = 0;

private:
    std::vector<std::string> replies_;
    std::optional<double> logprob_;
    std::size_t next_ = 0;
};

/// Judge with a fixed answer; `throws` simulates a transport failure.
class FixedJudge final : public AnswerJudge {
public:
    explicit FixedJudge(bool verdict, bool throws = false) : verdict_(verdict), throws_(throws) {}
    bool affirms(std::string_view, std::string_view, std::string_view) override;
    int calls = 0;

private:
    bool verdict_;
    bool throws_;
};

/// Records requests and replies from a queue of (status, body); an empty
/// queue raises ToolError("transport").
class RecordingTransport final : public HttpTransport {
public:
    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::vector<std::pair<std::string, std::string>>& headers) override;

    struct Request {
        std::string path;
        std::string body;
        std::vector<std::pair<std::string, std::string>> headers;
    };
    std::vector<Request> requests;
    std::deque<HttpResponse> responses;
};

/// Wraps every traced binding of a registry with a call counter.
struct InstrumentedRegistry {
    ToolRegistry registry;
    std::shared_ptr<std::atomic<std::size_t>> traced_calls = std::make_shared<std::atomic<std::size_t>>(0);
};

InstrumentedRegistry instrument(ToolRegistry registry);

}  // namespace vps::testing
