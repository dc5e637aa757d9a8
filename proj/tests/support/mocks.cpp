#include "mocks.hpp"

#include "vpsynth/vpl.hpp"

namespace vps::testing {

ScriptedLlm::ScriptedLlm(std::vector<std::string> replies, std::optional<double> logprob)
    : replies_(std::move(replies)), logprob_(logprob) {}

std::vector<Completion> ScriptedLlm::complete(const std::string& prompt, int n, double) {
    ++calls;
    prompts.push_back(prompt);
    std::vector<Completion> out;
    for (int i = 0; i < n; ++i) {
        if (replies_.empty()) throw LlmError("no scripted reply");
        const auto& r = replies_[std::min(next_, replies_.size() - 1)];
        ++next_;
        if (r == "!error") throw LlmError("scripted failure");
        out.push_back({r, logprob_ ? std::optional<double>(*logprob_ - i) : std::nullopt});
    }
    return out;
}

bool FixedJudge::affirms(std::string_view, std::string_view, std::string_view) {
    ++calls;
    if (throws_) throw LlmError("judge unreachable");
    return verdict_;
}

HttpResponse RecordingTransport::post_json(const std::string& path, const std::string& body,
                                           const std::vector<std::pair<std::string, std::string>>& headers) {
    requests.push_back({path, body, headers});
    if (responses.empty()) throw ToolError("transport", "no scripted response");
    auto r = responses.front();
    responses.pop_front();
    return r;
}

InstrumentedRegistry instrument(ToolRegistry registry) {
    InstrumentedRegistry out{std::move(registry)};
    for (const auto& spec : vpl::builtins()) {
        if (!spec.traced) continue;
        const Binding* b = out.registry.binding(spec.name);
        if (!b) continue;
        auto fn = b->fn;
        auto counter = out.traced_calls;
        out.registry.bind(std::string(spec.name),
                          [fn, counter](const ToolCall& c) {
                              ++*counter;
                              return fn(c);
                          },
                          true);
    }
    return out;
}

}  // namespace vps::testing
