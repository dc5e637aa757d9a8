#include <doctest.h>

#include <cstdlib>

#include "common.hpp"
#include "mocks.hpp"
#include "vpsynth/interpreter.hpp"
#include "vpsynth/llm.hpp"
#include "vpsynth/tools.hpp"

using namespace vps;

namespace {

RemoteToolConfig remote_config() {
    RemoteToolConfig c;
    c.base_url = "http://tools.invalid";
    c.api_key_env = "VPSYNTH_TEST_TOOLS_KEY";
    return c;
}

PatchHandle image_patch() { return VisualInput{"s_0000", 640, 480}.image_patch(); }

struct OfflineGuard {
    OfflineGuard() { set_offline(true); }
    ~OfflineGuard() { set_offline(false); }
};

}  // namespace

TEST_CASE("find maps a two-box response to two patches in reading order") {
    auto t = std::make_shared<testing::RecordingTransport>();
    t->responses.push_back({200, R"({"boxes": [[300, 10, 400, 90], [10, 20, 100, 120]]})"});
    RemoteTools tools(remote_config(), t);
    const auto patches = tools.find(image_patch(), "bus", 3);
    REQUIRE(patches.size() == 2);
    CHECK(patches[0].box == Box{10, 20, 100, 120});
    CHECK(patches[1].box == Box{300, 10, 400, 90});
    CHECK(patches[0].label == "bus");

    REQUIRE(t->requests.size() == 1);
    CHECK(t->requests[0].path == "/find");
    const auto body = nlohmann::json::parse(t->requests[0].body);
    CHECK(body["tool"] == "find");
    CHECK(body["category"] == "bus");
    CHECK(body["call_index"] == 3);
    CHECK(body["x2"] == 640);
    CHECK(body["scene_ref"] == "s_0000");
}

TEST_CASE("scalar routes read their response fields") {
    auto t = std::make_shared<testing::RecordingTransport>();
    t->responses = {{200, R"({"result": true})"},
                    {200, R"({"result": false})"},
                    {200, R"({"answer": "yellow"})"},
                    {200, R"({"depth": 0.25})"},
                    {200, R"({"answer": "Cristofori"})"}};
    RemoteTools tools(remote_config(), t);
    const auto img = image_patch();
    CHECK(tools.exists(img, "dog", 1));
    CHECK_FALSE(tools.verify_property(img, "bus", "yellow", 2));
    CHECK(tools.simple_query(img, "What color is this?", 3) == "yellow");
    CHECK(tools.compute_depth(img, 4) == doctest::Approx(0.25));
    CHECK(tools.llm_query("Who invented the piano?", 5) == "Cristofori");
    CHECK(nlohmann::json::parse(t->requests[1].body)["property"] == "yellow");
    CHECK(t->requests[4].path == "/llm_query");
}

TEST_CASE("a 500 twice surfaces as a tool error after one retry") {
    auto t = std::make_shared<testing::RecordingTransport>();
    t->responses = {{500, "oops"}, {500, "oops"}};
    auto registry = ToolRegistry::standard(std::make_shared<RemoteTools>(remote_config(), t));
    auto p = vpl::parse("def execute_command(image):\n    b = image.find('bus')\n    return str(len(b))\n");
    REQUIRE(p.ok());
    const auto r = execute(*p, VisualInput{"s_0000", 640, 480}, registry);
    CHECK(t->requests.size() == 2);
    CHECK_FALSE(r.result);
    CHECK(r.trace.outcome.error_kind == FailureKind::ToolError);
    CHECK(r.trace.outcome.message.find("500") != std::string::npos);
}

TEST_CASE("schema mismatches and transport failures are tool errors") {
    auto t = std::make_shared<testing::RecordingTransport>();
    t->responses = {{200, R"({"answer": 3})"}, {200, "not json"}};
    RemoteTools tools(remote_config(), t);
    try {
        tools.simple_query(image_patch(), "What is this?", 1);
        FAIL("expected ToolError");
    } catch (const ToolError& e) {
        CHECK(e.kind() == "schema");
    }
    CHECK_THROWS_AS(tools.exists(image_patch(), "dog", 2), ToolError);
    try {
        tools.exists(image_patch(), "dog", 3);
        FAIL("expected ToolError");
    } catch (const ToolError& e) {
        CHECK(e.kind() == "transport");
    }
}

TEST_CASE("the api key is sent as a bearer token") {
    ::setenv("VPSYNTH_TEST_TOOLS_KEY", "sk-secret123", 1);
    auto t = std::make_shared<testing::RecordingTransport>();
    t->responses.push_back({200, R"({"result": true})"});
    RemoteTools tools(remote_config(), t);
    tools.exists(image_patch(), "dog", 1);
    ::unsetenv("VPSYNTH_TEST_TOOLS_KEY");
    REQUIRE(t->requests[0].headers.size() == 1);
    CHECK(t->requests[0].headers[0].second == "Bearer sk-secret123");
}

TEST_CASE("secrets are redacted before logging") {
    const auto out = redact_secrets(R"({"api_key": "sk-abc", "q": "x"} Authorization: Bearer tok.en-1)");
    CHECK(out.find("sk-abc") == std::string::npos);
    CHECK(out.find("tok.en-1") == std::string::npos);
    CHECK(out.find("\"q\": \"x\"") != std::string::npos);
}

TEST_CASE("offline mode refuses every network client before any request") {
    OfflineGuard guard;
    auto t = std::make_shared<testing::RecordingTransport>();
    CHECK_THROWS_AS(RemoteTools(remote_config(), t), OfflineError);
    CHECK_THROWS_AS(RemoteTools{remote_config()}, OfflineError);
    CHECK_THROWS_AS(HttplibTransport("http://localhost:1", std::chrono::milliseconds(100)), OfflineError);
    LlmConfig lc;
    lc.base_url = "http://localhost:1/v1";
    lc.model = "m";
    CHECK_THROWS_AS(ChatCompletionsClient(lc, t), OfflineError);
    CHECK(t->requests.empty());
}

TEST_CASE("remote config validation") {
    auto c = remote_config();
    c.base_url.clear();
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = remote_config();
    c.routes.erase("find");
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(HttplibTransport::split_base("https://api.example.com/v1/") ==
          std::pair<std::string, std::string>{"https://api.example.com", "/v1"});
    CHECK_THROWS_AS(HttplibTransport::split_base("localhost:8080"), std::invalid_argument);
}

TEST_CASE("chat completions request and response shapes") {
    auto t = std::make_shared<testing::RecordingTransport>();
    t->responses.push_back({200, R"({"choices": [
        {"message": {"content": "a"}, "logprobs": {"content": [{"logprob": -0.5}, {"logprob": -0.25}]}},
        {"message": {"content": "b"}}]})"});
    LlmConfig lc;
    lc.base_url = "http://llm.invalid/v1";
    lc.model = "test-model";
    ChatCompletionsClient client(lc, t);
    const auto out = client.complete("prompt text", 2, 0.5);
    REQUIRE(out.size() == 2);
    CHECK(out[0].text == "a");
    REQUIRE(out[0].logprob_sum);
    CHECK(*out[0].logprob_sum == doctest::Approx(-0.75));
    CHECK_FALSE(out[1].logprob_sum);
    const auto body = nlohmann::json::parse(t->requests[0].body);
    CHECK(t->requests[0].path == "/chat/completions");
    CHECK(body["model"] == "test-model");
    CHECK(body["n"] == 2);
    CHECK(body["temperature"] == 0.5);
    CHECK(body["messages"][0]["content"] == "prompt text");
}

TEST_CASE("chat completions retry once then raise") {
    auto t = std::make_shared<testing::RecordingTransport>();
    t->responses = {{503, ""}, {200, R"({"choices": [{"message": {"content": "ok"}}]})"}};
    LlmConfig lc;
    lc.base_url = "http://llm.invalid/v1";
    lc.model = "m";
    ChatCompletionsClient client(lc, t);
    CHECK(client.complete("p", 1, 0.0).at(0).text == "ok");
    t->responses = {{503, ""}, {503, ""}};
    CHECK_THROWS_AS(client.complete("p", 1, 0.0), LlmError);
    CHECK(t->requests.size() == 4);
}

TEST_CASE("providers without n get sequential requests") {
    auto t = std::make_shared<testing::RecordingTransport>();
    for (int i = 0; i < 3; ++i) t->responses.push_back({200, R"({"choices": [{"message": {"content": "x"}}]})"});
    LlmConfig lc;
    lc.base_url = "http://llm.invalid/v1";
    lc.model = "m";
    lc.supports_n = false;
    ChatCompletionsClient client(lc, t);
    CHECK(client.complete("p", 3, 0.5).size() == 3);
    CHECK(t->requests.size() == 3);
    CHECK_THROWS_AS(ChatCompletionsClient::parse_response("{}"), LlmError);
}
