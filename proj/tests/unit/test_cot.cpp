#include <doctest.h>

#include "common.hpp"
#include "mocks.hpp"
#include "vpsynth/cot.hpp"
#include "vpsynth/progen.hpp"

using namespace vps;
using vps::test::object;

namespace {

ExecutionTrace run(const std::string& source, const SceneGraph& s) {
    auto p = vpl::parse(source);
    REQUIRE_MESSAGE(p.ok(), (p.ok() ? std::string() : p.error().to_string()));
    auto tools = ToolRegistry::standard(std::make_shared<OracleTools>(s, test::vocab(), test::knowledge(), NoiseConfig{}));
    auto r = execute(*p, VisualInput::of(s), tools);
    REQUIRE(r.result);
    return r.trace;
}

SceneGraph tennis() {
    return test::scene({object("o0", "tennis ball", {826, 665, 869, 721}, {"yellow"}), object("o1", "person", {100, 100, 400, 900})},
                       1000, 1000);
}

SceneGraph three_buses() {
    return test::scene({object("o0", "bus", {20, 40, 120, 140}, {"yellow"}), object("o1", "bus", {200, 40, 300, 140}, {"red"}),
                        object("o2", "bus", {400, 40, 500, 140}, {"blue"})});
}

StructuredQuery count(std::string category, std::vector<std::string> attrs = {}) {
    StructuredQuery q;
    q.kind = QueryKind::Count;
    q.category = std::move(category);
    q.attributes = std::move(attrs);
    return q;
}

std::shared_ptr<testing::ScriptedLlm> llm(std::string reply) {
    return std::make_shared<testing::ScriptedLlm>(std::vector<std::string>{std::move(reply)});
}

PromptTemplate cot_prompt() { return PromptTemplate::load(assets_dir() / "prompts" / "cot_conversion.txt"); }

}  // namespace

TEST_CASE("single detection count reads like the reference rationale") {
    const auto s = tennis();
    const auto q = count("tennis ball");
    const auto trace = run(canonical_program(q), s);
    const auto text = render_query_text(q, *test::vocab());
    const auto r = render_rationale_template(trace, text, "1");
    CHECK(r.text == "There is a tennis ball at 826 665 869 721. Thus, there is 1 tennis ball.");
    CHECK(r.answer_span() == "1");
    CHECK(validate_rationale(r, trace, "1").empty());
}

TEST_CASE("zero detections say so and conclude with 0") {
    const auto s = tennis();
    const auto q = count("dog");
    const auto trace = run(canonical_program(q), s);
    const auto r = render_rationale_template(trace, render_query_text(q, *test::vocab()), "0");
    CHECK(r.text == "There are no dogs in the picture. Thus, there are 0 dogs.");
    CHECK(validate_rationale(r, trace, "0").empty());
}

TEST_CASE("three buses with one yellow give five sentences") {
    const auto s = three_buses();
    const auto q = count("bus", {"yellow"});
    const auto trace = run(canonical_program(q), s);
    REQUIRE(trace.entries.size() == 4);
    const auto r = render_rationale_template(trace, render_query_text(q, *test::vocab()), "1");
    CHECK(r.sentences.size() == 1 + 3 + 1);
    CHECK(r.sentences[0].rfind("There are 3 buses at ", 0) == 0);
    CHECK(r.sentences[1].find(" is yellow.") != std::string::npos);
    CHECK(r.sentences[2].find(" is not yellow.") != std::string::npos);
    CHECK(r.sentences[4] == "Thus, there is 1 yellow bus.");
    CHECK(r.covered_steps == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(validate_rationale(r, trace, "1").empty());
    CHECK(render_rationale_template(trace, render_query_text(q, *test::vocab()), "1").text == r.text);
}

TEST_CASE("failed traces cannot be rendered") {
    ExecutionTrace t;
    t.outcome.returned = false;
    CHECK_THROWS_AS(render_rationale_template(t, "q", "a"), RationaleError);
}

TEST_CASE("non-count questions end with the answer sentence") {
    const auto s = three_buses();
    const auto trace = run("def execute_command(image):\n    b = image.find('bus')\n"
                           "    return b[0].simple_query('What color is this?')\n",
                           s);
    const auto r = render_rationale_template(trace, "What color is the bus?", "yellow");
    CHECK(r.sentences.back() == "Thus, the answer is yellow.");
    CHECK(r.sentences[1] == "The bus at 31 83 187 291 is yellow.");
    CHECK(validate_rationale(r, trace, "yellow").empty());
}

TEST_CASE("validation catches missing coverage and a wrong answer") {
    const auto s = three_buses();
    const auto q = count("bus", {"yellow"});
    const auto trace = run(canonical_program(q), s);
    auto r = render_rationale_template(trace, render_query_text(q, *test::vocab()), "1");
    CHECK_FALSE(validate_rationale(r, trace, "2").empty());
    r.covered_steps.pop_back();
    CHECK_FALSE(validate_rationale(r, trace, "1").empty());
}

TEST_CASE("answer location picks the last normalized match") {
    const auto text = std::string("I saw two buses. Thus, the answer is Two.");
    const auto span = locate_answer(text, "2");
    REQUIRE(span);
    CHECK(text.substr(span->first, span->second) == "Two");
    CHECK_FALSE(locate_answer("nothing here", "2"));
}

TEST_CASE("a valid llm rationale is accepted verbatim") {
    const auto s = tennis();
    const auto q = count("tennis ball");
    const auto trace = run(canonical_program(q), s);
    const std::string reply = "Looking at the image, I can see a tennis ball at 826 665 869 721. So the count is 1.";
    auto mock = llm(reply);
    LlmRationaleRenderer renderer(mock, cot_prompt());
    const auto r = renderer.render(trace, render_query_text(q, *test::vocab()), canonical_program(q), "1");
    CHECK(r.text == reply);
    CHECK(r.answer_span() == "1");
    REQUIRE(mock->prompts.size() == 1);
    CHECK(mock->prompts[0].find(trace.dump()) != std::string::npos);
}

TEST_CASE("an llm rationale without the answer falls back to the template") {
    const auto s = tennis();
    const auto q = count("tennis ball");
    const auto trace = run(canonical_program(q), s);
    LlmRationaleRenderer renderer(llm("There is a tennis ball at 826 665 869 721."), cot_prompt());
    const auto r = renderer.render(trace, render_query_text(q, *test::vocab()), canonical_program(q), "1");
    CHECK(r.text == "There is a tennis ball at 826 665 869 721. Thus, there is 1 tennis ball.");
}

TEST_CASE("an llm rationale missing a box falls back to the template") {
    const auto s = three_buses();
    const auto q = count("bus", {"yellow"});
    const auto trace = run(canonical_program(q), s);
    LlmRationaleRenderer renderer(llm("One bus is yellow. Thus there is 1 yellow bus."), cot_prompt());
    const auto r = renderer.render(trace, render_query_text(q, *test::vocab()), canonical_program(q), "1");
    CHECK(r.sentences.size() == 5);
}

TEST_CASE("spelled out numbers count as the answer") {
    const auto s = three_buses();
    const auto trace = run("def execute_command(image):\n    return str(len(image.find('bus')) - 1)\n", s);
    const auto boxes = trace.entries[0].result;
    const std::string reply = "The buses are at " + boxes.substr(1, boxes.size() - 2) + ". Thus, the answer is two.";
    const auto r = LlmRationaleRenderer::accept(reply, trace, "2");
    REQUIRE(r);
    CHECK(r->answer_span() == "two");
}

TEST_CASE("llm transport errors fall back to the template") {
    const auto s = tennis();
    const auto q = count("tennis ball");
    const auto trace = run(canonical_program(q), s);
    LlmRationaleRenderer renderer(llm("!error"), cot_prompt());
    const auto r = renderer.render(trace, render_query_text(q, *test::vocab()), canonical_program(q), "1");
    CHECK(r.text.rfind("There is a tennis ball", 0) == 0);
}
