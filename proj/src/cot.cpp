#include "vpsynth/cot.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <spdlog/spdlog.h>

#include "vpsynth/filter.hpp"

namespace vps {

namespace {

std::vector<std::string> split_boxes(std::string_view rendered) {
    std::vector<std::string> out;
    if (rendered.size() < 2 || rendered.front() != '[' || rendered.back() != ']') return out;
    rendered = rendered.substr(1, rendered.size() - 2);
    while (!rendered.empty()) {
        const auto sep = rendered.find("; ");
        out.emplace_back(rendered.substr(0, sep));
        if (sep == std::string_view::npos) break;
        rendered.remove_prefix(sep + 2);
    }
    return out;
}

std::string join_boxes(const std::vector<std::string>& boxes) {
    std::string out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (i) out += (i + 1 == boxes.size()) ? " and " : ", ";
        out += boxes[i];
    }
    return out;
}

std::string arg(const TraceEntry& e, std::size_t i) { return i < e.args.size() ? e.args[i] : std::string(); }

std::string receiver_label(const TraceEntry& e) {
    return e.receiver && !e.receiver->label.empty() ? e.receiver->label : "region";
}

std::string receiver_box(const TraceEntry& e) { return e.receiver ? e.receiver->box : std::string(); }

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool is_attribute_question(std::string_view q) {
    const auto l = lower(std::string(q));
    return l.starts_with("what ") && l.ends_with(" is this?") && l != "what is this?";
}

std::string entry_sentence(const TraceEntry& e) {
    if (e.tool == "find") {
        const auto category = arg(e, 0);
        const auto boxes = split_boxes(e.result);
        if (boxes.empty()) return "There are no " + pluralize(category) + " in the picture.";
        if (boxes.size() == 1) {
            return "There is " + std::string(indefinite_article(category)) + " " + category + " at " + boxes[0] + ".";
        }
        return "There are " + std::to_string(boxes.size()) + " " + pluralize(category) + " at " + join_boxes(boxes) +
               ".";
    }
    if (e.tool == "exists") {
        const auto category = arg(e, 0);
        if (e.result == "True") {
            return "There is " + std::string(indefinite_article(category)) + " " + category + " in the picture.";
        }
        return "There is no " + category + " in the picture.";
    }
    if (e.tool == "verify_property") {
        return "The " + arg(e, 0) + " at " + receiver_box(e) + (e.result == "True" ? " is " : " is not ") + arg(e, 1) +
               ".";
    }
    if (e.tool == "simple_query") {
        const auto q = arg(e, 0);
        if (is_attribute_question(q)) {
            return "The " + receiver_label(e) + " at " + receiver_box(e) + " is " + e.result + ".";
        }
        return "For the " + receiver_label(e) + " at " + receiver_box(e) + ", the answer to \"" + q + "\" is " +
               e.result + ".";
    }
    if (e.tool == "compute_depth") {
        return "The " + receiver_label(e) + " at " + receiver_box(e) + " has depth " + e.result + ".";
    }
    if (e.tool == "crop") return "Focusing on the region at " + e.result + ".";
    if (e.tool == "llm_query") {
        return "By external knowledge, the answer to \"" + arg(e, 0) + "\" is " + e.result + ".";
    }
    return "Calling " + e.tool + " gives " + e.result + ".";
}

bool is_integer(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// "How many yellow buses are in the picture?" -> "yellow buses"
std::optional<std::string> counted_noun(std::string_view query) {
    constexpr std::string_view head = "How many ";
    if (!query.starts_with(head)) return std::nullopt;
    query.remove_prefix(head.size());
    const auto end = query.find(" are");
    if (end == std::string_view::npos || end == 0) return std::nullopt;
    return std::string(query.substr(0, end));
}

bool contains_ci(std::string_view hay, std::string_view needle) {
    return lower(std::string(hay)).find(lower(std::string(needle))) != std::string::npos;
}

bool mentions(std::string_view text, const std::vector<std::string>& any_of) {
    return std::any_of(any_of.begin(), any_of.end(), [&](const auto& m) { return contains_ci(text, m); });
}

}  // namespace

std::vector<std::vector<std::string>> required_mentions(const TraceEntry& e) {
    if (e.error) return {};
    const auto category = arg(e, 0);
    if (e.tool == "find") {
        const auto boxes = split_boxes(e.result);
        if (boxes.empty()) return {{category, pluralize(category)}};
        std::vector<std::vector<std::string>> out;
        for (const auto& b : boxes) out.push_back({b});
        return out;
    }
    if (e.tool == "exists") return {{category, pluralize(category)}};
    if (e.tool == "verify_property") return {{receiver_box(e)}};
    if (e.tool == "simple_query" || e.tool == "compute_depth") return {{receiver_box(e)}, {e.result}};
    return {{e.result}};
}

Rationale render_rationale_template(const ExecutionTrace& trace, std::string_view query_text,
                                    std::string_view answer) {
    if (!trace.outcome.returned) throw RationaleError("cannot render a rationale for a failed trace");
    Rationale r;
    for (const auto& e : trace.entries) {
        r.covered_steps.push_back(e.step);
        if (e.error) continue;
        r.sentences.push_back(entry_sentence(e));
    }

    std::string prefix, suffix;
    const auto noun = counted_noun(query_text);
    if (noun && is_integer(answer)) {
        if (answer == "1") {
            prefix = "Thus, there is ";
            suffix = " " + singularize(*noun) + ".";
        } else {
            prefix = "Thus, there are ";
            suffix = " " + *noun + ".";
        }
    } else {
        prefix = "Thus, the answer is ";
        suffix = ".";
    }
    r.sentences.push_back(prefix + std::string(answer) + suffix);

    for (std::size_t i = 0; i < r.sentences.size(); ++i) {
        if (i) r.text += ' ';
        if (i + 1 == r.sentences.size()) {
            r.answer_offset = r.text.size() + prefix.size();
            r.answer_length = answer.size();
        }
        r.text += r.sentences[i];
    }
    return r;
}

std::optional<std::pair<std::size_t, std::size_t>> locate_answer(std::string_view text, std::string_view answer) {
    const auto target = normalize_answer(answer);
    if (target.empty()) return std::nullopt;
    std::vector<std::pair<std::size_t, std::size_t>> tokens;  // [begin, end)
    for (std::size_t i = 0; i < text.size();) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const auto b = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > b) tokens.emplace_back(b, i);
    }
    const auto target_words = static_cast<std::size_t>(std::count(target.begin(), target.end(), ' ')) + 1;
    const auto max_window = target_words + 3;
    std::optional<std::pair<std::size_t, std::size_t>> best;
    for (std::size_t s = 0; s < tokens.size(); ++s) {
        for (std::size_t w = 1; w <= max_window && s + w <= tokens.size(); ++w) {
            auto b = tokens[s].first;
            auto e = tokens[s + w - 1].second;
            if (normalize_answer(text.substr(b, e - b)) != target) continue;
            while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
            while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
            if (!best || e > best->first + best->second ||
                (e == best->first + best->second && e - b < best->second)) {
                best = std::make_pair(b, e - b);
            }
            break;
        }
    }
    return best;
}

std::string validate_rationale(const Rationale& r, const ExecutionTrace& trace, std::string_view answer) {
    if (!trace.outcome.returned) return "trace did not return";
    const std::set<std::size_t> covered(r.covered_steps.begin(), r.covered_steps.end());
    for (const auto& e : trace.entries) {
        if (!covered.count(e.step)) return "trace step " + std::to_string(e.step) + " is not covered";
        for (const auto& m : required_mentions(e)) {
            if (!mentions(r.text, m)) return "trace step " + std::to_string(e.step) + " never mentions '" + m.front() + "'";
        }
    }
    if (r.answer_offset + r.answer_length > r.text.size() || r.answer_length == 0) return "answer span out of range";
    if (normalize_answer(r.answer_span()) != normalize_answer(answer)) {
        return "answer span '" + std::string(r.answer_span()) + "' does not match '" + std::string(answer) + "'";
    }
    return {};
}

LlmRationaleRenderer::LlmRationaleRenderer(std::shared_ptr<LlmClient> llm, PromptTemplate prompt, double temperature)
    : llm_(std::move(llm)), prompt_(std::move(prompt)), temperature_(temperature) {
    if (!llm_) throw std::invalid_argument("rationale renderer needs an LLM client");
}

std::optional<Rationale> LlmRationaleRenderer::accept(std::string text, const ExecutionTrace& trace,
                                                      std::string_view answer) {
    const auto b = text.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return std::nullopt;
    text = text.substr(b, text.find_last_not_of(" \t\r\n") - b + 1);

    Rationale r;
    r.text = std::move(text);
    for (const auto& e : trace.entries) {
        const auto needed = required_mentions(e);
        if (std::all_of(needed.begin(), needed.end(), [&](const auto& m) { return mentions(r.text, m); })) {
            r.covered_steps.push_back(e.step);
        }
    }
    const auto span = locate_answer(r.text, answer);
    if (!span) return std::nullopt;
    r.answer_offset = span->first;
    r.answer_length = span->second;
    if (!validate_rationale(r, trace, answer).empty()) return std::nullopt;
    return r;
}

Rationale LlmRationaleRenderer::render(const ExecutionTrace& trace, std::string_view query_text,
                                       std::string_view program_source, std::string_view answer) const {
    try {
        const auto prompt = prompt_.fill({{"query", std::string(query_text)},
                                          {"program", std::string(program_source)},
                                          {"execution_trace", trace.dump()},
                                          {"output", std::string(answer)}});
        const auto replies = llm_->complete(prompt, 1, temperature_);
        if (!replies.empty()) {
            if (auto r = accept(replies.front().text, trace, answer)) return *r;
            spdlog::info("LLM rationale failed validation, using the template");
        }
    } catch (const LlmError& e) {
        spdlog::warn("LLM rationale unavailable, using the template: {}", e.what());
    }
    return render_rationale_template(trace, query_text, answer);
}

}  // namespace vps
