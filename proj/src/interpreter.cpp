#include "vpsynth/interpreter.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace vps {

namespace {

using namespace vpl;

struct Fault {
    FailureKind kind;
    std::string message;
};

class Machine {
public:
    Machine(const ToolRegistry& tools, StepBudget budget, PatchHandle image, ExecutionTrace& trace)
        : tools_(tools), budget_(budget), trace_(trace) {
        env_.emplace(std::string(kImageParam), Value(std::move(image)));
    }

    std::optional<Value> run(const Block& block) {
        for (const auto& s : block) {
            if (auto v = exec(s)) return v;
        }
        return std::nullopt;
    }

    std::size_t steps() const noexcept { return steps_; }

private:
    void tick() {
        if (++steps_ > budget_.max_steps) {
            steps_ = budget_.max_steps;
            throw Fault{FailureKind::BudgetExhausted,
                        "step budget of " + std::to_string(budget_.max_steps) + " exhausted"};
        }
    }

    std::optional<Value> exec(const Stmt& s) {
        tick();
        return std::visit(
            [&](const auto& n) -> std::optional<Value> {
                using N = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<N, Assign>) {
                    env_[n.name] = eval(n.value);
                } else if constexpr (std::is_same_v<N, AugAssign>) {
                    Value rhs = eval(n.value);
                    env_[n.name] = arith(ArithOp::Add, lookup(n.name), rhs);
                } else if constexpr (std::is_same_v<N, Return>) {
                    return eval(n.value);
                } else if constexpr (std::is_same_v<N, For>) {
                    Value iterable = eval(n.iterable);
                    if (!iterable.is<PatchList>()) {
                        throw Fault{FailureKind::TypeError,
                                    "cannot iterate over " + std::string(type_name(iterable))};
                    }
                    for (const auto& item : iterable.as<PatchList>()) {
                        tick();
                        env_[n.var] = Value(item);
                        if (auto v = run(n.body)) return v;
                    }
                } else if constexpr (std::is_same_v<N, If>) {
                    for (const auto& branch : n.branches) {
                        if (truthy(eval(branch.condition))) return run(branch.body);
                    }
                    if (n.else_body) return run(*n.else_body);
                }
                return std::nullopt;
            },
            s.node);
    }

    const Value& lookup(const std::string& name) const {
        auto it = env_.find(name);
        if (it == env_.end()) throw Fault{FailureKind::TypeError, "unbound variable '" + name + "'"};
        return it->second;
    }

    static bool truthy(const Value& v) {
        return std::visit(
            [](const auto& x) -> bool {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, std::int64_t>) return x != 0;
                if constexpr (std::is_same_v<T, double>) return x != 0.0;
                if constexpr (std::is_same_v<T, std::string>) return !x.empty();
                if constexpr (std::is_same_v<T, bool>) return x;
                if constexpr (std::is_same_v<T, PatchHandle>) return true;
                if constexpr (std::is_same_v<T, PatchList>) return !x.empty();
            },
            v.v);
    }

    static bool numeric(const Value& v) { return v.is<std::int64_t>() || v.is<double>(); }
    static double as_double(const Value& v) {
        return v.is<double>() ? v.as<double>() : static_cast<double>(v.as<std::int64_t>());
    }

    static Value arith(ArithOp op, const Value& a, const Value& b) {
        if (!numeric(a) || !numeric(b)) {
            throw Fault{FailureKind::TypeError, "unsupported operand types for arithmetic: " +
                                                    std::string(type_name(a)) + " and " +
                                                    std::string(type_name(b))};
        }
        if (op == ArithOp::Div) {
            const double d = as_double(b);
            if (d == 0.0) throw Fault{FailureKind::DivisionByZero, "division by zero"};
            return Value(as_double(a) / d);
        }
        if (a.is<std::int64_t>() && b.is<std::int64_t>()) {
            std::int64_t out = 0;
            const auto x = a.as<std::int64_t>(), y = b.as<std::int64_t>();
            bool overflow = false;
            switch (op) {
                case ArithOp::Add: overflow = __builtin_add_overflow(x, y, &out); break;
                case ArithOp::Sub: overflow = __builtin_sub_overflow(x, y, &out); break;
                default: overflow = __builtin_mul_overflow(x, y, &out); break;
            }
            if (overflow) throw Fault{FailureKind::TypeError, "integer overflow"};
            return Value(out);
        }
        const double x = as_double(a), y = as_double(b);
        switch (op) {
            case ArithOp::Add: return Value(x + y);
            case ArithOp::Sub: return Value(x - y);
            default: return Value(x * y);
        }
    }

    static Value compare(CompareOp op, const Value& a, const Value& b) {
        int c = 0;
        if (numeric(a) && numeric(b)) {
            if (a.is<std::int64_t>() && b.is<std::int64_t>()) {
                const auto x = a.as<std::int64_t>(), y = b.as<std::int64_t>();
                c = x < y ? -1 : (x > y ? 1 : 0);
            } else {
                const double x = as_double(a), y = as_double(b);
                c = x < y ? -1 : (x > y ? 1 : 0);
            }
        } else if (a.is<std::string>() && b.is<std::string>()) {
            const int r = a.as<std::string>().compare(b.as<std::string>());
            c = r < 0 ? -1 : (r > 0 ? 1 : 0);
        } else if (a.is<bool>() && b.is<bool>() && (op == CompareOp::Eq || op == CompareOp::Ne)) {
            c = a.as<bool>() == b.as<bool>() ? 0 : 1;
        } else {
            throw Fault{FailureKind::TypeError, "cannot compare " + std::string(type_name(a)) +
                                                    " with " + std::string(type_name(b))};
        }
        switch (op) {
            case CompareOp::Eq: return Value(c == 0);
            case CompareOp::Ne: return Value(c != 0);
            case CompareOp::Lt: return Value(c < 0);
            case CompareOp::Le: return Value(c <= 0);
            case CompareOp::Gt: return Value(c > 0);
            case CompareOp::Ge: return Value(c >= 0);
        }
        return Value(false);
    }

    Value attribute(const Value& receiver, const std::string& name) {
        if (!receiver.is<PatchHandle>()) {
            throw Fault{FailureKind::TypeError, "attribute '" + name + "' needs a patch, got " +
                                                    std::string(type_name(receiver))};
        }
        const Box& b = receiver.as<PatchHandle>().box;
        if (name == "left") return Value(std::int64_t{b.x1});
        if (name == "right") return Value(std::int64_t{b.x2});
        if (name == "top") return Value(std::int64_t{b.y1});
        if (name == "bottom") return Value(std::int64_t{b.y2});
        if (name == "center_x") return Value(b.center_x());
        if (name == "center_y") return Value(b.center_y());
        throw Fault{FailureKind::TypeError, "unknown attribute '" + name + "'"};
    }

    Value invoke(const std::string& name, const PatchHandle* receiver, const std::vector<Value>& args) {
        const Binding* binding = tools_.binding(name);
        if (!binding) throw Fault{FailureKind::ToolError, "no binding for builtin '" + name + "'"};
        if (!binding->traced) {
            try {
                return binding->fn(ToolCall{name, receiver, &args, 0});
            } catch (const TypeError& e) {
                throw Fault{FailureKind::TypeError, e.what()};
            } catch (const ToolError& e) {
                throw Fault{FailureKind::ToolError, e.what()};
            }
        }
        for (int attempt = 0;; ++attempt) {
            TraceEntry entry;
            entry.step = trace_.entries.size() + 1;
            entry.tool = name;
            if (receiver) entry.receiver = TraceReceiver{receiver->patch_id, receiver->grid_box(), receiver->label};
            for (const auto& a : args) entry.args.push_back(render(a));
            try {
                Value out = binding->fn(ToolCall{name, receiver, &args, entry.step});
                entry.result = render(out);
                trace_.entries.push_back(std::move(entry));
                return out;
            } catch (const TypeError& e) {
                entry.error = std::string("type_error: ") + e.what();
                trace_.entries.push_back(std::move(entry));
                throw Fault{FailureKind::TypeError, e.what()};
            } catch (const ToolError& e) {
                entry.error = e.kind() + ": " + e.what();
                trace_.entries.push_back(std::move(entry));
                if (attempt >= 1) throw Fault{FailureKind::ToolError, name + ": " + e.what()};
            }
        }
    }

    std::vector<Value> eval_args(const std::vector<Expr>& args) {
        std::vector<Value> out;
        out.reserve(args.size());
        for (const auto& a : args) out.push_back(eval(a));
        return out;
    }

    Value eval(const Expr& e) {
        tick();
        return std::visit(
            [&](const auto& n) -> Value {
                using N = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<N, IntLit>) {
                    return Value(n.value);
                } else if constexpr (std::is_same_v<N, FloatLit>) {
                    return Value(n.value);
                } else if constexpr (std::is_same_v<N, StrLit>) {
                    return Value(n.value);
                } else if constexpr (std::is_same_v<N, BoolLit>) {
                    return Value(n.value);
                } else if constexpr (std::is_same_v<N, Var>) {
                    return lookup(n.name);
                } else if constexpr (std::is_same_v<N, Index>) {
                    Value target = eval(*n.target);
                    Value index = eval(*n.index);
                    if (!target.is<PatchList>() || !index.is<std::int64_t>()) {
                        throw Fault{FailureKind::TypeError, "cannot index " + std::string(type_name(target)) +
                                                                " with " + std::string(type_name(index))};
                    }
                    const auto& list = target.as<PatchList>();
                    auto i = index.as<std::int64_t>();
                    const auto size = static_cast<std::int64_t>(list.size());
                    if (i < 0) i += size;
                    if (i < 0 || i >= size) {
                        throw Fault{FailureKind::IndexOutOfBounds,
                                    "index " + std::to_string(index.as<std::int64_t>()) +
                                        " out of range for list of length " + std::to_string(size)};
                    }
                    return Value(list[static_cast<std::size_t>(i)]);
                } else if constexpr (std::is_same_v<N, Compare>) {
                    Value a = eval(*n.lhs);
                    Value b = eval(*n.rhs);
                    return compare(n.op, a, b);
                } else if constexpr (std::is_same_v<N, Arith>) {
                    Value a = eval(*n.lhs);
                    Value b = eval(*n.rhs);
                    return arith(n.op, a, b);
                } else if constexpr (std::is_same_v<N, BoolOp>) {
                    const bool lhs = truthy(eval(*n.lhs));
                    if (n.op == BoolOpKind::And && !lhs) return Value(false);
                    if (n.op == BoolOpKind::Or && lhs) return Value(true);
                    return Value(truthy(eval(*n.rhs)));
                } else if constexpr (std::is_same_v<N, Not>) {
                    return Value(!truthy(eval(*n.operand)));
                } else if constexpr (std::is_same_v<N, Call>) {
                    auto args = eval_args(n.args);
                    return invoke(n.callee, nullptr, args);
                } else if constexpr (std::is_same_v<N, MethodCall>) {
                    Value receiver = eval(*n.receiver);
                    if (!receiver.is<PatchHandle>()) {
                        throw Fault{FailureKind::TypeError, "method '" + n.name + "' needs a patch, got " +
                                                                std::string(type_name(receiver))};
                    }
                    auto args = eval_args(n.args);
                    return invoke(n.name, &receiver.as<PatchHandle>(), args);
                } else {
                    return attribute(eval(*n.receiver), n.name);
                }
            },
            e.node);
    }

    const ToolRegistry& tools_;
    StepBudget budget_;
    ExecutionTrace& trace_;
    std::map<std::string, Value, std::less<>> env_;
    std::size_t steps_ = 0;
};

}  // namespace

std::string_view to_string(FailureKind k) {
    switch (k) {
        case FailureKind::TypeError: return "type_error";
        case FailureKind::IndexOutOfBounds: return "index_out_of_bounds";
        case FailureKind::DivisionByZero: return "division_by_zero";
        case FailureKind::BudgetExhausted: return "budget_exhausted";
        case FailureKind::ToolError: return "tool_error";
    }
    return "type_error";
}

std::optional<FailureKind> failure_kind_from_string(std::string_view s) {
    for (auto k : {FailureKind::TypeError, FailureKind::IndexOutOfBounds, FailureKind::DivisionByZero,
                   FailureKind::BudgetExhausted, FailureKind::ToolError}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

PatchHandle VisualInput::image_patch() const {
    PatchHandle p;
    p.patch_id = "image";
    p.scene_ref = scene_ref;
    p.box = Box{0, 0, width, height};
    p.image_width = width;
    p.image_height = height;
    p.label = "image";
    return p;
}

ExecResult execute(const vpl::Program& program, const VisualInput& input, const ToolRegistry& tools,
                   StepBudget budget) {
    ExecResult out;
    if (budget.max_steps == 0) throw std::invalid_argument("step budget must be positive");
    Machine machine(tools, budget, input.image_patch(), out.trace);
    try {
        auto value = machine.run(program.body);
        if (!value) throw Fault{FailureKind::TypeError, "execute_command finished without returning"};
        out.trace.outcome.returned = true;
        out.trace.outcome.value = render(*value);
        out.result = out.trace.outcome.value;
    } catch (const Fault& f) {
        out.trace.outcome.returned = false;
        out.trace.outcome.error_kind = f.kind;
        out.trace.outcome.message = f.message;
        out.trace.outcome.step = out.trace.entries.size();
    }
    out.trace.step_budget_used = machine.steps();
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

ojson ExecutionTrace::to_json() const {
    ojson entries_json = ojson::array();
    for (const auto& e : entries) {
        ojson j;
        j["step"] = e.step;
        j["tool"] = e.tool;
        if (e.receiver) {
            j["receiver"] = {{"patch_id", e.receiver->patch_id},
                             {"box", e.receiver->box},
                             {"label", e.receiver->label}};
        } else {
            j["receiver"] = nullptr;
        }
        j["args"] = e.args;
        j["result"] = e.result;
        if (e.error) j["error"] = *e.error;
        entries_json.push_back(std::move(j));
    }
    ojson o;
    if (outcome.returned) {
        o["status"] = "returned";
        o["value"] = outcome.value;
    } else {
        o["status"] = "failed";
        o["error_kind"] = std::string(vps::to_string(outcome.error_kind));
        o["message"] = outcome.message;
        o["step"] = outcome.step;
    }
    ojson j;
    j["entries"] = std::move(entries_json);
    j["outcome"] = std::move(o);
    j["step_budget_used"] = step_budget_used;
    return j;
}

ExecutionTrace ExecutionTrace::from_json(const ojson& j) {
    ExecutionTrace t;
    for (const auto& e : j.at("entries")) {
        TraceEntry entry;
        entry.step = e.at("step").get<std::size_t>();
        entry.tool = e.at("tool").get<std::string>();
        if (e.contains("receiver") && !e.at("receiver").is_null()) {
            const auto& r = e.at("receiver");
            entry.receiver = TraceReceiver{r.at("patch_id").get<std::string>(), r.at("box").get<std::string>(),
                                           r.value("label", std::string{})};
        }
        entry.args = e.at("args").get<std::vector<std::string>>();
        entry.result = e.at("result").get<std::string>();
        if (e.contains("error")) entry.error = e.at("error").get<std::string>();
        t.entries.push_back(std::move(entry));
    }
    const auto& o = j.at("outcome");
    t.outcome.returned = o.at("status").get<std::string>() == "returned";
    if (t.outcome.returned) {
        t.outcome.value = o.at("value").get<std::string>();
    } else {
        auto kind = failure_kind_from_string(o.at("error_kind").get<std::string>());
        if (!kind) throw std::invalid_argument("unknown failure kind in trace");
        t.outcome.error_kind = *kind;
        t.outcome.message = o.at("message").get<std::string>();
        t.outcome.step = o.at("step").get<std::size_t>();
    }
    t.step_budget_used = j.at("step_budget_used").get<std::size_t>();
    return t;
}

std::string ExecutionTrace::dump() const {
    std::ostringstream os;
    for (const auto& e : entries) {
        os << "[" << e.step << "] ";
        if (e.receiver) os << e.receiver->patch_id << "(" << e.receiver->box << ").";
        os << e.tool << "(";
        for (std::size_t i = 0; i < e.args.size(); ++i) {
            if (i) os << ", ";
            os << '"' << e.args[i] << '"';
        }
        os << ")";
        if (e.error) {
            os << " !! " << *e.error;
        } else {
            os << " -> " << e.result;
        }
        os << "\n";
    }
    if (outcome.returned) {
        os << "returned: " << outcome.value << "\n";
    } else {
        os << "failed: " << vps::to_string(outcome.error_kind) << " at step " << outcome.step << ": "
           << outcome.message << "\n";
    }
    os << "steps used: " << step_budget_used << "\n";
    return os.str();
}

}  // namespace vps
