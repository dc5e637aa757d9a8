#include <charconv>
#include <cmath>
#include <string>

#include "vpsynth/vpl.hpp"

namespace vps::vpl {

namespace {

// Binding strength, loosest first. Operands printed below their required
// strength get parentheses.
enum Prec : int {
    kOr = 1,
    kAnd = 2,
    kNot = 3,
    kCompare = 4,
    kSum = 5,
    kProduct = 6,
    kUnary = 7,
    kPostfix = 8,
    kAtom = 9,
};

std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\'': out += "\\'"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    out += '\'';
    return out;
}

std::string format_float(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, p);
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

std::string_view op_text(CompareOp op) {
    switch (op) {
        case CompareOp::Eq: return "==";
        case CompareOp::Ne: return "!=";
        case CompareOp::Lt: return "<";
        case CompareOp::Le: return "<=";
        case CompareOp::Gt: return ">";
        case CompareOp::Ge: return ">=";
    }
    return "==";
}

std::string_view op_text(ArithOp op) {
    switch (op) {
        case ArithOp::Add: return "+";
        case ArithOp::Sub: return "-";
        case ArithOp::Mul: return "*";
        case ArithOp::Div: return "/";
    }
    return "+";
}

int precedence(const Expr& e) {
    return std::visit(
        [](const auto& n) -> int {
            using N = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<N, IntLit>) {
                return n.value < 0 ? kUnary : kAtom;
            } else if constexpr (std::is_same_v<N, FloatLit>) {
                return std::signbit(n.value) ? kUnary : kAtom;
            } else if constexpr (std::is_same_v<N, BoolOp>) {
                return n.op == BoolOpKind::Or ? kOr : kAnd;
            } else if constexpr (std::is_same_v<N, Not>) {
                return kNot;
            } else if constexpr (std::is_same_v<N, Compare>) {
                return kCompare;
            } else if constexpr (std::is_same_v<N, Arith>) {
                return (n.op == ArithOp::Add || n.op == ArithOp::Sub) ? kSum : kProduct;
            } else if constexpr (std::is_same_v<N, Index> || std::is_same_v<N, MethodCall> ||
                                 std::is_same_v<N, Attr> || std::is_same_v<N, Call>) {
                return kPostfix;
            } else {
                return kAtom;
            }
        },
        e.node);
}

bool is_numeric_literal(const Expr& e) {
    return std::holds_alternative<IntLit>(e.node) || std::holds_alternative<FloatLit>(e.node);
}

void print(const Expr& e, int min_prec, std::string& out);

void print_args(const std::vector<Expr>& args, std::string& out) {
    out += '(';
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out += ", ";
        print(args[i], kOr, out);
    }
    out += ')';
}

void print_receiver(const Expr& e, std::string& out) {
    if (is_numeric_literal(e)) {
        out += '(';
        print(e, 0, out);
        out += ')';
    } else {
        print(e, kPostfix, out);
    }
}

void print_node(const Expr& e, std::string& out) {
    std::visit(
        [&](const auto& n) {
            using N = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<N, IntLit>) {
                out += std::to_string(n.value);
            } else if constexpr (std::is_same_v<N, FloatLit>) {
                out += format_float(n.value);
            } else if constexpr (std::is_same_v<N, StrLit>) {
                out += quote(n.value);
            } else if constexpr (std::is_same_v<N, BoolLit>) {
                out += n.value ? "True" : "False";
            } else if constexpr (std::is_same_v<N, Var>) {
                out += n.name;
            } else if constexpr (std::is_same_v<N, Index>) {
                print_receiver(*n.target, out);
                out += '[';
                print(*n.index, kOr, out);
                out += ']';
            } else if constexpr (std::is_same_v<N, Compare>) {
                print(*n.lhs, kSum, out);
                out += ' ';
                out += op_text(n.op);
                out += ' ';
                print(*n.rhs, kSum, out);
            } else if constexpr (std::is_same_v<N, Arith>) {
                const int p = (n.op == ArithOp::Add || n.op == ArithOp::Sub) ? kSum : kProduct;
                print(*n.lhs, p, out);
                out += ' ';
                out += op_text(n.op);
                out += ' ';
                print(*n.rhs, p + 1, out);
            } else if constexpr (std::is_same_v<N, BoolOp>) {
                const int p = n.op == BoolOpKind::Or ? kOr : kAnd;
                print(*n.lhs, p, out);
                out += n.op == BoolOpKind::Or ? " or " : " and ";
                print(*n.rhs, p + 1, out);
            } else if constexpr (std::is_same_v<N, Not>) {
                out += "not ";
                print(*n.operand, kNot, out);
            } else if constexpr (std::is_same_v<N, Call>) {
                out += n.callee;
                print_args(n.args, out);
            } else if constexpr (std::is_same_v<N, MethodCall>) {
                print_receiver(*n.receiver, out);
                out += '.';
                out += n.name;
                print_args(n.args, out);
            } else if constexpr (std::is_same_v<N, Attr>) {
                print_receiver(*n.receiver, out);
                out += '.';
                out += n.name;
            }
        },
        e.node);
}

void print(const Expr& e, int min_prec, std::string& out) {
    if (precedence(e) < min_prec) {
        out += '(';
        print_node(e, out);
        out += ')';
    } else {
        print_node(e, out);
    }
}

void print_block(const Block& block, int depth, std::string& out);

void line(int depth, std::string& out) { out.append(static_cast<std::size_t>(depth) * 4, ' '); }

void print_stmt(const Stmt& s, int depth, std::string& out) {
    std::visit(
        [&](const auto& n) {
            using N = std::decay_t<decltype(n)>;
            line(depth, out);
            if constexpr (std::is_same_v<N, Assign>) {
                out += n.name + " = " + print_expr(n.value) + "\n";
            } else if constexpr (std::is_same_v<N, AugAssign>) {
                out += n.name + " += " + print_expr(n.value) + "\n";
            } else if constexpr (std::is_same_v<N, Return>) {
                out += "return " + print_expr(n.value) + "\n";
            } else if constexpr (std::is_same_v<N, For>) {
                out += "for " + n.var + " in " + print_expr(n.iterable) + ":\n";
                print_block(n.body, depth + 1, out);
            } else if constexpr (std::is_same_v<N, If>) {
                for (std::size_t i = 0; i < n.branches.size(); ++i) {
                    if (i) line(depth, out);
                    out += (i ? "elif " : "if ") + print_expr(n.branches[i].condition) + ":\n";
                    print_block(n.branches[i].body, depth + 1, out);
                }
                if (n.else_body) {
                    line(depth, out);
                    out += "else:\n";
                    print_block(*n.else_body, depth + 1, out);
                }
            }
        },
        s.node);
}

void print_block(const Block& block, int depth, std::string& out) {
    for (const auto& s : block) print_stmt(s, depth, out);
}

}  // namespace

std::string print_expr(const Expr& e) {
    std::string out;
    print(e, kOr, out);
    return out;
}

std::string pretty_print(const Block& body) {
    std::string out = "def execute_command(image):\n";
    print_block(body, 1, out);
    return out;
}

}  // namespace vps::vpl
