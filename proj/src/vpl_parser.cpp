#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>
#include <string>
#include <utility>

#include "vpsynth/rng.hpp"
#include "vpsynth/vpl.hpp"

namespace vps::vpl {

namespace {

constexpr std::array kBuiltins = {
    BuiltinSpec{"find", BuiltinKind::Method, 1, true},
    BuiltinSpec{"exists", BuiltinKind::Method, 1, true},
    BuiltinSpec{"verify_property", BuiltinKind::Method, 2, true},
    BuiltinSpec{"simple_query", BuiltinKind::Method, 1, true},
    BuiltinSpec{"compute_depth", BuiltinKind::Method, 0, true},
    BuiltinSpec{"crop", BuiltinKind::Method, 4, true},
    BuiltinSpec{"llm_query", BuiltinKind::Function, 1, true},
    BuiltinSpec{"len", BuiltinKind::Function, 1, false},
    BuiltinSpec{"str", BuiltinKind::Function, 1, false},
    BuiltinSpec{"int", BuiltinKind::Function, 1, false},
    BuiltinSpec{"bool_to_yesno", BuiltinKind::Function, 1, false},
    BuiltinSpec{"distance", BuiltinKind::Function, 2, false},
    BuiltinSpec{"left", BuiltinKind::Attribute, 0, false},
    BuiltinSpec{"right", BuiltinKind::Attribute, 0, false},
    BuiltinSpec{"top", BuiltinKind::Attribute, 0, false},
    BuiltinSpec{"bottom", BuiltinKind::Attribute, 0, false},
    BuiltinSpec{"center_x", BuiltinKind::Attribute, 0, false},
    BuiltinSpec{"center_y", BuiltinKind::Attribute, 0, false},
};

// Python keywords outside the language, with the reason they are rejected.
const std::pair<std::string_view, std::string_view> kForbidden[] = {
    {"import", "imports are not supported"},
    {"from", "imports are not supported"},
    {"while", "while loops are not supported; iterate over a patch list with for"},
    {"try", "try/except is not supported"},
    {"except", "try/except is not supported"},
    {"finally", "try/except is not supported"},
    {"raise", "raise is not supported"},
    {"lambda", "lambda expressions are not supported"},
    {"class", "class definitions are not supported"},
    {"with", "with statements are not supported"},
    {"yield", "generators are not supported"},
    {"global", "global declarations are not supported"},
    {"nonlocal", "nonlocal declarations are not supported"},
    {"del", "del is not supported"},
    {"pass", "pass is not supported"},
    {"break", "break is not supported"},
    {"continue", "continue is not supported"},
    {"assert", "assert is not supported"},
    {"async", "async code is not supported"},
    {"await", "async code is not supported"},
    {"None", "None is not supported"},
    {"is", "identity tests are not supported"},
    {"print", "print is not supported"},
};

const std::set<std::string_view> kKeywords = {"def", "return", "for",  "in",  "if",   "elif",
                                              "else", "and",   "or",   "not", "True", "False"};

std::string_view forbidden_reason(std::string_view word) {
    for (const auto& [kw, why] : kForbidden) {
        if (kw == word) return why;
    }
    return {};
}

enum class Tok { Name, Int, Float, String, Op, Newline, Indent, Dedent, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    int line = 0;
    int col = 0;
    std::uint64_t int_value = 0;
    double float_value = 0.0;
};

struct Failure {
    ParseError error;
};

[[noreturn]] void fail(ParseError::Kind kind, int line, int col, std::string message,
                       std::vector<std::string> expected = {}) {
    throw Failure{ParseError{kind, line, col, std::move(message), std::move(expected)}};
}

// ---------------------------------------------------------------------------
// Lexer

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<int> indents{0};
        bool line_start = true;
        while (pos_ < src_.size()) {
            if (line_start && depth_ == 0) {
                int width = 0;
                while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) {
                    if (src_[pos_] == '\t') {
                        lex_error("tabs are not allowed in indentation");
                    }
                    ++width;
                    advance();
                }
                if (pos_ >= src_.size()) break;
                const char c = src_[pos_];
                if (c == '\n' || c == '\r' || c == '#') {
                    skip_to_eol();
                    if (pos_ < src_.size()) newline();
                    continue;
                }
                line_start = false;
                if (width > indents.back()) {
                    indents.push_back(width);
                    push(Tok::Indent, "");
                } else {
                    while (width < indents.back()) {
                        indents.pop_back();
                        push(Tok::Dedent, "");
                    }
                    if (width != indents.back()) lex_error("inconsistent dedent");
                }
            }

            const char c = src_[pos_];
            if (c == '\n') {
                if (depth_ == 0) {
                    push(Tok::Newline, "");
                    line_start = true;
                }
                newline();
                continue;
            }
            if (c == ' ' || c == '\t' || c == '\r') {
                advance();
                continue;
            }
            if (c == '#') {
                skip_to_eol();
                continue;
            }
            if (c == '\\' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
                advance();
                newline();
                continue;
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                lex_name();
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                lex_number();
            } else if (c == '\'' || c == '"') {
                lex_string(c);
            } else {
                lex_op();
            }
        }
        if (!tokens_.empty() && tokens_.back().kind != Tok::Newline &&
            tokens_.back().kind != Tok::Dedent) {
            push(Tok::Newline, "");
        }
        while (indents.size() > 1) {
            indents.pop_back();
            push(Tok::Dedent, "");
        }
        push(Tok::End, "");
        return std::move(tokens_);
    }

private:
    [[noreturn]] void lex_error(std::string msg) {
        fail(ParseError::Kind::Lexical, line_, col_, std::move(msg));
    }

    void advance() {
        ++pos_;
        ++col_;
    }
    void newline() {
        ++pos_;
        ++line_;
        col_ = 1;
    }
    void skip_to_eol() {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
    }

    void push(Tok kind, std::string text, int line = -1, int col = -1) {
        Token t;
        t.kind = kind;
        t.text = std::move(text);
        t.line = line < 0 ? line_ : line;
        t.col = col < 0 ? col_ : col;
        tokens_.push_back(std::move(t));
    }

    void lex_name() {
        const int line = line_, col = col_;
        const auto start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            advance();
        }
        push(Tok::Name, std::string(src_.substr(start, pos_ - start)), line, col);
    }

    void lex_number() {
        const int line = line_, col = col_;
        const auto start = pos_;
        bool is_float = false;
        auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                advance();
            }
        };
        digits();
        if (pos_ + 1 < src_.size() && src_[pos_] == '.' &&
            std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
            is_float = true;
            advance();
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            auto look = pos_ + 1;
            if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
            if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
                is_float = true;
                while (pos_ < look) advance();
                digits();
            }
        }
        if (pos_ < src_.size() &&
            (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            lex_error("malformed number literal");
        }
        const auto text = src_.substr(start, pos_ - start);
        Token t;
        t.line = line;
        t.col = col;
        t.text = std::string(text);
        if (is_float) {
            t.kind = Tok::Float;
            const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), t.float_value);
            if (ec != std::errc{} || p != text.data() + text.size()) lex_error("malformed float literal");
        } else {
            t.kind = Tok::Int;
            if (text.size() > 1 && text[0] == '0') lex_error("leading zeros in integer literal");
            const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), t.int_value);
            if (ec != std::errc{} || t.int_value > (1ULL << 63)) {
                lex_error("integer literal out of range");
            }
        }
        tokens_.push_back(std::move(t));
    }

    void lex_string(char quote) {
        const int line = line_, col = col_;
        if (src_.substr(pos_, 3) == std::string(3, quote)) {
            lex_error("triple-quoted strings are not supported");
        }
        advance();
        std::string value;
        while (true) {
            if (pos_ >= src_.size() || src_[pos_] == '\n') lex_error("unterminated string literal");
            const char c = src_[pos_];
            if (c == quote) {
                advance();
                break;
            }
            if (c == '\\') {
                advance();
                if (pos_ >= src_.size()) lex_error("unterminated string literal");
                switch (src_[pos_]) {
                    case 'n': value += '\n'; break;
                    case 't': value += '\t'; break;
                    case 'r': value += '\r'; break;
                    case '\\': value += '\\'; break;
                    case '\'': value += '\''; break;
                    case '"': value += '"'; break;
                    default: lex_error(std::string("unknown escape \\") + src_[pos_]);
                }
                advance();
                continue;
            }
            value += c;
            advance();
        }
        Token t;
        t.kind = Tok::String;
        t.text = std::move(value);
        t.line = line;
        t.col = col;
        tokens_.push_back(std::move(t));
    }

    void lex_op() {
        static constexpr std::string_view kTwo[] = {"==", "!=", "<=", ">=", "+=", "-=", "*=",
                                                    "/=", "//", "**", "->", "%="};
        const int line = line_, col = col_;
        for (auto op : kTwo) {
            if (src_.substr(pos_, 2) == op) {
                advance();
                advance();
                push(Tok::Op, std::string(op), line, col);
                return;
            }
        }
        const char c = src_[pos_];
        if (std::string_view("+-*/<>=()[],:.{};%@&|^~").find(c) == std::string_view::npos) {
            if (static_cast<unsigned char>(c) >= 0x80) lex_error("non-ASCII character outside a string");
            lex_error(std::string("unexpected character '") + c + "'");
        }
        if (c == '(' || c == '[' || c == '{') ++depth_;
        if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
        advance();
        push(Tok::Op, std::string(1, c), line, col);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    int depth_ = 0;
    std::vector<Token> tokens_;
};

// ---------------------------------------------------------------------------
// Parser. Performs the static checks inline since it visits statements in
// program order with positions at hand: closed-world builtins, arity,
// definite assignment, statement budget.

using VarSet = std::set<std::string, std::less<>>;

bool always_returns(const Block& block) {
    for (const auto& s : block) {
        if (std::holds_alternative<Return>(s.node)) return true;
        if (const auto* branch = std::get_if<If>(&s.node)) {
            if (!branch->else_body || !always_returns(*branch->else_body)) continue;
            if (std::all_of(branch->branches.begin(), branch->branches.end(),
                            [](const IfBranch& b) { return always_returns(b.body); })) {
                return true;
            }
        }
    }
    return false;
}

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Block program() {
        const Token& def = peek();
        if (def.kind == Tok::Name && !forbidden_reason(def.text).empty()) {
            syntax(def, std::string(forbidden_reason(def.text)));
        }
        expect_name("def");
        const Token& name = peek();
        if (name.kind != Tok::Name || name.text != kEntryPoint) {
            syntax(name, "the program must define execute_command(image)", {"'execute_command'"});
        }
        ++i_;
        expect_op("(");
        const Token& param = peek();
        if (param.kind != Tok::Name || param.text != kImageParam) {
            syntax(param, "execute_command takes exactly one parameter named image", {"'image'"});
        }
        ++i_;
        expect_op(")");
        if (is_op("->")) syntax(peek(), "return annotations are not supported");
        assigned_.insert(std::string(kImageParam));
        Block body = suite();
        if (peek().kind != Tok::End) {
            syntax(peek(), "only a single execute_command definition is allowed", {"end of input"});
        }
        if (!always_returns(body)) {
            fail(ParseError::Kind::Static, def.line, def.col,
                 "not every path through execute_command returns a value");
        }
        return body;
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        return toks_[std::min(i_ + ahead, toks_.size() - 1)];
    }
    const Token& take() { return toks_[std::min(i_++, toks_.size() - 1)]; }

    bool is_op(std::string_view op, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::Op && peek(ahead).text == op;
    }
    bool is_name(std::string_view n) const {
        return peek().kind == Tok::Name && peek().text == n;
    }

    static std::string describe(const Token& t) {
        switch (t.kind) {
            case Tok::Name: return "'" + t.text + "'";
            case Tok::Int:
            case Tok::Float: return "number " + t.text;
            case Tok::String: return "string literal";
            case Tok::Op: return "'" + t.text + "'";
            case Tok::Newline: return "end of line";
            case Tok::Indent: return "indent";
            case Tok::Dedent: return "dedent";
            case Tok::End: return "end of input";
        }
        return "token";
    }

    [[noreturn]] void syntax(const Token& at, std::string msg, std::vector<std::string> expected = {}) {
        fail(ParseError::Kind::Syntax, at.line, at.col, std::move(msg), std::move(expected));
    }
    [[noreturn]] void static_error(const Token& at, std::string msg) {
        fail(ParseError::Kind::Static, at.line, at.col, std::move(msg));
    }

    void expect_op(std::string_view op) {
        if (!is_op(op)) {
            syntax(peek(), "expected '" + std::string(op) + "', found " + describe(peek()),
                   {"'" + std::string(op) + "'"});
        }
        ++i_;
    }
    void expect_name(std::string_view n) {
        if (!is_name(n)) {
            syntax(peek(), "expected '" + std::string(n) + "', found " + describe(peek()),
                   {"'" + std::string(n) + "'"});
        }
        ++i_;
    }
    void expect(Tok kind, std::string_view what) {
        if (peek().kind != kind) {
            syntax(peek(), "expected " + std::string(what) + ", found " + describe(peek()),
                   {std::string(what)});
        }
        ++i_;
    }

    Block suite() {
        expect_op(":");
        expect(Tok::Newline, "end of line");
        expect(Tok::Indent, "indented block");
        Block block;
        while (peek().kind != Tok::Dedent && peek().kind != Tok::End) {
            block.push_back(statement());
        }
        expect(Tok::Dedent, "dedent");
        return block;
    }

    void count_statement(const Token& at) {
        if (++statements_ > kMaxStatements) {
            static_error(at, "program exceeds " + std::to_string(kMaxStatements) + " statements");
        }
    }

    std::string assign_target(const Token& t) {
        if (kKeywords.count(t.text)) syntax(t, "cannot assign to keyword '" + t.text + "'");
        if (find_builtin(t.text, BuiltinKind::Function) || find_builtin(t.text, BuiltinKind::Method)) {
            static_error(t, "cannot assign to builtin name '" + t.text + "'");
        }
        return t.text;
    }

    Stmt statement() {
        const Token& t = peek();
        count_statement(t);
        if (t.kind != Tok::Name) {
            if (t.kind == Tok::Indent) syntax(t, "unexpected indent");
            syntax(t, "expected a statement, found " + describe(t), {"statement"});
        }
        if (auto why = forbidden_reason(t.text); !why.empty()) syntax(t, std::string(why));
        if (t.text == "def") syntax(t, "nested function definitions are not supported");
        if (t.text == "return") {
            ++i_;
            Expr value = expression();
            end_of_simple();
            return Stmt{Return{std::move(value)}};
        }
        if (t.text == "for") return for_statement();
        if (t.text == "if") return if_statement();
        if (t.text == "elif" || t.text == "else") syntax(t, "'" + t.text + "' without a matching if");

        const Token& op = peek(1);
        if (op.kind == Tok::Op && op.text == "=") {
            ++i_;
            ++i_;
            std::string name = assign_target(t);
            Expr value = expression();
            end_of_simple();
            assigned_.insert(name);
            return Stmt{Assign{std::move(name), std::move(value)}};
        }
        if (op.kind == Tok::Op && op.text == "+=") {
            ++i_;
            ++i_;
            std::string name = assign_target(t);
            if (!assigned_.count(name)) {
                static_error(t, "variable '" + name + "' used before assignment");
            }
            Expr value = expression();
            end_of_simple();
            return Stmt{AugAssign{std::move(name), std::move(value)}};
        }
        if (op.kind == Tok::Op && (op.text == "-=" || op.text == "*=" || op.text == "/=" || op.text == "%=")) {
            syntax(op, "only += is supported as augmented assignment");
        }
        if (op.kind == Tok::Op && (op.text == "[" || op.text == ".")) {
            // Could be an expression statement or a subscript/attribute assignment.
            expression();
            if (is_op("=")) syntax(peek(), "only plain names can be assigned");
        } else if (op.kind == Tok::Op && op.text == ",") {
            syntax(op, "tuple assignment is not supported");
        } else {
            expression();
        }
        syntax(t, "expression statements are not supported; assign the result to a variable");
    }

    void end_of_simple() {
        if (is_op(";")) syntax(peek(), "semicolons are not supported");
        if (peek().kind != Tok::Newline) {
            syntax(peek(), "expected end of line, found " + describe(peek()), {"end of line"});
        }
        ++i_;
    }

    Stmt for_statement() {
        ++i_;
        const Token& var = peek();
        if (var.kind != Tok::Name) syntax(var, "expected loop variable", {"name"});
        ++i_;
        if (is_op(",")) syntax(peek(), "tuple unpacking is not supported");
        std::string name = assign_target(var);
        expect_name("in");
        Expr iterable = expression();
        const VarSet before = assigned_;
        assigned_.insert(name);
        Block body = suite();
        assigned_ = before;
        return Stmt{For{std::move(name), std::move(iterable), std::move(body)}};
    }

    Stmt if_statement() {
        If node;
        const VarSet before = assigned_;
        std::optional<VarSet> merged;
        auto merge = [&](const Block& body) {
            if (always_returns(body)) return;
            if (!merged) {
                merged = assigned_;
            } else {
                VarSet out;
                std::set_intersection(merged->begin(), merged->end(), assigned_.begin(),
                                      assigned_.end(), std::inserter(out, out.begin()));
                merged = std::move(out);
            }
        };
        ++i_;
        Expr cond = expression();
        Block body = suite();
        merge(body);
        node.branches.push_back({std::move(cond), std::move(body)});
        while (is_name("elif")) {
            ++i_;
            assigned_ = before;
            Expr c = expression();
            Block b = suite();
            merge(b);
            node.branches.push_back({std::move(c), std::move(b)});
        }
        if (is_name("else")) {
            ++i_;
            assigned_ = before;
            Block b = suite();
            merge(b);
            node.else_body = std::move(b);
        }
        if (!node.else_body) {
            assigned_ = before;
        } else {
            assigned_ = merged ? *merged : before;
        }
        return Stmt{std::move(node)};
    }

    // --- expressions, lowest precedence first

    Expr expression() {
        if (is_name("lambda")) syntax(peek(), "lambda expressions are not supported");
        Expr e = or_expr();
        if (is_name("if")) syntax(peek(), "conditional expressions are not supported");
        if (is_name("for")) syntax(peek(), "comprehensions are not supported");
        return e;
    }

    Expr or_expr() {
        Expr lhs = and_expr();
        while (is_name("or")) {
            ++i_;
            Expr rhs = and_expr();
            lhs = make(BoolOp{BoolOpKind::Or, std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    Expr and_expr() {
        Expr lhs = not_expr();
        while (is_name("and")) {
            ++i_;
            Expr rhs = not_expr();
            lhs = make(BoolOp{BoolOpKind::And, std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    Expr not_expr() {
        if (is_name("not")) {
            ++i_;
            return make(Not{not_expr()});
        }
        return comparison();
    }

    std::optional<CompareOp> compare_op() const {
        if (peek().kind != Tok::Op) return std::nullopt;
        const auto& s = peek().text;
        if (s == "==") return CompareOp::Eq;
        if (s == "!=") return CompareOp::Ne;
        if (s == "<") return CompareOp::Lt;
        if (s == "<=") return CompareOp::Le;
        if (s == ">") return CompareOp::Gt;
        if (s == ">=") return CompareOp::Ge;
        return std::nullopt;
    }

    Expr comparison() {
        Expr lhs = arith();
        if (is_name("in") || (is_name("not") && peek(1).kind == Tok::Name && peek(1).text == "in")) {
            syntax(peek(), "'in' tests are not supported");
        }
        if (is_name("is")) syntax(peek(), "identity tests are not supported");
        if (auto op = compare_op()) {
            ++i_;
            Expr rhs = arith();
            if (compare_op()) syntax(peek(), "chained comparisons are not supported");
            return make(Compare{*op, std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    Expr arith() {
        Expr lhs = term();
        while (is_op("+") || is_op("-")) {
            const auto op = take().text == "+" ? ArithOp::Add : ArithOp::Sub;
            Expr rhs = term();
            lhs = make(Arith{op, std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    Expr term() {
        Expr lhs = unary();
        while (true) {
            if (is_op("//")) syntax(peek(), "floor division is not supported; use int(a / b)");
            if (is_op("%")) syntax(peek(), "the modulo operator is not supported");
            if (is_op("**")) syntax(peek(), "exponentiation is not supported");
            if (!is_op("*") && !is_op("/")) break;
            const auto op = take().text == "*" ? ArithOp::Mul : ArithOp::Div;
            Expr rhs = unary();
            lhs = make(Arith{op, std::move(lhs), std::move(rhs)});
        }
        if (is_op("**")) syntax(peek(), "exponentiation is not supported");
        return lhs;
    }

    Expr unary() {
        if (is_op("-")) {
            const Token& minus = take();
            const Token& next = peek();
            if (next.kind == Tok::Int && !(is_op("(", 1) || is_op(".", 1) || is_op("[", 1))) {
                ++i_;
                return make(IntLit{-static_cast<std::int64_t>(next.int_value - 1) - 1});
            }
            if (next.kind == Tok::Float && !(is_op("(", 1) || is_op(".", 1) || is_op("[", 1))) {
                ++i_;
                return make(FloatLit{-next.float_value});
            }
            if (is_op("-")) syntax(minus, "repeated unary minus is not supported");
            // -x is sugar for 0 - x
            return make(Arith{ArithOp::Sub, make(IntLit{0}), unary()});
        }
        if (is_op("+")) syntax(peek(), "unary plus is not supported");
        return postfix();
    }

    std::vector<Expr> call_args(const Token& at, const BuiltinSpec& spec) {
        expect_op("(");
        std::vector<Expr> args;
        if (!is_op(")")) {
            while (true) {
                if (peek().kind == Tok::Name && is_op("=", 1)) {
                    syntax(peek(), "keyword arguments are not supported");
                }
                if (is_op("*")) syntax(peek(), "argument unpacking is not supported");
                args.push_back(expression());
                if (is_op(",")) {
                    ++i_;
                    if (is_op(")")) break;
                    continue;
                }
                break;
            }
        }
        expect_op(")");
        if (static_cast<int>(args.size()) != spec.arity) {
            static_error(at, "builtin '" + std::string(spec.name) + "' takes " +
                                 std::to_string(spec.arity) + " argument(s), got " +
                                 std::to_string(args.size()));
        }
        return args;
    }

    Expr postfix() {
        Expr e = atom();
        while (true) {
            if (is_op(".")) {
                ++i_;
                const Token& name = peek();
                if (name.kind != Tok::Name) syntax(name, "expected attribute name", {"name"});
                ++i_;
                if (is_op("(")) {
                    const auto* spec = find_builtin(name.text, BuiltinKind::Method);
                    if (!spec) static_error(name, "unknown builtin '" + name.text + "'");
                    auto args = call_args(name, *spec);
                    e = make(MethodCall{std::move(e), name.text, std::move(args)});
                } else {
                    if (!find_builtin(name.text, BuiltinKind::Attribute)) {
                        static_error(name, "unknown builtin '" + name.text + "'");
                    }
                    e = make(Attr{std::move(e), name.text});
                }
            } else if (is_op("[")) {
                ++i_;
                if (is_op(":")) syntax(peek(), "slicing is not supported");
                Expr index = expression();
                if (is_op(":")) syntax(peek(), "slicing is not supported");
                expect_op("]");
                e = make(Index{std::move(e), std::move(index)});
            } else if (is_op("(")) {
                syntax(peek(), "only builtin functions can be called");
            } else {
                return e;
            }
        }
    }

    Expr atom() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::Int:
                ++i_;
                if (t.int_value > static_cast<std::uint64_t>(INT64_MAX)) {
                    fail(ParseError::Kind::Lexical, t.line, t.col, "integer literal out of range");
                }
                return make(IntLit{static_cast<std::int64_t>(t.int_value)});
            case Tok::Float: ++i_; return make(FloatLit{t.float_value});
            case Tok::String: {
                ++i_;
                if (peek().kind == Tok::String) syntax(peek(), "implicit string concatenation is not supported");
                return make(StrLit{t.text});
            }
            case Tok::Name: {
                if (t.text == "True" || t.text == "False") {
                    ++i_;
                    return make(BoolLit{t.text == "True"});
                }
                if (auto why = forbidden_reason(t.text); !why.empty()) syntax(t, std::string(why));
                if (kKeywords.count(t.text)) {
                    syntax(t, "unexpected keyword '" + t.text + "'", {"expression"});
                }
                ++i_;
                if (is_op("(")) {
                    const auto* spec = find_builtin(t.text, BuiltinKind::Function);
                    if (!spec) {
                        if (find_builtin(t.text, BuiltinKind::Method)) {
                            static_error(t, "'" + t.text + "' is a patch method; call it as image." +
                                                t.text + "(...)");
                        }
                        static_error(t, "unknown builtin '" + t.text + "'");
                    }
                    auto args = call_args(t, *spec);
                    return make(Call{t.text, std::move(args)});
                }
                if (!assigned_.count(t.text)) {
                    static_error(t, "variable '" + t.text + "' used before assignment");
                }
                return make(Var{t.text});
            }
            case Tok::Op:
                if (t.text == "(") {
                    ++i_;
                    Expr inner = expression();
                    if (is_op(",")) syntax(peek(), "tuples are not supported");
                    expect_op(")");
                    return inner;
                }
                if (t.text == "[") syntax(t, "list literals and comprehensions are not supported");
                if (t.text == "{") syntax(t, "dict and set literals are not supported");
                break;
            default: break;
        }
        syntax(t, "expected an expression, found " + describe(t), {"expression"});
    }

    std::vector<Token> toks_;
    std::size_t i_ = 0;
    VarSet assigned_;
    std::size_t statements_ = 0;
};

std::size_t count_block(const Block& block) {
    std::size_t n = 0;
    for (const auto& s : block) {
        ++n;
        if (const auto* f = std::get_if<For>(&s.node)) n += count_block(f->body);
        if (const auto* b = std::get_if<If>(&s.node)) {
            for (const auto& br : b->branches) n += count_block(br.body);
            if (b->else_body) n += count_block(*b->else_body);
        }
    }
    return n;
}

}  // namespace

std::span<const BuiltinSpec> builtins() { return kBuiltins; }

const BuiltinSpec* find_builtin(std::string_view name, BuiltinKind kind) {
    for (const auto& b : kBuiltins) {
        if (b.name == name && b.kind == kind) return &b;
    }
    return nullptr;
}

std::string_view to_string(ParseError::Kind k) {
    switch (k) {
        case ParseError::Kind::Lexical: return "lexical";
        case ParseError::Kind::Syntax: return "syntax";
        case ParseError::Kind::Static: return "static";
    }
    return "syntax";
}

std::string ParseError::to_string() const {
    std::string out = std::string(vpl::to_string(kind)) + " error at " + std::to_string(line) +
                      ":" + std::to_string(column) + ": " + message;
    if (!expected.empty()) {
        out += " (expected ";
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (i) out += " or ";
            out += expected[i];
        }
        out += ")";
    }
    return out;
}

std::string Program::hash_hex() const { return vpl::hash_hex(hash); }

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t program_hash(const Block& body) { return fnv1a64(pretty_print(body)); }

std::size_t statement_count(const Block& body) { return count_block(body); }

Result<Program, ParseError> parse(std::string_view source) {
    try {
        Parser parser(Lexer(source).run());
        Program p;
        p.source = std::string(source);
        p.body = parser.program();
        p.hash = program_hash(p.body);
        return p;
    } catch (const Failure& f) {
        return f.error;
    }
}

std::string extract_code(std::string_view reply) {
    const auto fence = reply.find("```");
    if (fence != std::string_view::npos) {
        auto body = reply.find('\n', fence);
        if (body != std::string_view::npos) {
            ++body;
            const auto close = reply.find("```", body);
            return std::string(reply.substr(body, close == std::string_view::npos ? close : close - body));
        }
    }
    std::size_t pos = 0;
    while (pos < reply.size()) {
        if (reply.substr(pos, 4) == "def ") return std::string(reply.substr(pos));
        pos = reply.find('\n', pos);
        if (pos == std::string_view::npos) break;
        ++pos;
    }
    return std::string(reply);
}

}  // namespace vps::vpl
