#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vps::vpl {

/// Owning pointer with value semantics, for recursive AST nodes.
template <typename T>
class Indirect {
public:
    Indirect(T value) : ptr_(std::make_unique<T>(std::move(value))) {}
    Indirect(const Indirect& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
    Indirect(Indirect&&) noexcept = default;
    Indirect& operator=(const Indirect& other) {
        if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
        return *this;
    }
    Indirect& operator=(Indirect&&) noexcept = default;
    ~Indirect() = default;

    const T& operator*() const noexcept { return *ptr_; }
    const T* operator->() const noexcept { return ptr_.get(); }

    friend bool operator==(const Indirect& a, const Indirect& b) { return *a.ptr_ == *b.ptr_; }

private:
    std::unique_ptr<T> ptr_;
};

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };
enum class ArithOp { Add, Sub, Mul, Div };
enum class BoolOpKind { And, Or };

struct Expr;

struct IntLit {
    std::int64_t value = 0;
    friend bool operator==(const IntLit&, const IntLit&) = default;
};
struct FloatLit {
    double value = 0.0;
    friend bool operator==(const FloatLit&, const FloatLit&) = default;
};
struct StrLit {
    std::string value;
    friend bool operator==(const StrLit&, const StrLit&) = default;
};
struct BoolLit {
    bool value = false;
    friend bool operator==(const BoolLit&, const BoolLit&) = default;
};
struct Var {
    std::string name;
    friend bool operator==(const Var&, const Var&) = default;
};
struct Index {
    Indirect<Expr> target;
    Indirect<Expr> index;
    friend bool operator==(const Index&, const Index&) = default;
};
struct Compare {
    CompareOp op;
    Indirect<Expr> lhs;
    Indirect<Expr> rhs;
    friend bool operator==(const Compare&, const Compare&) = default;
};
struct Arith {
    ArithOp op;
    Indirect<Expr> lhs;
    Indirect<Expr> rhs;
    friend bool operator==(const Arith&, const Arith&) = default;
};
struct BoolOp {
    BoolOpKind op;
    Indirect<Expr> lhs;
    Indirect<Expr> rhs;
    friend bool operator==(const BoolOp&, const BoolOp&) = default;
};
struct Not {
    Indirect<Expr> operand;
    friend bool operator==(const Not&, const Not&) = default;
};
struct Call {
    std::string callee;
    std::vector<Expr> args;
    friend bool operator==(const Call&, const Call&) = default;
};
struct MethodCall {
    Indirect<Expr> receiver;
    std::string name;
    std::vector<Expr> args;
    friend bool operator==(const MethodCall&, const MethodCall&) = default;
};
struct Attr {
    Indirect<Expr> receiver;
    std::string name;
    friend bool operator==(const Attr&, const Attr&) = default;
};

struct Expr {
    std::variant<IntLit, FloatLit, StrLit, BoolLit, Var, Index, Compare, Arith, BoolOp, Not, Call,
                 MethodCall, Attr>
        node;
    friend bool operator==(const Expr&, const Expr&) = default;
};

struct Stmt;
using Block = std::vector<Stmt>;

struct Assign {
    std::string name;
    Expr value;
    friend bool operator==(const Assign&, const Assign&) = default;
};
struct AugAssign {  // name += value
    std::string name;
    Expr value;
    friend bool operator==(const AugAssign&, const AugAssign&) = default;
};
struct For {
    std::string var;
    Expr iterable;
    Block body;
    friend bool operator==(const For&, const For&) = default;
};
struct IfBranch {
    Expr condition;
    Block body;
    friend bool operator==(const IfBranch&, const IfBranch&) = default;
};
struct If {
    std::vector<IfBranch> branches;  // if, then each elif
    std::optional<Block> else_body;
    friend bool operator==(const If&, const If&) = default;
};
struct Return {
    Expr value;
    friend bool operator==(const Return&, const Return&) = default;
};

struct Stmt {
    std::variant<Assign, AugAssign, For, If, Return> node;
    friend bool operator==(const Stmt&, const Stmt&) = default;
};

// Construction helpers, mostly for tests and the template catalog.
template <typename Node>
Expr make(Node node) {
    return Expr{std::move(node)};
}

}  // namespace vps::vpl
