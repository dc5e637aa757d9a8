#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vpsynth/ast.hpp"
#include "vpsynth/result.hpp"

namespace vps::vpl {

// ---------------------------------------------------------------------------
// The closed builtin set. Anything outside it fails the static check.

enum class BuiltinKind { Method, Function, Attribute };

struct BuiltinSpec {
    std::string_view name;
    BuiltinKind kind;
    int arity;
    bool traced;  // a tool invocation recorded in the execution trace
};

std::span<const BuiltinSpec> builtins();
const BuiltinSpec* find_builtin(std::string_view name, BuiltinKind kind);

inline constexpr std::string_view kEntryPoint = "execute_command";
inline constexpr std::string_view kImageParam = "image";
inline constexpr std::size_t kMaxStatements = 200;

// ---------------------------------------------------------------------------

struct ParseError {
    enum class Kind { Lexical, Syntax, Static };
    Kind kind = Kind::Syntax;
    int line = 0;
    int column = 0;
    std::string message;
    std::vector<std::string> expected;

    std::string to_string() const;
};

std::string_view to_string(ParseError::Kind k);

/// A statically checked visual program.
struct Program {
    std::string source;
    Block body;
    std::uint64_t hash = 0;  // FNV-1a of the canonical pretty-print

    std::string hash_hex() const;
};

Result<Program, ParseError> parse(std::string_view source);

/// Canonical 4-space rendering, including the `def` line.
std::string pretty_print(const Block& body);
inline std::string pretty_print(const Program& p) { return pretty_print(p.body); }
std::string print_expr(const Expr& e);

std::uint64_t program_hash(const Block& body);
std::string hash_hex(std::uint64_t h);

std::size_t statement_count(const Block& body);

/// Pulls program text out of an LLM reply: the first fenced code block if one
/// exists, otherwise the reply from its first `def` line.
std::string extract_code(std::string_view reply);

}  // namespace vps::vpl
