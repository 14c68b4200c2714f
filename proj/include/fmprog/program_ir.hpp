#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fmprog/value.hpp"

namespace fmp {

/// An abstract neural capability (detection, VQA, ...). Backends implement these.
struct GenericFunction {
    std::string name;
    std::size_t arity = 1;  // first argument is always the streamed input
    ValueKind return_kind = ValueKind::kText;

    friend bool operator==(const GenericFunction&, const GenericFunction&) = default;
};

class FunctionRegistry {
public:
    FunctionRegistry() = default;
    FunctionRegistry(std::initializer_list<GenericFunction> functions);

    /// Throws std::invalid_argument on a duplicate name, zero arity or a reserved name.
    void add(GenericFunction function);

    const GenericFunction* find(std::string_view name) const;
    const GenericFunction& at(std::string_view name) const;
    std::span<const GenericFunction> functions() const { return functions_; }

    /// find/exists/count/vqa/answer, enough for the bundled programs.
    static FunctionRegistry standard();

private:
    std::vector<GenericFunction> functions_;
};

struct SourcePos {
    int line = 0;
    int column = 0;
};

std::string to_string(SourcePos pos);

enum class UnaryOp { kNot, kNegate };
enum class BinaryOp { kOr, kAnd, kEq, kNe, kLt, kLe, kGt, kGe, kAdd, kSub, kMul, kDiv };

std::string_view to_string(BinaryOp op);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct LiteralExpr {
    Value value;
};
struct VarExpr {
    std::string name;
};
struct UnaryExpr {
    UnaryOp op;
    ExprPtr operand;
};
struct BinaryExpr {
    BinaryOp op;
    ExprPtr lhs;
    ExprPtr rhs;
};
/// A call. `site` is set for neural calls and empty for the `len` builtin.
struct CallExpr {
    std::string callee;
    std::vector<ExprPtr> args;
    std::optional<std::size_t> site;
};

struct Expr {
    std::variant<LiteralExpr, VarExpr, UnaryExpr, BinaryExpr, CallExpr> node;
    SourcePos pos;
};

struct Stmt;
using Block = std::vector<Stmt>;

struct AssignStmt {
    std::string name;
    ExprPtr value;
};
struct IfStmt {
    ExprPtr condition;
    Block then_block;
    Block else_block;
};
struct WhileStmt {
    ExprPtr condition;
    std::optional<std::int64_t> bound;  // absent bounds are rejected by validate_program
    Block body;
};
struct ReturnStmt {
    ExprPtr value;
};

struct Stmt {
    std::variant<AssignStmt, IfStmt, WhileStmt, ReturnStmt> node;
    SourcePos pos;
};

/// One lexical occurrence of a neural call.
struct CallSite {
    std::size_t index = 0;
    std::string function;
    std::vector<Value> static_args;  // literal arguments, in order
    SourcePos pos;

    friend bool operator==(const CallSite& a, const CallSite& b) {
        return a.index == b.index && a.function == b.function && a.static_args == b.static_args;
    }
};

/// A parsed program. Immutable once built; copies share the syntax tree.
struct ProgramIR {
    std::string name;
    std::string param;
    std::optional<Value> default_value;
    Block body;
    std::vector<CallSite> call_sites;
    std::optional<ValueKind> return_kind;  // inferred at parse time when unambiguous

    std::size_t num_sites() const { return call_sites.size(); }

    /// Value returned when a loop bound is exhausted or no return is reached:
    /// the declared default, else the zero value of the return kind.
    Value fallback_value() const;

    /// Structural equality; source positions are ignored.
    friend bool operator==(const ProgramIR& a, const ProgramIR& b);
};

class ParseError : public std::runtime_error {
public:
    enum class Kind { kSyntax, kUnknownFunction, kArityMismatch };

    ParseError(Kind kind, SourcePos pos, const std::string& message);

    Kind kind() const { return kind_; }
    SourcePos pos() const { return pos_; }
    const std::string& message() const { return message_; }

private:
    Kind kind_;
    SourcePos pos_;
    std::string message_;
};

struct Diagnostic {
    SourcePos pos;
    std::string message;
};

/// Parses DSL source. Call sites are numbered in lexical order of the callee names.
ProgramIR parse_program(std::string_view source, const FunctionRegistry& registry);

/// Static checks: definite assignment, loop bounds, return-kind consistency.
std::vector<Diagnostic> validate_program(const ProgramIR& ir, const FunctionRegistry& registry);

std::vector<CallSite> enumerate_call_sites(const ProgramIR& ir);

/// Canonical source text; parse(to_source(ir)) == ir.
std::string to_source(const ProgramIR& ir);

}  // namespace fmp
