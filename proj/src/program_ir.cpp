#include "fmprog/program_ir.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

namespace fmp {

// ---------------------------------------------------------------------------
// Registry

FunctionRegistry::FunctionRegistry(std::initializer_list<GenericFunction> functions) {
    for (const auto& f : functions) add(f);
}

void FunctionRegistry::add(GenericFunction function) {
    if (function.name.empty()) throw std::invalid_argument("function name must not be empty");
    if (function.name == "len") throw std::invalid_argument("'len' is a reserved builtin");
    if (function.arity < 1)
        throw std::invalid_argument("function '" + function.name + "' must take the input");
    if (find(function.name))
        throw std::invalid_argument("duplicate function '" + function.name + "'");
    functions_.push_back(std::move(function));
}

const GenericFunction* FunctionRegistry::find(std::string_view name) const {
    auto it = std::find_if(functions_.begin(), functions_.end(),
                           [&](const GenericFunction& f) { return f.name == name; });
    return it == functions_.end() ? nullptr : &*it;
}

const GenericFunction& FunctionRegistry::at(std::string_view name) const {
    if (const auto* f = find(name)) return *f;
    throw std::out_of_range("unknown function '" + std::string(name) + "'");
}

FunctionRegistry FunctionRegistry::standard() {
    return {
        {"find", 2, ValueKind::kDetections},
        {"exists", 2, ValueKind::kBoolean},
        {"count", 2, ValueKind::kNumber},
        {"vqa", 2, ValueKind::kText},
        {"answer", 2, ValueKind::kText},
    };
}

std::string to_string(SourcePos pos) {
    return std::to_string(pos.line) + ":" + std::to_string(pos.column);
}

std::string_view to_string(BinaryOp op) {
    switch (op) {
        case BinaryOp::kOr: return "or";
        case BinaryOp::kAnd: return "and";
        case BinaryOp::kEq: return "==";
        case BinaryOp::kNe: return "!=";
        case BinaryOp::kLt: return "<";
        case BinaryOp::kLe: return "<=";
        case BinaryOp::kGt: return ">";
        case BinaryOp::kGe: return ">=";
        case BinaryOp::kAdd: return "+";
        case BinaryOp::kSub: return "-";
        case BinaryOp::kMul: return "*";
        case BinaryOp::kDiv: return "/";
    }
    return "?";
}

ParseError::ParseError(Kind kind, SourcePos pos, const std::string& message)
    : std::runtime_error(to_string(pos) + ": " + message),
      kind_(kind),
      pos_(pos),
      message_(message) {}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok {
    kIdent, kNumber, kString, kKeyword, kOp, kNewline, kIndent, kDedent, kEnd
};

struct Token {
    Tok type;
    std::string text;
    SourcePos pos;
    double number = 0.0;
};

const std::set<std::string, std::less<>> kKeywords = {
    "program", "default", "if", "elif", "else", "while", "bound", "return",
    "and", "or", "not", "true", "false"};

[[noreturn]] void syntax_error(SourcePos pos, const std::string& message) {
    throw ParseError(ParseError::Kind::kSyntax, pos, message);
}

std::vector<Token> tokenize(std::string_view source) {
    std::vector<Token> out;
    std::vector<int> indents{0};
    int line_no = 0;
    std::size_t start = 0;
    while (start <= source.size()) {
        std::size_t end = source.find('\n', start);
        if (end == std::string_view::npos) end = source.size();
        std::string_view line = source.substr(start, end - start);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        int indent = 0;
        while (indent < static_cast<int>(line.size()) && line[indent] == ' ') ++indent;
        if (indent < static_cast<int>(line.size()) && line[indent] == '\t')
            syntax_error({line_no, indent + 1}, "tabs are not allowed for indentation");
        const bool blank = indent == static_cast<int>(line.size()) || line[indent] == '#';
        if (!blank) {
            SourcePos at{line_no, indent + 1};
            if (indent > indents.back()) {
                indents.push_back(indent);
                out.push_back({Tok::kIndent, "", at});
            } else {
                while (indent < indents.back()) {
                    indents.pop_back();
                    out.push_back({Tok::kDedent, "", at});
                }
                if (indent != indents.back()) syntax_error(at, "inconsistent dedent");
            }

            std::size_t i = indent;
            while (i < line.size()) {
                const char c = line[i];
                SourcePos pos{line_no, static_cast<int>(i) + 1};
                if (c == ' ') {
                    ++i;
                } else if (c == '#') {
                    break;
                } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                    std::size_t j = i;
                    while (j < line.size() &&
                           (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_'))
                        ++j;
                    std::string word(line.substr(i, j - i));
                    out.push_back({kKeywords.count(word) ? Tok::kKeyword : Tok::kIdent, word, pos});
                    i = j;
                } else if (std::isdigit(static_cast<unsigned char>(c))) {
                    std::size_t j = i;
                    while (j < line.size() &&
                           (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.' ||
                            line[j] == 'e' || line[j] == 'E' ||
                            ((line[j] == '+' || line[j] == '-') && j > i &&
                             (line[j - 1] == 'e' || line[j - 1] == 'E'))))
                        ++j;
                    Token t{Tok::kNumber, std::string(line.substr(i, j - i)), pos};
                    auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, t.number);
                    if (ec != std::errc() || ptr != line.data() + j)
                        syntax_error(pos, "malformed number '" + t.text + "'");
                    out.push_back(std::move(t));
                    i = j;
                } else if (c == '"') {
                    std::string text;
                    std::size_t j = i + 1;
                    bool closed = false;
                    while (j < line.size()) {
                        if (line[j] == '\\' && j + 1 < line.size()) {
                            const char e = line[j + 1];
                            text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
                            j += 2;
                        } else if (line[j] == '"') {
                            closed = true;
                            ++j;
                            break;
                        } else {
                            text += line[j++];
                        }
                    }
                    if (!closed) syntax_error(pos, "unterminated string literal");
                    out.push_back({Tok::kString, std::move(text), pos});
                    i = j;
                } else {
                    static const char* kTwo[] = {"==", "!=", "<=", ">="};
                    std::string op(1, c);
                    if (i + 1 < line.size()) {
                        std::string two(line.substr(i, 2));
                        for (const char* t : kTwo)
                            if (two == t) op = two;
                    }
                    if (op.size() == 1 && std::string_view("()+-*/<>=,:").find(c) ==
                                              std::string_view::npos)
                        syntax_error(pos, std::string("unexpected character '") + c + "'");
                    out.push_back({Tok::kOp, op, pos});
                    i += op.size();
                }
            }
            out.push_back({Tok::kNewline, "", {line_no, static_cast<int>(line.size()) + 1}});
        }
        if (end == source.size()) break;
        start = end + 1;
    }
    while (indents.size() > 1) {
        indents.pop_back();
        out.push_back({Tok::kDedent, "", {line_no + 1, 1}});
    }
    out.push_back({Tok::kEnd, "", {line_no + 1, 1}});
    return out;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
    Parser(std::vector<Token> tokens, const FunctionRegistry& registry)
        : tokens_(std::move(tokens)), registry_(registry) {}

    ProgramIR parse() {
        ProgramIR ir;
        expect_keyword("program");
        ir.name = expect(Tok::kIdent, "program name").text;
        expect_op("(");
        ir.param = expect(Tok::kIdent, "parameter name").text;
        expect_op(")");
        if (accept_keyword("default")) ir.default_value = parse_literal_value();
        expect_op(":");
        ir.body = parse_suite();
        if (peek().type != Tok::kEnd) syntax_error(peek().pos, "unexpected content after program body");
        if (sites_.empty()) syntax_error({1, 1}, "program makes no neural calls");
        ir.call_sites = std::move(sites_);
        return ir;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    const Token& advance() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    bool is_op(std::string_view op) const {
        return peek().type == Tok::kOp && peek().text == op;
    }
    bool is_keyword(std::string_view kw) const {
        return peek().type == Tok::kKeyword && peek().text == kw;
    }
    bool accept_op(std::string_view op) {
        if (!is_op(op)) return false;
        advance();
        return true;
    }
    bool accept_keyword(std::string_view kw) {
        if (!is_keyword(kw)) return false;
        advance();
        return true;
    }

    static std::string describe(const Token& t) {
        switch (t.type) {
            case Tok::kNewline: return "end of line";
            case Tok::kIndent: return "indent";
            case Tok::kDedent: return "dedent";
            case Tok::kEnd: return "end of input";
            case Tok::kString: return "string \"" + t.text + "\"";
            default: return "'" + t.text + "'";
        }
    }

    const Token& expect(Tok type, std::string_view what) {
        if (peek().type != type)
            syntax_error(peek().pos, "expected " + std::string(what) + ", found " + describe(peek()));
        return advance();
    }
    void expect_op(std::string_view op) {
        if (!accept_op(op))
            syntax_error(peek().pos, "expected '" + std::string(op) + "', found " + describe(peek()));
    }
    void expect_keyword(std::string_view kw) {
        if (!accept_keyword(kw))
            syntax_error(peek().pos, "expected '" + std::string(kw) + "', found " + describe(peek()));
    }

    Value parse_literal_value() {
        const Token& t = peek();
        if (t.type == Tok::kString) return advance().text;
        if (t.type == Tok::kNumber) return advance().number;
        if (accept_keyword("true")) return true;
        if (accept_keyword("false")) return false;
        if (is_op("-")) {
            advance();
            return -expect(Tok::kNumber, "number").number;
        }
        syntax_error(t.pos, "expected a literal, found " + describe(t));
    }

    // NEWLINE INDENT stmt+ DEDENT
    Block parse_suite() {
        expect(Tok::kNewline, "end of line");
        expect(Tok::kIndent, "indented block");
        Block block;
        while (peek().type != Tok::kDedent && peek().type != Tok::kEnd) block.push_back(parse_stmt());
        expect(Tok::kDedent, "dedent");
        return block;
    }

    Stmt parse_stmt() {
        const SourcePos at = peek().pos;
        if (accept_keyword("if")) return parse_if_tail(at);
        if (accept_keyword("while")) {
            WhileStmt w;
            w.condition = parse_expr();
            if (accept_keyword("bound")) {
                const Token& n = expect(Tok::kNumber, "loop bound");
                if (n.number < 0 || n.number != static_cast<double>(static_cast<std::int64_t>(n.number)))
                    syntax_error(n.pos, "loop bound must be a nonnegative integer");
                w.bound = static_cast<std::int64_t>(n.number);
            }
            expect_op(":");
            w.body = parse_suite();
            return {std::move(w), at};
        }
        if (accept_keyword("return")) {
            ReturnStmt r{parse_expr()};
            expect(Tok::kNewline, "end of line");
            return {std::move(r), at};
        }
        if (peek().type == Tok::kIdent && tokens_[pos_ + 1].type == Tok::kOp &&
            tokens_[pos_ + 1].text == "=") {
            AssignStmt a;
            a.name = advance().text;
            advance();
            a.value = parse_expr();
            expect(Tok::kNewline, "end of line");
            return {std::move(a), at};
        }
        syntax_error(at, "expected a statement, found " + describe(peek()));
    }

    // After 'if' or 'elif' has been consumed.
    Stmt parse_if_tail(SourcePos at) {
        IfStmt s;
        s.condition = parse_expr();
        expect_op(":");
        s.then_block = parse_suite();
        const SourcePos elif_at = peek().pos;
        if (accept_keyword("elif")) {
            s.else_block.push_back(parse_if_tail(elif_at));
        } else if (accept_keyword("else")) {
            expect_op(":");
            s.else_block = parse_suite();
        }
        return {std::move(s), at};
    }

    ExprPtr make(SourcePos pos, auto node) {
        return std::make_shared<const Expr>(Expr{std::move(node), pos});
    }

    ExprPtr parse_expr() { return parse_or(); }

    ExprPtr parse_or() {
        ExprPtr lhs = parse_and();
        while (is_keyword("or")) {
            const SourcePos at = advance().pos;
            lhs = make(at, BinaryExpr{BinaryOp::kOr, lhs, parse_and()});
        }
        return lhs;
    }
    ExprPtr parse_and() {
        ExprPtr lhs = parse_not();
        while (is_keyword("and")) {
            const SourcePos at = advance().pos;
            lhs = make(at, BinaryExpr{BinaryOp::kAnd, lhs, parse_not()});
        }
        return lhs;
    }
    ExprPtr parse_not() {
        if (is_keyword("not")) {
            const SourcePos at = advance().pos;
            return make(at, UnaryExpr{UnaryOp::kNot, parse_not()});
        }
        return parse_comparison();
    }
    ExprPtr parse_comparison() {
        ExprPtr lhs = parse_additive();
        static const std::pair<const char*, BinaryOp> kOps[] = {
            {"==", BinaryOp::kEq}, {"!=", BinaryOp::kNe}, {"<", BinaryOp::kLt},
            {"<=", BinaryOp::kLe}, {">", BinaryOp::kGt},  {">=", BinaryOp::kGe}};
        for (auto [text, op] : kOps) {
            if (is_op(text)) {
                const SourcePos at = advance().pos;
                return make(at, BinaryExpr{op, lhs, parse_additive()});
            }
        }
        return lhs;
    }
    ExprPtr parse_additive() {
        ExprPtr lhs = parse_term();
        while (is_op("+") || is_op("-")) {
            const Token& t = advance();
            const BinaryOp op = t.text == "+" ? BinaryOp::kAdd : BinaryOp::kSub;
            lhs = make(t.pos, BinaryExpr{op, lhs, parse_term()});
        }
        return lhs;
    }
    ExprPtr parse_term() {
        ExprPtr lhs = parse_unary();
        while (is_op("*") || is_op("/")) {
            const Token& t = advance();
            const BinaryOp op = t.text == "*" ? BinaryOp::kMul : BinaryOp::kDiv;
            lhs = make(t.pos, BinaryExpr{op, lhs, parse_unary()});
        }
        return lhs;
    }
    ExprPtr parse_unary() {
        if (is_op("-")) {
            const SourcePos at = advance().pos;
            return make(at, UnaryExpr{UnaryOp::kNegate, parse_unary()});
        }
        return parse_primary();
    }
    ExprPtr parse_primary() {
        const Token& t = peek();
        switch (t.type) {
            case Tok::kNumber: advance(); return make(t.pos, LiteralExpr{Value(t.number)});
            case Tok::kString: advance(); return make(t.pos, LiteralExpr{Value(t.text)});
            case Tok::kKeyword:
                if (t.text == "true" || t.text == "false") {
                    advance();
                    return make(t.pos, LiteralExpr{Value(t.text == "true")});
                }
                break;
            case Tok::kIdent: {
                advance();
                if (is_op("(")) return parse_call(t);
                return make(t.pos, VarExpr{t.text});
            }
            case Tok::kOp:
                if (t.text == "(") {
                    advance();
                    ExprPtr inner = parse_expr();
                    expect_op(")");
                    return inner;
                }
                break;
            default: break;
        }
        syntax_error(t.pos, "expected an expression, found " + describe(t));
    }

    ExprPtr parse_call(const Token& name) {
        CallExpr call;
        call.callee = name.text;
        const GenericFunction* fn = nullptr;
        if (name.text != "len") {
            fn = registry_.find(name.text);
            if (!fn)
                throw ParseError(ParseError::Kind::kUnknownFunction, name.pos,
                                 "unknown function '" + name.text + "'");
            // Numbered before the arguments are parsed: pre-order lexical position.
            call.site = sites_.size();
            sites_.push_back(CallSite{sites_.size(), fn->name, {}, name.pos});
        }
        expect_op("(");
        if (!is_op(")")) {
            do {
                call.args.push_back(parse_expr());
            } while (accept_op(","));
        }
        expect_op(")");
        const std::size_t expected = fn ? fn->arity : 1;
        if (call.args.size() != expected)
            throw ParseError(ParseError::Kind::kArityMismatch, name.pos,
                             "'" + name.text + "' expects " + std::to_string(expected) +
                                 " argument(s), got " + std::to_string(call.args.size()));
        if (call.site) {
            auto& statics = sites_[*call.site].static_args;
            for (const auto& a : call.args)
                if (const auto* lit = std::get_if<LiteralExpr>(&a->node)) statics.push_back(lit->value);
        }
        return make(name.pos, std::move(call));
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    const FunctionRegistry& registry_;
    std::vector<CallSite> sites_;
};

// ---------------------------------------------------------------------------
// Structural equality

bool equal(const ExprPtr& a, const ExprPtr& b);
bool equal(const Block& a, const Block& b);

bool equal_node(const LiteralExpr& a, const LiteralExpr& b) { return a.value == b.value; }
bool equal_node(const VarExpr& a, const VarExpr& b) { return a.name == b.name; }
bool equal_node(const UnaryExpr& a, const UnaryExpr& b) {
    return a.op == b.op && equal(a.operand, b.operand);
}
bool equal_node(const BinaryExpr& a, const BinaryExpr& b) {
    return a.op == b.op && equal(a.lhs, b.lhs) && equal(a.rhs, b.rhs);
}
bool equal_node(const CallExpr& a, const CallExpr& b) {
    if (a.callee != b.callee || a.site != b.site || a.args.size() != b.args.size()) return false;
    for (std::size_t i = 0; i < a.args.size(); ++i)
        if (!equal(a.args[i], b.args[i])) return false;
    return true;
}

bool equal(const ExprPtr& a, const ExprPtr& b) {
    if (!a || !b) return a == b;
    if (a->node.index() != b->node.index()) return false;
    return std::visit(
        [&](const auto& lhs) {
            using T = std::decay_t<decltype(lhs)>;
            return equal_node(lhs, std::get<T>(b->node));
        },
        a->node);
}

bool equal_stmt(const AssignStmt& a, const AssignStmt& b) {
    return a.name == b.name && equal(a.value, b.value);
}
bool equal_stmt(const IfStmt& a, const IfStmt& b) {
    return equal(a.condition, b.condition) && equal(a.then_block, b.then_block) &&
           equal(a.else_block, b.else_block);
}
bool equal_stmt(const WhileStmt& a, const WhileStmt& b) {
    return a.bound == b.bound && equal(a.condition, b.condition) && equal(a.body, b.body);
}
bool equal_stmt(const ReturnStmt& a, const ReturnStmt& b) { return equal(a.value, b.value); }

bool equal(const Block& a, const Block& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].node.index() != b[i].node.index()) return false;
        const bool same = std::visit(
            [&](const auto& lhs) {
                using T = std::decay_t<decltype(lhs)>;
                return equal_stmt(lhs, std::get<T>(b[i].node));
            },
            a[i].node);
        if (!same) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Pretty printer

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        if (c == '\t') {
            out += "\\t";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

std::string literal_source(const Value& v) {
    if (v.is_text()) return quote(v.as_text());
    if (v.is_bool()) return v.as_bool() ? "true" : "false";
    if (v.is_number()) {
        const double d = v.as_number();
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d < 0 ? -d : d);
        std::string digits(buf, end);
        return d < 0 ? "-" + digits : digits;
    }
    throw std::invalid_argument("value has no literal syntax: " + v.to_display());
}

std::string expr_source(const Expr& e);

// Non-atomic operands are parenthesised; parentheses do not create nodes.
std::string operand_source(const ExprPtr& e) {
    const bool atomic = std::holds_alternative<LiteralExpr>(e->node) ||
                        std::holds_alternative<VarExpr>(e->node) ||
                        std::holds_alternative<CallExpr>(e->node);
    if (atomic) {
        // A negative literal would re-parse as a negation node.
        if (const auto* lit = std::get_if<LiteralExpr>(&e->node);
            lit && lit->value.is_number() && lit->value.as_number() < 0)
            return "(" + expr_source(*e) + ")";
        return expr_source(*e);
    }
    return "(" + expr_source(*e) + ")";
}

std::string expr_source(const Expr& e) {
    struct Visitor {
        std::string operator()(const LiteralExpr& l) const { return literal_source(l.value); }
        std::string operator()(const VarExpr& v) const { return v.name; }
        std::string operator()(const UnaryExpr& u) const {
            return (u.op == UnaryOp::kNot ? "not " : "-") + operand_source(u.operand);
        }
        std::string operator()(const BinaryExpr& b) const {
            return operand_source(b.lhs) + " " + std::string(to_string(b.op)) + " " +
                   operand_source(b.rhs);
        }
        std::string operator()(const CallExpr& c) const {
            std::string out = c.callee + "(";
            for (std::size_t i = 0; i < c.args.size(); ++i) {
                if (i) out += ", ";
                out += expr_source(*c.args[i]);
            }
            return out + ")";
        }
    };
    return std::visit(Visitor{}, e.node);
}

void block_source(const Block& block, int depth, std::ostringstream& out) {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    for (const auto& stmt : block) {
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, AssignStmt>) {
                    out << pad << s.name << " = " << expr_source(*s.value) << "\n";
                } else if constexpr (std::is_same_v<T, ReturnStmt>) {
                    out << pad << "return " << expr_source(*s.value) << "\n";
                } else if constexpr (std::is_same_v<T, WhileStmt>) {
                    out << pad << "while " << expr_source(*s.condition);
                    if (s.bound) out << " bound " << *s.bound;
                    out << ":\n";
                    block_source(s.body, depth + 1, out);
                } else {
                    out << pad << "if " << expr_source(*s.condition) << ":\n";
                    block_source(s.then_block, depth + 1, out);
                    if (!s.else_block.empty()) {
                        out << pad << "else:\n";
                        block_source(s.else_block, depth + 1, out);
                    }
                }
            },
            stmt.node);
    }
}

// ---------------------------------------------------------------------------
// Validation

struct Scope {
    std::set<std::string> defined;
    std::map<std::string, ValueKind> kinds;
};

std::optional<ValueKind> infer(const Expr& e, const Scope& scope, const FunctionRegistry& registry) {
    struct Visitor {
        const Scope& scope;
        const FunctionRegistry& registry;
        std::optional<ValueKind> operator()(const LiteralExpr& l) const { return l.value.kind(); }
        std::optional<ValueKind> operator()(const VarExpr& v) const {
            auto it = scope.kinds.find(v.name);
            if (it == scope.kinds.end()) return std::nullopt;
            return it->second;
        }
        std::optional<ValueKind> operator()(const UnaryExpr& u) const {
            return u.op == UnaryOp::kNot ? ValueKind::kBoolean : ValueKind::kNumber;
        }
        std::optional<ValueKind> operator()(const BinaryExpr& b) const {
            switch (b.op) {
                case BinaryOp::kAdd: {
                    auto l = infer(*b.lhs, scope, registry);
                    return l == ValueKind::kText ? ValueKind::kText : ValueKind::kNumber;
                }
                case BinaryOp::kSub:
                case BinaryOp::kMul:
                case BinaryOp::kDiv: return ValueKind::kNumber;
                default: return ValueKind::kBoolean;
            }
        }
        std::optional<ValueKind> operator()(const CallExpr& c) const {
            if (!c.site) return ValueKind::kNumber;
            if (const auto* f = registry.find(c.callee)) return f->return_kind;
            return std::nullopt;
        }
    };
    return std::visit(Visitor{scope, registry}, e.node);
}

class Validator {
public:
    Validator(const FunctionRegistry& registry) : registry_(registry) {}

    std::vector<Diagnostic> run(const ProgramIR& ir) {
        Scope scope;
        scope.defined.insert(ir.param);
        scope.kinds[ir.param] = ValueKind::kInput;
        if (ir.default_value) record_return(ir.default_value->kind(), {1, 1}, "default value");
        check_block(ir.body, scope);
        for (const auto& site : ir.call_sites)
            if (!registry_.find(site.function))
                diags_.push_back({site.pos, "call site " + std::to_string(site.index) +
                                                " uses unregistered function '" + site.function + "'"});
        return std::move(diags_);
    }

    std::optional<ValueKind> return_kind() const { return return_kind_; }

private:
    void check_expr(const Expr& e, const Scope& scope) {
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, VarExpr>) {
                    if (!scope.defined.count(n.name))
                        diags_.push_back({e.pos, "variable '" + n.name + "' used before definition"});
                } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                    check_expr(*n.operand, scope);
                } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                    check_expr(*n.lhs, scope);
                    check_expr(*n.rhs, scope);
                } else if constexpr (std::is_same_v<T, CallExpr>) {
                    for (const auto& a : n.args) check_expr(*a, scope);
                }
            },
            e.node);
    }

    void record_return(std::optional<ValueKind> kind, SourcePos pos, const std::string& what) {
        if (!kind) return;
        if (!return_kind_) {
            return_kind_ = kind;
            return;
        }
        if (*return_kind_ != *kind)
            diags_.push_back({pos, what + " has kind " + std::string(to_string(*kind)) +
                                       ", expected " + std::string(to_string(*return_kind_))});
    }

    void check_block(const Block& block, Scope& scope) {
        for (const auto& stmt : block) {
            std::visit(
                [&](const auto& s) {
                    using T = std::decay_t<decltype(s)>;
                    if constexpr (std::is_same_v<T, AssignStmt>) {
                        check_expr(*s.value, scope);
                        scope.defined.insert(s.name);
                        if (auto k = infer(*s.value, scope, registry_))
                            scope.kinds[s.name] = *k;
                        else
                            scope.kinds.erase(s.name);
                    } else if constexpr (std::is_same_v<T, ReturnStmt>) {
                        check_expr(*s.value, scope);
                        record_return(infer(*s.value, scope, registry_), stmt.pos, "return value");
                    } else if constexpr (std::is_same_v<T, WhileStmt>) {
                        check_expr(*s.condition, scope);
                        if (!s.bound)
                            diags_.push_back({stmt.pos, "while loop has no 'bound' annotation"});
                        Scope inner = scope;
                        check_block(s.body, inner);
                    } else {
                        check_expr(*s.condition, scope);
                        Scope then_scope = scope;
                        Scope else_scope = scope;
                        check_block(s.then_block, then_scope);
                        check_block(s.else_block, else_scope);
                        for (const auto& name : then_scope.defined) {
                            if (!else_scope.defined.count(name)) continue;
                            scope.defined.insert(name);
                            auto a = then_scope.kinds.find(name);
                            auto b = else_scope.kinds.find(name);
                            if (a != then_scope.kinds.end() && b != else_scope.kinds.end() &&
                                a->second == b->second)
                                scope.kinds[name] = a->second;
                            else
                                scope.kinds.erase(name);
                        }
                    }
                },
                stmt.node);
        }
    }

    const FunctionRegistry& registry_;
    std::vector<Diagnostic> diags_;
    std::optional<ValueKind> return_kind_;
};

}  // namespace

bool operator==(const ProgramIR& a, const ProgramIR& b) {
    return a.name == b.name && a.param == b.param && a.default_value == b.default_value &&
           a.call_sites == b.call_sites && equal(a.body, b.body);
}

ProgramIR parse_program(std::string_view source, const FunctionRegistry& registry) {
    ProgramIR ir = Parser(tokenize(source), registry).parse();
    Validator v(registry);
    v.run(ir);
    ir.return_kind = v.return_kind();
    return ir;
}

Value ProgramIR::fallback_value() const {
    if (default_value) return *default_value;
    return zero_value(return_kind.value_or(ValueKind::kText));
}

std::vector<Diagnostic> validate_program(const ProgramIR& ir, const FunctionRegistry& registry) {
    return Validator(registry).run(ir);
}

std::vector<CallSite> enumerate_call_sites(const ProgramIR& ir) { return ir.call_sites; }

std::string to_source(const ProgramIR& ir) {
    std::ostringstream out;
    out << "program " << ir.name << "(" << ir.param << ")";
    if (ir.default_value) out << " default " << literal_source(*ir.default_value);
    out << ":\n";
    block_source(ir.body, 1, out);
    return out.str();
}

}  // namespace fmp
