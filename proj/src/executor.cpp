#include "fmprog/executor.hpp"

#include <functional>
#include <iostream>
#include <map>

#include "fmprog/remote.hpp"

namespace fmp {

void check_configuration(const ProgramIR& ir, const BackendRegistry& registry,
                         const ConfigurationVector& config) {
    if (config.size() != ir.num_sites())
        throw std::invalid_argument("configuration has " + std::to_string(config.size()) +
                                    " choices for " + std::to_string(ir.num_sites()) + " call sites");
    for (std::size_t i = 0; i < config.size(); ++i) {
        const BackendSpec* b = registry.find(config.choices[i]);
        if (!b) throw std::invalid_argument("unknown backend '" + config.choices[i] + "'");
        if (b->function != ir.call_sites[i].function)
            throw std::invalid_argument("backend '" + b->id + "' implements '" + b->function +
                                        "' but site " + std::to_string(i) + " calls '" +
                                        ir.call_sites[i].function + "'");
    }
}

namespace {

using CallHandler =
    std::function<Value(const CallSite& site, std::span<const Value> args)>;

struct LoopExhausted {};

class Interpreter {
public:
    Interpreter(const ProgramIR& ir, CallHandler handler) : ir_(ir), handler_(std::move(handler)) {}

    /// Returns the program output; sets `fallback` when the fallback value was used.
    Value run(bool& fallback) {
        vars_.clear();
        vars_[ir_.param] = InputRef{};
        fallback = false;
        try {
            if (auto v = exec_block(ir_.body)) return *v;
        } catch (const LoopExhausted&) {
        }
        fallback = true;
        return ir_.fallback_value();
    }

private:
    std::optional<Value> exec_block(const Block& block) {
        for (const auto& stmt : block) {
            if (auto v = exec(stmt)) return v;
        }
        return std::nullopt;
    }

    std::optional<Value> exec(const Stmt& stmt) {
        if (const auto* a = std::get_if<AssignStmt>(&stmt.node)) {
            vars_[a->name] = eval(*a->value);
            return std::nullopt;
        }
        if (const auto* r = std::get_if<ReturnStmt>(&stmt.node)) return eval(*r->value);
        if (const auto* s = std::get_if<IfStmt>(&stmt.node)) {
            return eval(*s->condition).truthy() ? exec_block(s->then_block) : exec_block(s->else_block);
        }
        const auto& w = std::get<WhileStmt>(stmt.node);
        if (!w.bound) throw ExecutionError(to_string(stmt.pos) + ": while loop has no bound");
        for (std::int64_t iter = 0;; ++iter) {
            if (!eval(*w.condition).truthy()) return std::nullopt;
            if (iter == *w.bound) throw LoopExhausted{};
            if (auto v = exec_block(w.body)) return v;
        }
    }

    [[noreturn]] static void type_error(const Expr& e, const std::string& message) {
        throw ExecutionError(to_string(e.pos) + ": type error: " + message);
    }

    Value eval(const Expr& e) {
        if (const auto* l = std::get_if<LiteralExpr>(&e.node)) return l->value;
        if (const auto* v = std::get_if<VarExpr>(&e.node)) {
            auto it = vars_.find(v->name);
            if (it == vars_.end())
                throw ExecutionError(to_string(e.pos) + ": variable '" + v->name + "' is not defined");
            return it->second;
        }
        if (const auto* u = std::get_if<UnaryExpr>(&e.node)) {
            Value x = eval(*u->operand);
            if (u->op == UnaryOp::kNot) return !x.truthy();
            if (!x.is_number()) type_error(e, "cannot negate " + std::string(to_string(x.kind())));
            return -x.as_number();
        }
        if (const auto* c = std::get_if<CallExpr>(&e.node)) {
            std::vector<Value> args;
            args.reserve(c->args.size());
            for (const auto& a : c->args) args.push_back(eval(*a));
            if (!c->site) {
                const Value& x = args.front();
                if (x.is_detections()) return static_cast<double>(x.as_detections().count);
                if (x.is_text()) return static_cast<double>(x.as_text().size());
                type_error(e, "len() of " + std::string(to_string(x.kind())));
            }
            return handler_(ir_.call_sites[*c->site], args);
        }
        return eval_binary(e, std::get<BinaryExpr>(e.node));
    }

    Value eval_binary(const Expr& e, const BinaryExpr& b) {
        if (b.op == BinaryOp::kAnd) return eval(*b.lhs).truthy() && eval(*b.rhs).truthy();
        if (b.op == BinaryOp::kOr) return eval(*b.lhs).truthy() || eval(*b.rhs).truthy();

        const Value l = eval(*b.lhs);
        const Value r = eval(*b.rhs);
        if (b.op == BinaryOp::kEq || b.op == BinaryOp::kNe) {
            if (l.kind() != r.kind())
                type_error(e, "cannot compare " + std::string(to_string(l.kind())) + " with " +
                                  std::string(to_string(r.kind())));
            return (l == r) == (b.op == BinaryOp::kEq);
        }
        if (b.op == BinaryOp::kAdd && l.is_text() && r.is_text()) return l.as_text() + r.as_text();
        if (!l.is_number() || !r.is_number())
            type_error(e, "operator '" + std::string(to_string(b.op)) + "' needs numbers, got " +
                              std::string(to_string(l.kind())) + " and " +
                              std::string(to_string(r.kind())));
        const double x = l.as_number();
        const double y = r.as_number();
        switch (b.op) {
            case BinaryOp::kLt: return x < y;
            case BinaryOp::kLe: return x <= y;
            case BinaryOp::kGt: return x > y;
            case BinaryOp::kGe: return x >= y;
            case BinaryOp::kAdd: return x + y;
            case BinaryOp::kSub: return x - y;
            case BinaryOp::kMul: return x * y;
            case BinaryOp::kDiv:
                if (y == 0.0) throw ExecutionError(to_string(e.pos) + ": division by zero");
                return x / y;
            default: break;
        }
        type_error(e, "unsupported operator");
    }

    const ProgramIR& ir_;
    CallHandler handler_;
    std::map<std::string, Value, std::less<>> vars_;
};

}  // namespace

ExecutionTrace execute(const ProgramIR& ir, const BackendRegistry& registry,
                       const ConfigurationVector& config, const ProgramInput& input,
                       const LatentTruth& truth, EpisodeKey key, NoiseCorrelation correlation) {
    check_configuration(ir, registry, config);
    const std::size_t n = ir.num_sites();

    std::vector<const BackendSpec*> chosen(n);
    for (std::size_t i = 0; i < n; ++i) chosen[i] = &registry.at(config.choices[i]);

    ExecutionTrace trace;
    trace.invocations.assign(n, 0);
    trace.remote_latency_ms.assign(n, 0.0);

    Interpreter interp(ir, [&](const CallSite& site, std::span<const Value> args) -> Value {
        const BackendSpec& backend = *chosen[site.index];
        ++trace.invocations[site.index];
        if (backend.is_remote()) {
            const ValueKind kind = registry.functions().at(site.function).return_kind;
            RemoteResult r = invoke_remote(backend, site, args, input.id, kind);
            trace.remote_latency_ms[site.index] += r.latency_ms;
            return r.output;
        }
        return invoke_synthetic(backend, site, truth, NoiseKey{key.seed, key.episode, site.index},
                                correlation);
    });
    trace.output = interp.run(trace.fallback_used);

    trace.per_site_cost.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        trace.per_site_cost[i] = chosen[i]->cost * static_cast<double>(trace.invocations[i]);
        trace.incurred_cost += trace.per_site_cost[i];
    }
    return trace;
}

Value ground_truth_output(const ProgramIR& ir, const ProgramInput&, const LatentTruth& truth) {
    Interpreter interp(ir, [&](const CallSite& site, std::span<const Value>) -> Value {
        if (site.index >= truth.sites.size())
            throw MissingTruthError("no latent value for call site " + std::to_string(site.index));
        return truth.sites[site.index].value;
    });
    bool fallback = false;
    return interp.run(fallback);
}

double loss(const Value& output, const Value& expected, bool* kind_mismatch) {
    const bool mismatch = output.kind() != expected.kind();
    if (kind_mismatch) {
        *kind_mismatch = mismatch;
    } else if (mismatch) {
        std::cerr << "warning: comparing " << to_string(output.kind()) << " output against "
                  << to_string(expected.kind()) << " ground truth\n";
    }
    if (mismatch) return 1.0;
    return output == expected ? 0.0 : 1.0;
}

}  // namespace fmp
