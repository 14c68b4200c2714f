#include "random_programs.hpp"

#include <map>
#include <set>
#include <sstream>

namespace fmp::testing {

namespace {

const char* const kWords[] = {"cat", "dog", "laptop", "smoke", "a \"quoted\" word", "back\\slash", "x y"};

class Generator {
public:
    explicit Generator(Rng& rng) : rng_(rng) {}

    std::string program(int max_depth) {
        out_ << "program p" << rng_.below(100) << "(img)";
        if (rng_.uniform() < 0.5) out_ << " default " << text_literal();
        out_ << ":\n";
        Scope scope;
        const int n = 1 + static_cast<int>(rng_.below(4));
        for (int i = 0; i < n; ++i) statement(scope, 1, max_depth);
        if (calls_ == 0 || rng_.uniform() < 0.7) {
            indent(1);
            out_ << "return " << (calls_ == 0 ? "vqa(img, " + text_literal() + ")" : expr(ValueKind::kText, scope, 2))
                 << "\n";
        }
        return out_.str();
    }

private:
    using Scope = std::map<std::string, ValueKind>;

    void indent(int level) { out_ << std::string(2 * level, ' '); }

    std::string text_literal() {
        std::string w = kWords[rng_.below(std::size(kWords))];
        std::string escaped;
        for (char c : w) {
            if (c == '"' || c == '\\') escaped += '\\';
            escaped += c;
        }
        return "\"" + escaped + "\"";
    }

    std::string call(const char* fn) {
        ++calls_;
        return std::string(fn) + "(img, " + text_literal() + ")";
    }

    std::string var_of(ValueKind kind, const Scope& scope) {
        std::vector<std::string> names;
        for (const auto& [n, k] : scope)
            if (k == kind) names.push_back(n);
        return names.empty() ? "" : names[rng_.below(names.size())];
    }

    std::string expr(ValueKind kind, const Scope& scope, int depth) {
        const bool leaf = depth <= 0;
        const auto v = var_of(kind, scope);
        const double u = rng_.uniform();
        switch (kind) {
            case ValueKind::kDetections:
                return !v.empty() && u < 0.4 ? v : call("find");
            case ValueKind::kText:
                if (!v.empty() && u < 0.3) return v;
                return u < 0.6 ? call("vqa") : text_literal();
            case ValueKind::kNumber:
                if (!v.empty() && u < 0.25) return v;
                if (u < 0.45) return call("count");
                if (u < 0.6) return "len(" + expr(ValueKind::kDetections, scope, depth - 1) + ")";
                if (leaf || u < 0.8) return std::to_string(rng_.below(5));
                return expr(ValueKind::kNumber, scope, depth - 1) + (rng_.uniform() < 0.5 ? " + " : " * ") +
                       expr(ValueKind::kNumber, scope, depth - 1);
            case ValueKind::kBoolean:
                if (!v.empty() && u < 0.2) return v;
                if (u < 0.35) return call("exists");
                if (leaf || u < 0.55) {
                    static const char* const ops[] = {" > ", " >= ", " < ", " == ", " != "};
                    return expr(ValueKind::kNumber, scope, 0) + ops[rng_.below(5)] + std::to_string(rng_.below(3));
                }
                if (u < 0.7) return "not " + expr(ValueKind::kBoolean, scope, depth - 1);
                if (u < 0.8) return expr(ValueKind::kText, scope, 0) + " == " + text_literal();
                return "(" + expr(ValueKind::kBoolean, scope, depth - 1) + (rng_.uniform() < 0.5 ? " and " : " or ") +
                       expr(ValueKind::kBoolean, scope, depth - 1) + ")";
            default:
                return "0";
        }
    }

    ValueKind random_kind() {
        static const ValueKind kinds[] = {ValueKind::kDetections, ValueKind::kText, ValueKind::kNumber,
                                          ValueKind::kBoolean};
        return kinds[rng_.below(4)];
    }

    void statement(Scope& scope, int level, int max_depth) {
        const double u = rng_.uniform();
        if (level > max_depth || u < 0.5) {
            const ValueKind kind = random_kind();
            std::string name = var_of(kind, scope);
            if (name.empty() || rng_.uniform() < 0.5) name = "v" + std::to_string(next_var_++);
            const std::string rhs = expr(kind, scope, 2);
            indent(level);
            out_ << name << " = " << rhs << "\n";
            scope[name] = kind;
        } else if (u < 0.75) {
            indent(level);
            out_ << "if " << expr(ValueKind::kBoolean, scope, 2) << ":\n";
            Scope inner = scope;
            block(inner, level + 1, max_depth);
            if (rng_.uniform() < 0.5) {
                indent(level);
                out_ << "else:\n";
                Scope other = scope;
                block(other, level + 1, max_depth);
            }
        } else if (u < 0.85) {
            indent(level);
            out_ << "while " << expr(ValueKind::kBoolean, scope, 1) << " bound " << 1 + rng_.below(3) << ":\n";
            Scope inner = scope;
            block(inner, level + 1, max_depth);
        } else {
            indent(level);
            out_ << "return " << expr(ValueKind::kText, scope, 2) << "\n";
        }
    }

    void block(Scope& scope, int level, int max_depth) {
        const int n = 1 + static_cast<int>(rng_.below(3));
        for (int i = 0; i < n; ++i) statement(scope, level, max_depth);
    }

    Rng& rng_;
    std::ostringstream out_;
    int calls_ = 0;
    int next_var_ = 0;
};

Value random_site_value(ValueKind kind, Rng& rng) {
    switch (kind) {
        case ValueKind::kDetections: return Value(Detections{static_cast<std::int64_t>(rng.below(3))});
        case ValueKind::kBoolean: return Value(rng.uniform() < 0.5);
        case ValueKind::kNumber: return Value(static_cast<double>(rng.below(4)));
        default: return Value(std::string(rng.uniform() < 0.5 ? "yes" : "no"));
    }
}

}  // namespace

std::string random_program_source(Rng& rng, int max_depth) { return Generator(rng).program(max_depth); }

EnvironmentSpec random_environment(std::uint64_t seed) {
    Rng rng(mix_keys(seed, stable_hash("random-environment")));
    EnvironmentSpec spec;
    spec.name = "random-" + std::to_string(seed);
    spec.program_source = random_program_source(rng);
    const ProgramIR ir = parse_program(spec.program_source, spec.functions);

    std::set<std::string> used;
    for (const auto& s : ir.call_sites) used.insert(s.function);
    for (const auto& fn : used) {
        const std::size_t n = 1 + rng.below(3);
        for (std::size_t k = 0; k < n; ++k)
            spec.backends.push_back({fn + "_" + std::to_string(k), fn, 0.1 + 100.0 * rng.uniform(),
                                     SyntheticBehavior{0.5 + 0.5 * rng.uniform(), 2.0 * rng.uniform()}});
    }

    spec.generator.feature_dim = 4 + rng.below(13);
    spec.generator.positive_rate = rng.uniform();
    spec.generator.difficulty_max = rng.uniform();
    for (const auto& s : ir.call_sites) {
        const ValueKind kind = spec.functions.at(s.function).return_kind;
        SiteGenerator g;
        g.positive = {{random_site_value(kind, rng), 1.0, "wrong"}};
        g.negative = {{random_site_value(kind, rng), 0.5, "other"}, {random_site_value(kind, rng), 0.5, ""}};
        if (rng.uniform() < 0.5) g.feature_index = rng.below(spec.generator.feature_dim);
        spec.generator.sites.push_back(std::move(g));
    }
    spec.lambda = 0.01 + 3.0 * rng.uniform();
    spec.seed = seed;
    spec.correlation = rng.uniform() < 0.5 ? NoiseCorrelation::kIndependent : NoiseCorrelation::kSharedPerSite;
    return spec;
}

ConfigurationVector random_config(const StreamEnvironment& env, Rng& rng) {
    ConfigurationVector v;
    for (const auto& site : env.program().call_sites) {
        const auto arms = env.registry().backends_for(site.function);
        v.choices.push_back(arms[rng.below(arms.size())]->id);
    }
    return v;
}

}  // namespace fmp::testing
