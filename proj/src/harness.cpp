#include "fmprog/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fmp {

namespace {

const WeightedValue& pick(const std::vector<WeightedValue>& options, double u) {
    double total = 0.0;
    for (const auto& o : options) total += o.weight;
    double acc = 0.0;
    for (const auto& o : options) {
        acc += o.weight;
        if (u * total < acc) return o;
    }
    return options.back();
}

FunctionRegistry with_routing_function(const EnvironmentSpec& spec, ValueKind answer_kind) {
    FunctionRegistry functions = spec.functions;
    if (spec.routing && !functions.find(spec.routing->function))
        functions.add({spec.routing->function, 2, answer_kind});
    return functions;
}

ValueKind program_kind(const EnvironmentSpec& spec) {
    return parse_program(spec.program_source, spec.functions).return_kind.value_or(ValueKind::kText);
}

void check_generator(const InputGeneratorSpec& g, const ProgramIR& ir) {
    if (g.sites.size() != ir.num_sites())
        throw std::invalid_argument("generator describes " + std::to_string(g.sites.size()) +
                                    " call sites, program has " + std::to_string(ir.num_sites()));
    if (!(g.positive_rate >= 0.0 && g.positive_rate <= 1.0))
        throw std::invalid_argument("positive_rate must lie in [0,1]");
    if (!(g.difficulty_max >= 0.0)) throw std::invalid_argument("difficulty_max must be >= 0");
    for (std::size_t i = 0; i < g.sites.size(); ++i) {
        const auto& s = g.sites[i];
        if (s.positive.empty() || s.negative.empty())
            throw std::invalid_argument("site " + std::to_string(i) + " needs positive and negative values");
        if (s.feature_index && *s.feature_index >= g.feature_dim)
            throw std::invalid_argument("site " + std::to_string(i) + " feature_index out of range");
        for (const auto* list : {&s.positive, &s.negative})
            for (const auto& w : *list)
                if (!(w.weight >= 0.0)) throw std::invalid_argument("weights must be >= 0");
    }
    if (g.difficulty_feature && *g.difficulty_feature >= g.feature_dim)
        throw std::invalid_argument("difficulty_feature out of range");
}

}  // namespace

BackendRegistry build_registry(const EnvironmentSpec& spec) {
    BackendRegistry raw(with_routing_function(spec, program_kind(spec)));
    for (const auto& b : spec.backends) raw.register_backend(b);
    if (spec.routing)
        for (auto b : spec.routing->backends) {
            b.function = spec.routing->function;
            raw.register_backend(std::move(b));
        }
    return normalized_cost(raw);
}

// ---------------------------------------------------------------------------
// SyntheticEnvironment

SyntheticEnvironment::SyntheticEnvironment(const EnvironmentSpec& spec)
    : spec_(spec),
      program_(parse_program(spec.program_source, spec.functions)),
      registry_(build_registry(spec)),
      generator_(spec.generator),
      lambda_(spec.lambda),
      seed_(spec.seed),
      correlation_(spec.correlation),
      positive_label_(spec.positive_label) {
    if (!(lambda_ > 0.0)) throw std::invalid_argument("lambda must be > 0");
    if (auto diags = validate_program(program_, spec.functions); !diags.empty())
        throw std::invalid_argument("program is invalid: " + to_string(diags.front().pos) + ": " +
                                    diags.front().message);
    check_generator(generator_, program_);
    for (const auto& site : program_.call_sites) {
        if (registry_.count_for(site.function) == 0)
            throw std::invalid_argument("no backend registered for '" + site.function + "'");
        if (spec.routing && site.function == spec.routing->function)
            throw std::invalid_argument("routing function '" + site.function +
                                        "' must not be called by the program");
    }
}

std::pair<ProgramInput, LatentTruth> SyntheticEnvironment::draw(std::uint64_t t) const {
    Rng rng(mix_keys(seed_, stable_hash("inputs"), t));
    const bool positive = rng.uniform() < generator_.positive_rate;

    LatentTruth truth;
    truth.sites.reserve(generator_.sites.size());
    for (const auto& site : generator_.sites) {
        const auto& w = pick(positive ? site.positive : site.negative, rng.uniform());
        truth.sites.push_back({w.value, w.wrong_answer});
    }
    truth.difficulty = rng.uniform() * generator_.difficulty_max;

    ProgramInput input;
    input.id = "x" + std::to_string(t);
    input.features.resize(generator_.feature_dim);
    for (double& f : input.features) f = rng.normal();
    for (std::size_t i = 0; i < generator_.sites.size(); ++i) {
        if (const auto idx = generator_.sites[i].feature_index)
            input.features[*idx] += (truth.sites[i].value.truthy() ? 1.0 : -1.0) * generator_.feature_signal;
    }
    if (generator_.difficulty_feature) input.features[*generator_.difficulty_feature] = truth.difficulty;
    return {std::move(input), std::move(truth)};
}

void SyntheticEnvironment::require_current(std::uint64_t t, const char* what) const {
    if (t == 0 || t != current_)
        throw std::logic_error(std::string(what) + " for episode " + std::to_string(t) +
                               " but the current episode is " + std::to_string(current_));
}

ProgramInput SyntheticEnvironment::next_input(std::uint64_t t) {
    if (t <= current_)
        throw std::logic_error("episode " + std::to_string(t) + " already drawn; streams only move forward");
    current_ = t;
    executed_ = false;
    std::tie(input_, truth_) = draw(t);
    return input_;
}

ExecutionTrace SyntheticEnvironment::execute(const ConfigurationVector& config, std::uint64_t t) {
    require_current(t, "execute");
    ExecutionTrace trace = fmp::execute(program_, registry_, config, input_, truth_, {seed_, t}, correlation_);
    executed_ = true;
    return trace;
}

Value SyntheticEnvironment::reveal(std::uint64_t t) {
    require_current(t, "reveal");
    if (!executed_)
        throw std::logic_error("ground truth of episode " + std::to_string(t) +
                               " requested before the program was executed");
    return ground_truth_output(program_, input_, truth_);
}

// ---------------------------------------------------------------------------
// RoutingEnvironment

RoutingEnvironment::RoutingEnvironment(const EnvironmentSpec& spec) : inner_(spec) {
    if (!spec.routing) throw std::invalid_argument("environment has no routing arms");
    routing_ = *spec.routing;
    if (routing_.backends.empty()) throw std::invalid_argument("routing needs at least one arm");
    const std::string source =
        "program route(" + inner_.program().param + "):\n  return " + routing_.function + "(" +
        inner_.program().param + ", \"task\")\n";
    const FunctionRegistry functions = with_routing_function(spec, program_kind(spec));
    program_ = parse_program(source, functions);
    registry_ = build_registry(spec);
}

ProgramInput RoutingEnvironment::next_input(std::uint64_t t) {
    if (t <= current_)
        throw std::logic_error("episode " + std::to_string(t) + " already drawn; streams only move forward");
    current_ = t;
    executed_ = false;
    LatentTruth inner_truth;
    std::tie(input_, inner_truth) = inner_.draw(t);
    y_ = ground_truth_output(inner_.program(), input_, inner_truth);
    std::string wrong;
    for (const auto& a : routing_.answer_space)
        if (!(Value(a) == y_)) {
            wrong = a;
            break;
        }
    truth_.sites = {SiteTruth{y_, wrong}};
    truth_.difficulty = inner_truth.difficulty;
    return input_;
}

ExecutionTrace RoutingEnvironment::execute(const ConfigurationVector& config, std::uint64_t t) {
    if (t == 0 || t != current_) throw std::logic_error("execute called out of order");
    ExecutionTrace trace =
        fmp::execute(program_, registry_, config, input_, truth_, {inner_.seed(), t}, inner_.spec().correlation);
    executed_ = true;
    return trace;
}

Value RoutingEnvironment::reveal(std::uint64_t t) {
    if (t == 0 || t != current_ || !executed_)
        throw std::logic_error("ground truth requested before the program was executed");
    return y_;
}

// ---------------------------------------------------------------------------
// Rewards and policies

double compute_reward(double loss, double incurred_cost, double lambda) {
    return 0.0 - loss - lambda * incurred_cost;
}

namespace {

ConfigurationVector extreme_config(const ProgramIR& ir, const BackendRegistry& registry, bool cheapest) {
    ConfigurationVector config;
    for (const auto& site : ir.call_sites) {
        const auto arms = registry.backends_for(site.function);
        if (arms.empty()) throw std::invalid_argument("no backend for '" + site.function + "'");
        const BackendSpec* best = arms.front();
        for (const auto* b : arms)
            if (cheapest ? b->cost < best->cost : b->cost > best->cost) best = b;
        config.choices.push_back(best->id);
    }
    return config;
}

}  // namespace

ConfigurationVector cheapest_config(const ProgramIR& ir, const BackendRegistry& registry) {
    return extreme_config(ir, registry, true);
}

ConfigurationVector most_expensive_config(const ProgramIR& ir, const BackendRegistry& registry) {
    return extreme_config(ir, registry, false);
}

std::unique_ptr<StaticPolicy> static_policy(const StreamEnvironment& env, ConfigurationVector config,
                                            std::string name) {
    check_configuration(env.program(), env.registry(), config);
    return std::make_unique<StaticPolicy>(std::move(config), std::move(name));
}

std::unique_ptr<StructuredPolicy> routing_policy(const StreamEnvironment& routing_env,
                                                 const PolicyHyperparams& hp, std::uint64_t seed) {
    if (routing_env.program().num_sites() != 1)
        throw std::invalid_argument("routing works on single-call programs");
    return std::make_unique<StructuredPolicy>(routing_env.program(), routing_env.registry(),
                                              routing_env.feature_dim(), hp, seed, "routing");
}

ParetoRandomPolicy::ParetoRandomPolicy(std::unique_ptr<Policy> low, std::unique_ptr<Policy> high,
                                       double q, std::uint64_t seed)
    : low_(std::move(low)), high_(std::move(high)), q_(q), rng_(mix_keys(seed, stable_hash("pareto"))) {
    if (!low_ || !high_) throw std::invalid_argument("pareto-random needs two policies");
    if (!(q_ >= 0.0 && q_ <= 1.0)) throw std::invalid_argument("q must lie in [0,1]");
}

std::string ParetoRandomPolicy::name() const {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << "pareto-random-q" << q_;
    return out.str();
}

ConfigurationVector ParetoRandomPolicy::decide(const ProgramInput& input, std::uint64_t t) {
    last_ = rng_.uniform() < q_ ? high_.get() : low_.get();
    return last_->decide(input, t);
}

void ParetoRandomPolicy::observe(const Feedback& feedback) {
    if (last_) last_->observe(feedback);
}

// ---------------------------------------------------------------------------
// Episodes

nlohmann::json episode_json(const EpisodeRecord& r) {
    return {{"episode", r.t},
            {"config", r.config.choices},
            {"output", r.trace.output},
            {"y", r.y},
            {"loss", r.loss},
            {"per_site_cost", r.trace.per_site_cost},
            {"incurred_cost", r.trace.incurred_cost},
            {"reward", r.reward},
            {"sub_rewards", r.sub_rewards}};
}

EpisodeRecord run_episode(StreamEnvironment& env, Policy& policy, std::uint64_t t, RegretLedger* ledger) {
    EpisodeRecord rec;
    rec.t = t;
    const ProgramInput input = env.next_input(t);
    rec.features = input.features;
    rec.config = policy.decide(input, t);
    rec.trace = env.execute(rec.config, t);
    rec.y = env.reveal(t);
    rec.loss = loss(rec.trace.output, rec.y);
    rec.reward = compute_reward(rec.loss, rec.trace.incurred_cost, env.lambda());
    rec.sub_rewards = sub_rewards(rec.trace, rec.loss, env.lambda(), env.program().num_sites());
    policy.observe(Feedback{t, input, rec.config, rec.trace, rec.loss, rec.reward, rec.sub_rewards});
    if (ledger) ledger->record(env, t, rec.y, rec.reward);
    return rec;
}

// ---------------------------------------------------------------------------
// Regret

RegretLedger::RegretLedger(const ProgramIR& ir, const BackendRegistry& registry, std::uint64_t seed) {
    std::vector<std::vector<std::string>> arms;
    std::size_t product = 1;
    bool over_cap = false;
    for (const auto& site : ir.call_sites) {
        std::vector<std::string> ids;
        for (const auto* b : registry.backends_for(site.function)) ids.push_back(b->id);
        if (ids.empty()) throw std::invalid_argument("no backend for '" + site.function + "'");
        if (product > kEnumerationCap / ids.size() + 1) over_cap = true;
        product *= ids.size();
        if (product > kEnumerationCap) over_cap = true;
        arms.push_back(std::move(ids));
    }

    if (!over_cap) {
        // Mixed-radix enumeration, last site fastest.
        std::vector<std::size_t> digits(arms.size(), 0);
        for (std::size_t k = 0; k < product; ++k) {
            ConfigurationVector v;
            for (std::size_t i = 0; i < arms.size(); ++i) v.choices.push_back(arms[i][digits[i]]);
            universe_.push_back(std::move(v));
            for (std::size_t i = arms.size(); i-- > 0;) {
                if (++digits[i] < arms[i].size()) break;
                digits[i] = 0;
            }
        }
    } else {
        approximate_ = true;
        std::set<std::vector<std::string>> seen;
        auto add = [&](ConfigurationVector v) {
            if (seen.insert(v.choices).second) universe_.push_back(std::move(v));
        };
        add(cheapest_config(ir, registry));
        add(most_expensive_config(ir, registry));
        Rng rng(mix_keys(seed, stable_hash("regret-universe")));
        for (std::size_t attempt = 0; universe_.size() < kSampledConfigs + 2 && attempt < 100 * kSampledConfigs;
             ++attempt) {
            ConfigurationVector v;
            for (const auto& ids : arms) v.choices.push_back(ids[rng.below(ids.size())]);
            add(std::move(v));
        }
    }
    totals_.assign(universe_.size(), 0.0);
}

void RegretLedger::record(StreamEnvironment& env, std::uint64_t t, const Value& y, double achieved_reward) {
    std::vector<double> rewards;
    rewards.reserve(universe_.size());
    for (const auto& v : universe_) {
        const ExecutionTrace trace = env.execute(v, t);
        rewards.push_back(compute_reward(loss(trace.output, y), trace.incurred_cost, env.lambda()));
    }
    accumulate(rewards, achieved_reward);
}

void RegretLedger::accumulate(std::span<const double> rewards, double achieved_reward) {
    if (rewards.size() != universe_.size())
        throw std::invalid_argument("expected one reward per configuration in the universe");
    if (gamma_.empty()) r_min_ = r_max_ = achieved_reward;
    double best_here = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rewards.size(); ++k) {
        totals_[k] += rewards[k];
        best_here = std::max(best_here, rewards[k]);
        r_min_ = std::min(r_min_, rewards[k]);
        r_max_ = std::max(r_max_, rewards[k]);
    }
    r_min_ = std::min(r_min_, achieved_reward);
    r_max_ = std::max(r_max_, achieved_reward);
    achieved_ += achieved_reward;
    oracle_ += best_here;
    gamma_.push_back(*std::max_element(totals_.begin(), totals_.end()) - achieved_);
}

std::size_t RegretLedger::best_index() const {
    return static_cast<std::size_t>(std::max_element(totals_.begin(), totals_.end()) - totals_.begin());
}

RegretSummary regret(const RegretLedger& ledger) {
    if (ledger.episodes() == 0) throw std::logic_error("regret of an empty ledger");
    RegretSummary out;
    const auto g = ledger.gamma_series();
    out.gamma = g.back();
    out.average.reserve(g.size());
    for (std::size_t t = 0; t < g.size(); ++t) out.average.push_back(g[t] / static_cast<double>(t + 1));
    out.approximate = ledger.approximate();
    return out;
}

// ---------------------------------------------------------------------------
// Runs

RunMetrics summarize(std::span<const EpisodeRecord> episodes, const std::optional<Value>& positive) {
    RunMetrics m;
    m.episodes = episodes.size();
    if (episodes.empty()) return m;
    double loss_sum = 0.0, cost_sum = 0.0, reward_sum = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& e : episodes) {
        loss_sum += e.loss;
        cost_sum += e.trace.incurred_cost;
        reward_sum += e.reward;
        if (positive) {
            const bool predicted = e.trace.output == *positive;
            const bool actual = e.y == *positive;
            tp += predicted && actual;
            fp += predicted && !actual;
            fn += !predicted && actual;
        }
    }
    const double n = static_cast<double>(episodes.size());
    m.accuracy = 1.0 - loss_sum / n;
    m.mean_cost = cost_sum / n;
    m.mean_reward = reward_sum / n;
    if (positive) {
        const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        m.precision = p;
        m.recall = r;
        m.f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return m;
}

RunResult run_stream(StreamEnvironment& env, Policy& policy, std::uint64_t horizon, const RunOptions& options) {
    RunResult result;
    std::optional<RegretLedger> ledger;
    if (options.track_regret) ledger.emplace(env.program(), env.registry(), mix_keys(horizon, 0x5eed));
    result.episodes.reserve(horizon);
    for (std::uint64_t t = 1; t <= horizon; ++t) {
        result.episodes.push_back(run_episode(env, policy, t, ledger ? &*ledger : nullptr));
        if (options.on_episode) options.on_episode(result.episodes.back());
    }
    result.metrics = summarize(result.episodes, env.positive_label());
    if (ledger) {
        result.universe.assign(ledger->universe().begin(), ledger->universe().end());
        result.counterfactual_totals.assign(ledger->counterfactual_totals().begin(),
                                            ledger->counterfactual_totals().end());
        if (ledger->episodes() > 0) {
            result.regret = regret(*ledger);
            result.best_static = ledger->best_index();
        } else {
            result.regret = RegretSummary{0.0, {}, ledger->approximate()};
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Pareto

std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points) {
    std::vector<ParetoPoint> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
        return a.cost != b.cost ? a.cost < b.cost : a.performance > b.performance;
    });
    std::vector<ParetoPoint> front;
    for (const auto& p : sorted)
        if (front.empty() || p.performance > front.back().performance) front.push_back(p);
    return front;
}

}  // namespace fmp
