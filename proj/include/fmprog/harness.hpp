#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmprog/executor.hpp"
#include "fmprog/policy.hpp"

namespace fmp {

// ---------------------------------------------------------------------------
// Environments

/// A categorical outcome for one call site's latent value.
struct WeightedValue {
    Value value;
    double weight = 1.0;
    std::string wrong_answer;  // what a wrong text backend says instead
};

/// How the latent value of one call site is drawn, per input class.
struct SiteGenerator {
    std::vector<WeightedValue> positive;
    std::vector<WeightedValue> negative;
    std::optional<std::size_t> feature_index;  // feature shifted by +-signal with truthiness
};

struct InputGeneratorSpec {
    std::size_t feature_dim = 16;
    double positive_rate = 0.01;
    double feature_signal = 1.5;
    double difficulty_max = 0.0;  // difficulty ~ U[0, difficulty_max]
    std::optional<std::size_t> difficulty_feature;
    std::vector<SiteGenerator> sites;
};

/// Monolithic arms answering the whole task, for the routing baseline.
struct RoutingSpec {
    std::string function = "answer";
    std::vector<BackendSpec> backends;
    std::vector<std::string> answer_space;  // wrong answers are drawn from here
};

struct EnvironmentSpec {
    std::string name = "env";
    std::string program_source;
    FunctionRegistry functions = FunctionRegistry::standard();
    std::vector<BackendSpec> backends;  // raw costs; normalised with the routing arms
    std::optional<RoutingSpec> routing;
    InputGeneratorSpec generator;
    double lambda = 0.3;
    std::uint64_t horizon = 1000;
    std::uint64_t seed = 0;
    NoiseCorrelation correlation = NoiseCorrelation::kIndependent;
    std::optional<Value> positive_label;  // enables precision/recall/F1
};

/// A stream of inputs whose ground truth is revealed only after execution.
class StreamEnvironment {
public:
    virtual ~StreamEnvironment() = default;

    virtual const ProgramIR& program() const = 0;
    virtual const BackendRegistry& registry() const = 0;
    virtual double lambda() const = 0;
    virtual std::size_t feature_dim() const = 0;
    virtual std::optional<Value> positive_label() const { return std::nullopt; }

    /// x_t. Episodes are 1-based and strictly sequential.
    virtual ProgramInput next_input(std::uint64_t t) = 0;
    /// Runs the program on x_t; may be called repeatedly for counterfactuals.
    virtual ExecutionTrace execute(const ConfigurationVector& config, std::uint64_t t) = 0;
    /// y_t; only legal once the episode's first execution has returned.
    virtual Value reveal(std::uint64_t t) = 0;
};

/// Draws (x_t, truth_t) from a seeded generator; backends simulated with common random numbers.
class SyntheticEnvironment : public StreamEnvironment {
public:
    explicit SyntheticEnvironment(const EnvironmentSpec& spec);

    const ProgramIR& program() const override { return program_; }
    const BackendRegistry& registry() const override { return registry_; }
    double lambda() const override { return lambda_; }
    std::size_t feature_dim() const override { return generator_.feature_dim; }
    std::optional<Value> positive_label() const override { return positive_label_; }

    ProgramInput next_input(std::uint64_t t) override;
    ExecutionTrace execute(const ConfigurationVector& config, std::uint64_t t) override;
    Value reveal(std::uint64_t t) override;

    /// Latent draw for episode t; a pure function of (seed, t).
    std::pair<ProgramInput, LatentTruth> draw(std::uint64_t t) const;

    std::uint64_t seed() const { return seed_; }
    const EnvironmentSpec& spec() const { return spec_; }

private:
    void require_current(std::uint64_t t, const char* what) const;

    EnvironmentSpec spec_;
    ProgramIR program_;
    BackendRegistry registry_;
    InputGeneratorSpec generator_;
    double lambda_;
    std::uint64_t seed_;
    NoiseCorrelation correlation_;
    std::optional<Value> positive_label_;

    std::uint64_t current_ = 0;
    bool executed_ = false;
    ProgramInput input_;
    LatentTruth truth_;
};

/// Same inputs and ground truth as `spec`, but the program is one monolithic call
/// (`routing.function`) answering the whole task.
class RoutingEnvironment : public StreamEnvironment {
public:
    explicit RoutingEnvironment(const EnvironmentSpec& spec);

    const ProgramIR& program() const override { return program_; }
    const BackendRegistry& registry() const override { return registry_; }
    double lambda() const override { return inner_.lambda(); }
    std::size_t feature_dim() const override { return inner_.feature_dim(); }
    std::optional<Value> positive_label() const override { return inner_.positive_label(); }

    ProgramInput next_input(std::uint64_t t) override;
    ExecutionTrace execute(const ConfigurationVector& config, std::uint64_t t) override;
    Value reveal(std::uint64_t t) override;

private:
    SyntheticEnvironment inner_;
    RoutingSpec routing_;
    ProgramIR program_;
    BackendRegistry registry_;
    std::uint64_t current_ = 0;
    bool executed_ = false;
    ProgramInput input_;
    LatentTruth truth_;
    Value y_;
};

/// Program backends and routing arms normalised together (max cost = 1).
BackendRegistry build_registry(const EnvironmentSpec& spec);

// ---------------------------------------------------------------------------
// Rewards and baseline policies

/// R = -loss - lambda * cost.
double compute_reward(double loss, double incurred_cost, double lambda);

ConfigurationVector cheapest_config(const ProgramIR& ir, const BackendRegistry& registry);
ConfigurationVector most_expensive_config(const ProgramIR& ir, const BackendRegistry& registry);

/// Same configuration for every input; never learns.
class StaticPolicy : public Policy {
public:
    StaticPolicy(ConfigurationVector config, std::string name = "static")
        : config_(std::move(config)), name_(std::move(name)) {}

    std::string name() const override { return name_; }
    ConfigurationVector decide(const ProgramInput&, std::uint64_t) override { return config_; }
    const ConfigurationVector& config() const { return config_; }

private:
    ConfigurationVector config_;
    std::string name_;
};

/// Validated static policy; throws std::invalid_argument for an invalid configuration.
std::unique_ptr<StaticPolicy> static_policy(const StreamEnvironment& env, ConfigurationVector config,
                                            std::string name = "static");

/// The routing baseline: one Thompson/REINFORCE subpolicy over monolithic arms.
std::unique_ptr<StructuredPolicy> routing_policy(const StreamEnvironment& routing_env,
                                                 const PolicyHyperparams& hp, std::uint64_t seed);

/// Per episode, uses `high` with probability q, else `low`.
class ParetoRandomPolicy : public Policy {
public:
    ParetoRandomPolicy(std::unique_ptr<Policy> low, std::unique_ptr<Policy> high, double q,
                       std::uint64_t seed);

    std::string name() const override;
    ConfigurationVector decide(const ProgramInput& input, std::uint64_t t) override;
    void observe(const Feedback& feedback) override;

private:
    std::unique_ptr<Policy> low_;
    std::unique_ptr<Policy> high_;
    double q_;
    Rng rng_;
    Policy* last_ = nullptr;
};

// ---------------------------------------------------------------------------
// Episodes, regret, runs

struct EpisodeRecord {
    std::uint64_t t = 0;
    std::vector<double> features;
    ConfigurationVector config;
    ExecutionTrace trace;
    Value y;
    double loss = 0.0;
    double reward = 0.0;
    std::vector<double> sub_rewards;
};

/// One JSON object per episode, as written to episodes.jsonl.
nlohmann::json episode_json(const EpisodeRecord& record);

/// Counterfactual rewards of static configurations on the realised stream.
class RegretLedger {
public:
    static constexpr std::size_t kEnumerationCap = 256;
    static constexpr std::size_t kSampledConfigs = 64;

    RegretLedger(const ProgramIR& ir, const BackendRegistry& registry, std::uint64_t seed);

    /// Evaluates every configuration in the universe on episode t.
    void record(StreamEnvironment& env, std::uint64_t t, const Value& y, double achieved_reward);
    /// Adds one episode given each configuration's reward, in universe order.
    void accumulate(std::span<const double> rewards, double achieved_reward);

    std::span<const ConfigurationVector> universe() const { return universe_; }
    bool approximate() const { return approximate_; }
    std::size_t episodes() const { return gamma_.size(); }

    std::span<const double> counterfactual_totals() const { return totals_; }
    double achieved_total() const { return achieved_; }
    /// sum_t max_v R(v, x_t, y_t) over the universe: the context-dependent benchmark.
    double context_oracle_total() const { return oracle_; }
    std::size_t best_index() const;

    /// gamma_t for t = 1..episodes().
    std::span<const double> gamma_series() const { return gamma_; }

    double reward_min() const { return r_min_; }
    double reward_max() const { return r_max_; }

private:
    std::vector<ConfigurationVector> universe_;
    bool approximate_ = false;
    std::vector<double> totals_;
    double achieved_ = 0.0;
    double oracle_ = 0.0;
    std::vector<double> gamma_;
    double r_min_ = 0.0;
    double r_max_ = 0.0;
};

struct RegretSummary {
    double gamma = 0.0;
    std::vector<double> average;  // gamma_t / t
    bool approximate = false;
};

/// Throws std::logic_error on an empty ledger.
RegretSummary regret(const RegretLedger& ledger);

/// Runs one episode of the online loop: observe x_t, decide, execute, reveal y_t, learn.
EpisodeRecord run_episode(StreamEnvironment& env, Policy& policy, std::uint64_t t,
                          RegretLedger* ledger = nullptr);

struct RunMetrics {
    std::size_t episodes = 0;
    double accuracy = 0.0;
    double mean_cost = 0.0;
    double mean_reward = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

RunMetrics summarize(std::span<const EpisodeRecord> episodes, const std::optional<Value>& positive);

struct RunResult {
    std::vector<EpisodeRecord> episodes;
    RunMetrics metrics;
    std::optional<RegretSummary> regret;
    std::optional<std::size_t> best_static;  // index into the ledger universe
    std::vector<ConfigurationVector> universe;
    std::vector<double> counterfactual_totals;
};

struct RunOptions {
    bool track_regret = true;
    std::function<void(const EpisodeRecord&)> on_episode;  // called as each episode completes
};

RunResult run_stream(StreamEnvironment& env, Policy& policy, std::uint64_t horizon,
                     const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Pareto fronts

struct ParetoPoint {
    double cost = 0.0;
    double performance = 0.0;
    friend bool operator==(const ParetoPoint&, const ParetoPoint&) = default;
};

/// Points not dominated by any other (<= cost and >= performance, one strict);
/// duplicates collapse to one. Sorted by cost.
std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points);

}  // namespace fmp
