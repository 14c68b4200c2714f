#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmprog/executor.hpp"
#include "fmprog/rng.hpp"
#include "json.hpp"

namespace fmp {

// ---------------------------------------------------------------------------
// Score network

struct NetworkShape {
    std::size_t inputs = 16;
    std::size_t hidden = 32;  // 0 means a purely linear scorer
    std::size_t outputs = 2;

    std::size_t parameter_count() const;
    friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// inputs -> tanh hidden layer -> one score per arm, with hand-written gradients.
///
/// Flat parameter layout: W1 (hidden x inputs, row-major), b1, W2 (outputs x hidden), b2.
/// With hidden == 0: W (outputs x inputs), b.
class ScoreNetwork {
public:
    struct Activations {
        std::vector<double> hidden;
        std::vector<double> scores;
    };

    ScoreNetwork() = default;
    ScoreNetwork(NetworkShape shape, std::vector<double> params);

    /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
    static ScoreNetwork initialized(NetworkShape shape, Rng& rng);

    const NetworkShape& shape() const { return shape_; }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }

    Activations forward(std::span<const double> x) const;

    /// grad += sum_j dscores[j] * d score_j / d theta.
    void backpropagate(std::span<const double> x, const Activations& act,
                       std::span<const double> dscores, std::span<double> grad) const;

private:
    NetworkShape shape_;
    std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Per-site state

struct PolicyHyperparams {
    double nu = 1.0;                       // exploration scale
    double eta0 = 0.05;                    // eta_t = eta0 / sqrt(t)
    std::size_t train_interval = 16;       // episodes between updates
    std::size_t samples_per_update = 16;   // S
    std::size_t replay_capacity = 4096;
    bool baseline = false;                 // running-mean baseline per site
    bool warm_start = true;                // force each arm once, round-robin
    std::size_t hidden = 32;
    double initial_uncertainty = 1.0;

    friend bool operator==(const PolicyHyperparams&, const PolicyHyperparams&) = default;
};

void to_json(nlohmann::json& j, const PolicyHyperparams& hp);
void from_json(const nlohmann::json& j, PolicyHyperparams& hp);

struct SubRewardSample {
    std::vector<double> features;
    std::size_t arm = 0;
    double reward = 0.0;
    std::uint64_t episode = 0;
};

/// Fixed-capacity ring buffer; indexing runs oldest to newest.
template <class T>
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) { items_.reserve(capacity); }

    void push(T item) {
        if (capacity_ == 0) return;
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            items_[head_] = std::move(item);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    const T& operator[](std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

    /// `count` draws with replacement.
    std::vector<T> sample(Rng& rng, std::size_t count) const {
        std::vector<T> out;
        if (items_.empty()) return out;
        out.reserve(count);
        for (std::size_t k = 0; k < count; ++k) out.push_back((*this)[rng.below(items_.size())]);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<T> items_;
};

/// Parameters and exploration state of the subpolicy owning one call site.
struct SubPolicyState {
    ScoreNetwork network;
    std::vector<double> uncertainty;  // U, same length as the parameters
    std::vector<std::string> arms;    // backend ids, registry order
    std::vector<double> arm_costs;    // used to break ties
    std::size_t selections = 0;
    double reward_sum = 0.0;          // running-mean baseline
    std::size_t reward_count = 0;
    ReplayBuffer<SubRewardSample> replay;

    static SubPolicyState create(std::vector<std::string> arms, std::vector<double> arm_costs,
                                 std::size_t feature_dim, const PolicyHyperparams& hp, Rng& rng);

    std::size_t num_arms() const { return network.shape().outputs; }
    double baseline() const { return reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0; }
};

// ---------------------------------------------------------------------------
// Operations

/// Row-major arms x parameters.
struct GradientMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// r' per arm: the network's scores.
std::vector<double> predict_rewards(const SubPolicyState& state, std::span<const double> x);

/// g[j][l] = d r'_j / d theta_l.
GradientMatrix per_arm_gradients(const SubPolicyState& state, std::span<const double> x);

/// sqrt(sum_l g_l^2 / U_l).
double uncertainty_sigma(std::span<const double> gradient, std::span<const double> uncertainty);

/// argmax_j of r'_j + nu * sigma_j * z_j with z_j ~ N(0,1). One normal is drawn per
/// arm even when nu == 0. Exact ties go to the cheaper arm, then the lower index.
std::size_t thompson_select(std::span<const double> scores, std::span<const double> sigmas, double nu,
                            Rng& rng, std::span<const double> costs = {});

/// U_l += g_l^2 for the selected arm's gradient.
void update_uncertainty(std::span<double> uncertainty, std::span<const double> gradient);

std::vector<double> softmax(std::span<const double> scores);

/// d log softmax(scores)[arm] / d theta.
std::vector<double> log_policy_gradient(const SubPolicyState& state, std::span<const double> x,
                                        std::size_t arm);

struct Selection {
    ConfigurationVector config;
    std::vector<std::size_t> arms;
    std::size_t arm_evaluations = 0;  // one per scored arm, summed over sites
};

/// Per-site Thompson selection; updates each site's U with the chosen arm's gradient.
Selection select_configuration(std::span<SubPolicyState> sites, std::span<const double> x, double nu,
                               Rng& rng, bool warm_start = false);

/// r_i = -lambda * per_site_cost[i] - loss / N; the r_i sum to the episode reward.
std::vector<double> sub_rewards(const ExecutionTrace& trace, double loss_value, double lambda,
                                std::size_t num_sites);

/// theta += eta * sum_s (r_s - b) * grad log pi(arm_s | x_s), b the running baseline when enabled.
void reinforce_update(SubPolicyState& state, std::span<const SubRewardSample> batch, double eta,
                      bool use_baseline);

// ---------------------------------------------------------------------------
// Policies

struct Feedback {
    std::uint64_t t = 0;  // 1-based episode index
    const ProgramInput& input;
    const ConfigurationVector& config;
    const ExecutionTrace& trace;
    double loss = 0.0;
    double reward = 0.0;
    std::span<const double> sub_rewards;
};

/// Maps each input to a configuration; may learn from the revealed outcome.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    virtual ConfigurationVector decide(const ProgramInput& input, std::uint64_t t) = 0;
    virtual void observe(const Feedback&) {}
};

/// One subpolicy per call site, Thompson selection, Structured REINFORCE updates.
class StructuredPolicy : public Policy {
public:
    StructuredPolicy(const ProgramIR& ir, const BackendRegistry& registry, std::size_t feature_dim,
                     PolicyHyperparams hp, std::uint64_t seed, std::string name = "structured");

    std::string name() const override { return name_; }
    ConfigurationVector decide(const ProgramInput& input, std::uint64_t t) override;
    void observe(const Feedback& feedback) override;

    std::span<const SubPolicyState> sites() const { return sites_; }
    std::span<SubPolicyState> sites() { return sites_; }
    const PolicyHyperparams& hyperparams() const { return hp_; }
    std::uint64_t episodes() const { return episodes_; }
    std::uint64_t arm_evaluations() const { return arm_evaluations_; }

    /// Arm probabilities softmax(scores) per site for one input.
    std::vector<std::vector<double>> probabilities(std::span<const double> x) const;

    void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

    nlohmann::json checkpoint() const;
    /// Restores parameters, U, replay buffers and counters. The RNG is not part of it.
    void restore(const nlohmann::json& checkpoint);

private:
    std::string name_;
    PolicyHyperparams hp_;
    std::vector<SubPolicyState> sites_;
    Rng rng_;
    std::uint64_t episodes_ = 0;
    std::uint64_t arm_evaluations_ = 0;
    std::vector<std::size_t> pending_arms_;
    ConfigurationVector pending_config_;
};

}  // namespace fmp
