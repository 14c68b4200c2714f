#include "fmprog/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fmp {

// ---------------------------------------------------------------------------
// ScoreNetwork

std::size_t NetworkShape::parameter_count() const {
    if (hidden == 0) return outputs * inputs + outputs;
    return hidden * inputs + hidden + outputs * hidden + outputs;
}

ScoreNetwork::ScoreNetwork(NetworkShape shape, std::vector<double> params)
    : shape_(shape), params_(std::move(params)) {
    if (params_.size() != shape_.parameter_count())
        throw std::invalid_argument("network expects " + std::to_string(shape_.parameter_count()) +
                                    " parameters, got " + std::to_string(params_.size()));
}

ScoreNetwork ScoreNetwork::initialized(NetworkShape shape, Rng& rng) {
    std::vector<double> params(shape.parameter_count(), 0.0);
    auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
        const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < count; ++i) params[offset + i] = (2.0 * rng.uniform() - 1.0) * limit;
    };
    if (shape.hidden == 0) {
        fill(0, shape.outputs * shape.inputs, shape.inputs);
    } else {
        fill(0, shape.hidden * shape.inputs, shape.inputs);
        fill(shape.hidden * shape.inputs + shape.hidden, shape.outputs * shape.hidden, shape.hidden);
    }
    return ScoreNetwork(shape, std::move(params));
}

ScoreNetwork::Activations ScoreNetwork::forward(std::span<const double> x) const {
    if (x.size() != shape_.inputs)
        throw std::invalid_argument("feature vector has " + std::to_string(x.size()) +
                                    " entries, network expects " + std::to_string(shape_.inputs));
    const std::size_t d = shape_.inputs;
    const std::size_t h = shape_.hidden;
    const std::size_t n = shape_.outputs;
    const double* p = params_.data();

    Activations act;
    act.scores.assign(n, 0.0);
    if (h == 0) {
        const double* b = p + n * d;
        for (std::size_t j = 0; j < n; ++j) {
            double s = b[j];
            for (std::size_t i = 0; i < d; ++i) s += p[j * d + i] * x[i];
            act.scores[j] = s;
        }
        return act;
    }
    const double* b1 = p + h * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + n * h;
    act.hidden.assign(h, 0.0);
    for (std::size_t k = 0; k < h; ++k) {
        double z = b1[k];
        for (std::size_t i = 0; i < d; ++i) z += p[k * d + i] * x[i];
        act.hidden[k] = std::tanh(z);
    }
    for (std::size_t j = 0; j < n; ++j) {
        double s = b2[j];
        for (std::size_t k = 0; k < h; ++k) s += w2[j * h + k] * act.hidden[k];
        act.scores[j] = s;
    }
    return act;
}

void ScoreNetwork::backpropagate(std::span<const double> x, const Activations& act,
                                 std::span<const double> dscores, std::span<double> grad) const {
    const std::size_t d = shape_.inputs;
    const std::size_t h = shape_.hidden;
    const std::size_t n = shape_.outputs;
    double* g = grad.data();
    if (h == 0) {
        for (std::size_t j = 0; j < n; ++j) {
            if (dscores[j] == 0.0) continue;
            for (std::size_t i = 0; i < d; ++i) g[j * d + i] += dscores[j] * x[i];
            g[n * d + j] += dscores[j];
        }
        return;
    }
    const double* w2 = params_.data() + h * d + h;
    double* gb1 = g + h * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + n * h;
    for (std::size_t k = 0; k < h; ++k) {
        double dh = 0.0;
        for (std::size_t j = 0; j < n; ++j) dh += dscores[j] * w2[j * h + k];
        const double dz = dh * (1.0 - act.hidden[k] * act.hidden[k]);
        if (dz != 0.0)
            for (std::size_t i = 0; i < d; ++i) g[k * d + i] += dz * x[i];
        gb1[k] += dz;
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (dscores[j] == 0.0) continue;
        for (std::size_t k = 0; k < h; ++k) gw2[j * h + k] += dscores[j] * act.hidden[k];
        gb2[j] += dscores[j];
    }
}

// ---------------------------------------------------------------------------
// Hyperparameters

void to_json(nlohmann::json& j, const PolicyHyperparams& hp) {
    j = {{"nu", hp.nu},
         {"eta0", hp.eta0},
         {"train_interval", hp.train_interval},
         {"samples_per_update", hp.samples_per_update},
         {"replay_capacity", hp.replay_capacity},
         {"baseline", hp.baseline},
         {"warm_start", hp.warm_start},
         {"hidden", hp.hidden},
         {"initial_uncertainty", hp.initial_uncertainty}};
}

void from_json(const nlohmann::json& j, PolicyHyperparams& hp) {
    if (!j.is_object()) throw std::invalid_argument("policy hyperparameters must be an object");
    PolicyHyperparams out;
    for (const auto& [key, value] : j.items()) {
        if (key == "nu") out.nu = value.get<double>();
        else if (key == "eta0") out.eta0 = value.get<double>();
        else if (key == "train_interval") out.train_interval = value.get<std::size_t>();
        else if (key == "samples_per_update") out.samples_per_update = value.get<std::size_t>();
        else if (key == "replay_capacity") out.replay_capacity = value.get<std::size_t>();
        else if (key == "baseline") out.baseline = value.get<bool>();
        else if (key == "warm_start") out.warm_start = value.get<bool>();
        else if (key == "hidden") out.hidden = value.get<std::size_t>();
        else if (key == "initial_uncertainty") out.initial_uncertainty = value.get<double>();
        else throw std::invalid_argument("unknown policy key '" + key + "'");
    }
    if (!(out.nu >= 0.0)) throw std::invalid_argument("policy.nu must be >= 0");
    if (!(out.eta0 > 0.0)) throw std::invalid_argument("policy.eta0 must be > 0");
    if (out.train_interval == 0) throw std::invalid_argument("policy.train_interval must be > 0");
    if (out.samples_per_update == 0) throw std::invalid_argument("policy.samples_per_update must be > 0");
    if (!(out.initial_uncertainty > 0.0))
        throw std::invalid_argument("policy.initial_uncertainty must be > 0");
    hp = out;
}

// ---------------------------------------------------------------------------
// Subpolicy operations

SubPolicyState SubPolicyState::create(std::vector<std::string> arms, std::vector<double> arm_costs,
                                      std::size_t feature_dim, const PolicyHyperparams& hp, Rng& rng) {
    if (arms.empty()) throw std::invalid_argument("a subpolicy needs at least one arm");
    if (arm_costs.size() != arms.size()) throw std::invalid_argument("one cost per arm required");
    SubPolicyState s;
    s.network = ScoreNetwork::initialized({feature_dim, hp.hidden, arms.size()}, rng);
    s.uncertainty.assign(s.network.params().size(), hp.initial_uncertainty);
    s.arms = std::move(arms);
    s.arm_costs = std::move(arm_costs);
    s.replay = ReplayBuffer<SubRewardSample>(hp.replay_capacity);
    return s;
}

std::vector<double> predict_rewards(const SubPolicyState& state, std::span<const double> x) {
    return state.network.forward(x).scores;
}

GradientMatrix per_arm_gradients(const SubPolicyState& state, std::span<const double> x) {
    const auto act = state.network.forward(x);
    GradientMatrix g;
    g.rows = state.num_arms();
    g.cols = state.network.params().size();
    g.data.assign(g.rows * g.cols, 0.0);
    std::vector<double> onehot(g.rows, 0.0);
    for (std::size_t j = 0; j < g.rows; ++j) {
        onehot[j] = 1.0;
        state.network.backpropagate(x, act, onehot, {g.data.data() + j * g.cols, g.cols});
        onehot[j] = 0.0;
    }
    return g;
}

double uncertainty_sigma(std::span<const double> gradient, std::span<const double> uncertainty) {
    if (gradient.size() != uncertainty.size())
        throw std::invalid_argument("gradient and uncertainty lengths differ");
    double acc = 0.0;
    for (std::size_t l = 0; l < gradient.size(); ++l) {
        if (!(uncertainty[l] > 0.0)) throw std::invalid_argument("uncertainty entries must be positive");
        acc += gradient[l] * gradient[l] / uncertainty[l];
    }
    return std::sqrt(acc);
}

std::size_t thompson_select(std::span<const double> scores, std::span<const double> sigmas, double nu,
                            Rng& rng, std::span<const double> costs) {
    if (scores.empty()) throw std::invalid_argument("thompson_select needs at least one arm");
    if (sigmas.size() != scores.size()) throw std::invalid_argument("one sigma per arm required");
    if (!costs.empty() && costs.size() != scores.size())
        throw std::invalid_argument("one cost per arm required");
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < scores.size(); ++j) {
        const double z = rng.normal();
        const double sampled = scores[j] + nu * sigmas[j] * z;
        const bool better =
            sampled > best_value ||
            (j > 0 && sampled == best_value && !costs.empty() && costs[j] < costs[best]);
        if (j == 0 || better) {
            best = j;
            best_value = sampled;
        }
    }
    return best;
}

void update_uncertainty(std::span<double> uncertainty, std::span<const double> gradient) {
    if (gradient.size() != uncertainty.size())
        throw std::invalid_argument("gradient and uncertainty lengths differ");
    for (std::size_t l = 0; l < gradient.size(); ++l) uncertainty[l] += gradient[l] * gradient[l];
}

std::vector<double> softmax(std::span<const double> scores) {
    std::vector<double> p(scores.begin(), scores.end());
    if (p.empty()) return p;
    const double m = *std::max_element(p.begin(), p.end());
    double total = 0.0;
    for (double& v : p) {
        v = std::exp(v - m);
        total += v;
    }
    for (double& v : p) v /= total;
    return p;
}

std::vector<double> log_policy_gradient(const SubPolicyState& state, std::span<const double> x,
                                        std::size_t arm) {
    if (arm >= state.num_arms()) throw std::out_of_range("arm index out of range");
    const auto act = state.network.forward(x);
    std::vector<double> dscores = softmax(act.scores);
    for (double& v : dscores) v = -v;
    dscores[arm] += 1.0;
    std::vector<double> grad(state.network.params().size(), 0.0);
    state.network.backpropagate(x, act, dscores, grad);
    return grad;
}

Selection select_configuration(std::span<SubPolicyState> sites, std::span<const double> x, double nu,
                               Rng& rng, bool warm_start) {
    Selection sel;
    sel.config.choices.reserve(sites.size());
    sel.arms.reserve(sites.size());
    for (auto& site : sites) {
        const auto act = site.network.forward(x);
        const std::size_t n = site.num_arms();
        sel.arm_evaluations += n;

        GradientMatrix g;
        g.rows = n;
        g.cols = site.network.params().size();
        g.data.assign(g.rows * g.cols, 0.0);
        std::vector<double> onehot(n, 0.0);
        std::vector<double> sigmas(n);
        for (std::size_t j = 0; j < n; ++j) {
            onehot[j] = 1.0;
            site.network.backpropagate(x, act, onehot, {g.data.data() + j * g.cols, g.cols});
            onehot[j] = 0.0;
            sigmas[j] = uncertainty_sigma(g.row(j), site.uncertainty);
        }

        std::size_t chosen = thompson_select(act.scores, sigmas, nu, rng, site.arm_costs);
        if (warm_start && site.selections < n) chosen = site.selections;
        update_uncertainty(site.uncertainty, g.row(chosen));
        ++site.selections;

        sel.arms.push_back(chosen);
        sel.config.choices.push_back(site.arms[chosen]);
    }
    return sel;
}

std::vector<double> sub_rewards(const ExecutionTrace& trace, double loss_value, double lambda,
                                std::size_t num_sites) {
    if (trace.per_site_cost.size() != num_sites)
        throw std::invalid_argument("trace covers " + std::to_string(trace.per_site_cost.size()) +
                                    " sites, expected " + std::to_string(num_sites));
    std::vector<double> r(num_sites);
    const double share = loss_value / static_cast<double>(num_sites);
    for (std::size_t i = 0; i < num_sites; ++i) r[i] = 0.0 - lambda * trace.per_site_cost[i] - share;
    return r;
}

void reinforce_update(SubPolicyState& state, std::span<const SubRewardSample> batch, double eta,
                      bool use_baseline) {
    if (batch.empty()) return;
    const double b = use_baseline ? state.baseline() : 0.0;
    std::vector<double> total(state.network.params().size(), 0.0);
    bool any = false;
    for (const auto& s : batch) {
        const double advantage = s.reward - b;
        if (advantage == 0.0) continue;
        any = true;
        const auto act = state.network.forward(s.features);
        std::vector<double> dscores = softmax(act.scores);
        for (double& v : dscores) v = -v * advantage;
        dscores[s.arm] += advantage;
        state.network.backpropagate(s.features, act, dscores, total);
    }
    if (!any) return;
    auto params = state.network.params();
    for (std::size_t l = 0; l < params.size(); ++l) params[l] += eta * total[l];
}

// ---------------------------------------------------------------------------
// StructuredPolicy

StructuredPolicy::StructuredPolicy(const ProgramIR& ir, const BackendRegistry& registry,
                                   std::size_t feature_dim, PolicyHyperparams hp, std::uint64_t seed,
                                   std::string name)
    : name_(std::move(name)), hp_(hp), rng_(mix_keys(seed, stable_hash("policy"))) {
    for (const auto& site : ir.call_sites) {
        std::vector<std::string> arms;
        std::vector<double> costs;
        for (const auto* b : registry.backends_for(site.function)) {
            arms.push_back(b->id);
            costs.push_back(b->cost);
        }
        if (arms.empty())
            throw std::invalid_argument("no backend registered for '" + site.function + "'");
        Rng init(mix_keys(seed, stable_hash("init"), site.index));
        sites_.push_back(SubPolicyState::create(std::move(arms), std::move(costs), feature_dim, hp_, init));
    }
}

ConfigurationVector StructuredPolicy::decide(const ProgramInput& input, std::uint64_t) {
    Selection sel = select_configuration(sites_, input.features, hp_.nu, rng_, hp_.warm_start);
    arm_evaluations_ += sel.arm_evaluations;
    pending_arms_ = std::move(sel.arms);
    pending_config_ = sel.config;
    return sel.config;
}

void StructuredPolicy::observe(const Feedback& fb) {
    if (pending_arms_.empty() || fb.config != pending_config_) return;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        auto& site = sites_[i];
        site.replay.push({fb.input.features, pending_arms_[i], fb.sub_rewards[i], fb.t});
        site.reward_sum += fb.sub_rewards[i];
        ++site.reward_count;
    }
    pending_arms_.clear();
    ++episodes_;
    if (episodes_ % hp_.train_interval != 0) return;
    const double eta = hp_.eta0 / std::sqrt(static_cast<double>(std::max<std::uint64_t>(fb.t, 1)));
    for (auto& site : sites_) {
        const auto batch =
            site.replay.sample(rng_, std::min(hp_.samples_per_update, site.replay.size()));
        reinforce_update(site, batch, eta, hp_.baseline);
    }
}

std::vector<std::vector<double>> StructuredPolicy::probabilities(std::span<const double> x) const {
    std::vector<std::vector<double>> out;
    for (const auto& site : sites_) out.push_back(softmax(predict_rewards(site, x)));
    return out;
}

nlohmann::json StructuredPolicy::checkpoint() const {
    nlohmann::json sites = nlohmann::json::object();
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        const auto& s = sites_[i];
        nlohmann::json replay = nlohmann::json::array();
        for (std::size_t k = 0; k < s.replay.size(); ++k) {
            const auto& r = s.replay[k];
            replay.push_back({{"features", r.features}, {"arm", r.arm}, {"reward", r.reward}, {"episode", r.episode}});
        }
        const auto& shape = s.network.shape();
        sites[std::to_string(i)] = {
            {"arms", s.arms},
            {"arm_costs", s.arm_costs},
            {"shape", {{"inputs", shape.inputs}, {"hidden", shape.hidden}, {"outputs", shape.outputs}}},
            {"theta", std::vector<double>(s.network.params().begin(), s.network.params().end())},
            {"U", s.uncertainty},
            {"hyperparams", hp_},
            {"episode_count", episodes_},
            {"selections", s.selections},
            {"baseline", {{"sum", s.reward_sum}, {"count", s.reward_count}}},
            {"replay", replay},
        };
    }
    return {{"format", "fmprog-policy-v1"}, {"name", name_}, {"episode_count", episodes_},
            {"arm_evaluations", arm_evaluations_}, {"sites", sites}};
}

void StructuredPolicy::restore(const nlohmann::json& ckpt) {
    if (ckpt.value("format", "") != "fmprog-policy-v1")
        throw std::invalid_argument("not a policy checkpoint");
    const auto& sites = ckpt.at("sites");
    if (sites.size() != sites_.size())
        throw std::invalid_argument("checkpoint has " + std::to_string(sites.size()) +
                                    " sites, policy has " + std::to_string(sites_.size()));
    std::vector<SubPolicyState> restored;
    PolicyHyperparams hp = hp_;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        const auto& js = sites.at(std::to_string(i));
        hp = js.at("hyperparams").get<PolicyHyperparams>();
        SubPolicyState s;
        const auto& sh = js.at("shape");
        NetworkShape shape{sh.at("inputs").get<std::size_t>(), sh.at("hidden").get<std::size_t>(),
                           sh.at("outputs").get<std::size_t>()};
        s.network = ScoreNetwork(shape, js.at("theta").get<std::vector<double>>());
        s.uncertainty = js.at("U").get<std::vector<double>>();
        if (s.uncertainty.size() != s.network.params().size())
            throw std::invalid_argument("checkpoint U and theta lengths differ at site " + std::to_string(i));
        s.arms = js.at("arms").get<std::vector<std::string>>();
        if (s.arms != sites_[i].arms)
            throw std::invalid_argument("checkpoint arms do not match site " + std::to_string(i));
        s.arm_costs = js.at("arm_costs").get<std::vector<double>>();
        s.selections = js.at("selections").get<std::size_t>();
        s.reward_sum = js.at("baseline").at("sum").get<double>();
        s.reward_count = js.at("baseline").at("count").get<std::size_t>();
        s.replay = ReplayBuffer<SubRewardSample>(hp.replay_capacity);
        for (const auto& r : js.at("replay"))
            s.replay.push({r.at("features").get<std::vector<double>>(), r.at("arm").get<std::size_t>(),
                           r.at("reward").get<double>(), r.at("episode").get<std::uint64_t>()});
        restored.push_back(std::move(s));
    }
    sites_ = std::move(restored);
    hp_ = hp;
    episodes_ = ckpt.at("episode_count").get<std::uint64_t>();
    arm_evaluations_ = ckpt.value("arm_evaluations", std::uint64_t{0});
    pending_arms_.clear();
}

}  // namespace fmp
