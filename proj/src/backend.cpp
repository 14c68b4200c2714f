#include "fmprog/backend.hpp"

#include <algorithm>
#include <cmath>

#include "fmprog/rng.hpp"

namespace fmp {

double SyntheticBehavior::accuracy(double difficulty) const {
    if (base_accuracy >= 1.0) return 1.0;
    if (base_accuracy <= 0.0) return 0.0;
    const double logit = std::log(base_accuracy / (1.0 - base_accuracy));
    return 1.0 / (1.0 + std::exp(-(logit - difficulty_slope * difficulty)));
}

BackendRegistry::BackendRegistry(FunctionRegistry functions) : functions_(std::move(functions)) {}

const std::string& BackendRegistry::register_backend(BackendSpec spec) {
    if (spec.id.empty()) throw std::invalid_argument("backend id must not be empty");
    if (index_.count(spec.id)) throw std::invalid_argument("duplicate backend id '" + spec.id + "'");
    if (!functions_.find(spec.function))
        throw std::invalid_argument("backend '" + spec.id + "' implements unknown function '" +
                                    spec.function + "'");
    if (!(spec.cost >= 0.0) || !std::isfinite(spec.cost))
        throw std::invalid_argument("backend '" + spec.id + "' has invalid cost");
    if (const auto* syn = std::get_if<SyntheticBehavior>(&spec.behavior)) {
        if (!(syn->base_accuracy >= 0.0 && syn->base_accuracy <= 1.0))
            throw std::invalid_argument("backend '" + spec.id + "' base_accuracy outside [0,1]");
        if (!(syn->difficulty_slope >= 0.0))
            throw std::invalid_argument("backend '" + spec.id + "' difficulty_slope must be >= 0");
    }
    index_.emplace(spec.id, backends_.size());
    backends_.push_back(std::move(spec));
    return backends_.back().id;
}

const BackendSpec* BackendRegistry::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &backends_[it->second];
}

const BackendSpec& BackendRegistry::at(std::string_view id) const {
    if (const auto* b = find(id)) return *b;
    throw std::out_of_range("unknown backend '" + std::string(id) + "'");
}

std::vector<const BackendSpec*> BackendRegistry::backends_for(std::string_view function) const {
    std::vector<const BackendSpec*> out;
    for (const auto& b : backends_)
        if (b.function == function) out.push_back(&b);
    return out;
}

std::size_t BackendRegistry::count_for(std::string_view function) const {
    return static_cast<std::size_t>(std::count_if(
        backends_.begin(), backends_.end(), [&](const BackendSpec& b) { return b.function == function; }));
}

double BackendRegistry::max_cost() const {
    double m = 0.0;
    for (const auto& b : backends_) m = std::max(m, b.cost);
    return m;
}

BackendRegistry normalized_cost(const BackendRegistry& registry) {
    const double max = registry.max_cost();
    if (!(max > 0.0)) throw std::invalid_argument("cannot normalise costs: every backend costs 0");
    BackendRegistry out(registry.functions());
    for (BackendSpec b : registry.backends()) {
        b.cost = b.cost == max ? 1.0 : b.cost / max;
        out.register_backend(std::move(b));
    }
    return out;
}

namespace {
constexpr std::uint64_t kCoinStream = 1;
constexpr std::uint64_t kCorruptionStream = 2;
}  // namespace

double crn_uniform(const NoiseKey& key, std::string_view backend_id, std::uint64_t stream) {
    return unit_interval(mix_keys(key.seed, key.episode, key.site, stable_hash(backend_id), stream));
}

Value corrupt(const Value& truth, const std::string& wrong_answer, std::uint64_t noise) {
    struct Visitor {
        const std::string& wrong;
        std::uint64_t noise;
        Value operator()(bool b) const { return !b; }
        Value operator()(double d) const { return (noise & 1) ? d + 1.0 : d - 1.0; }
        Value operator()(const std::string& s) const {
            if (!wrong.empty() && wrong != s) return wrong;
            return s + " (wrong)";
        }
        Value operator()(Detections d) const { return Detections{d.count > 0 ? 0 : 1}; }
        Value operator()(InputRef r) const { return r; }
    };
    return std::visit(Visitor{wrong_answer, noise}, truth.storage());
}

Value invoke_synthetic(const BackendSpec& backend, const CallSite& site, const LatentTruth& truth,
                       const NoiseKey& key, NoiseCorrelation correlation) {
    const auto* behavior = std::get_if<SyntheticBehavior>(&backend.behavior);
    if (!behavior) throw BackendError("backend '" + backend.id + "' is not synthetic");
    if (backend.function != site.function)
        throw BackendError("backend '" + backend.id + "' implements '" + backend.function +
                           "' but site " + std::to_string(site.index) + " calls '" + site.function + "'");
    if (site.index >= truth.sites.size())
        throw MissingTruthError("no latent value for call site " + std::to_string(site.index));

    const SiteTruth& st = truth.sites[site.index];
    const std::string_view coin_owner =
        correlation == NoiseCorrelation::kSharedPerSite ? std::string_view{} : backend.id;
    const double u = crn_uniform(key, coin_owner, kCoinStream);
    if (u < behavior->accuracy(truth.difficulty)) return st.value;
    const std::uint64_t noise =
        mix_keys(key.seed, key.episode, key.site, stable_hash(backend.id), kCorruptionStream);
    return corrupt(st.value, st.wrong_answer, noise);
}

}  // namespace fmp
