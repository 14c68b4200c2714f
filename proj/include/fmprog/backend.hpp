#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "fmprog/program_ir.hpp"
#include "fmprog/value.hpp"

namespace fmp {

/// Simulated model: accuracy(d) = sigmoid(logit(base_accuracy) - difficulty_slope * d).
struct SyntheticBehavior {
    double base_accuracy = 1.0;
    double difficulty_slope = 0.0;

    double accuracy(double difficulty) const;
};

/// A model served over HTTP (POST <path> with a JSON body).
struct RemoteEndpoint {
    std::string host = "127.0.0.1";
    int port = 0;
    std::string path = "/invoke";
    int timeout_ms = 5000;
};

using BackendBehavior = std::variant<SyntheticBehavior, RemoteEndpoint>;

struct BackendSpec {
    std::string id;
    std::string function;
    double cost = 0.0;  // fixed per invocation, independent of the input
    BackendBehavior behavior = SyntheticBehavior{};

    bool is_remote() const { return std::holds_alternative<RemoteEndpoint>(behavior); }
};

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingTruthError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Backends grouped by the generic function they implement. Registration order is
/// the arm order seen by the per-site subpolicies.
class BackendRegistry {
public:
    explicit BackendRegistry(FunctionRegistry functions = FunctionRegistry::standard());

    /// Throws std::invalid_argument on duplicate id, unknown function or negative cost.
    const std::string& register_backend(BackendSpec spec);

    const BackendSpec* find(std::string_view id) const;
    const BackendSpec& at(std::string_view id) const;

    /// M_k for a function, in registration order.
    std::vector<const BackendSpec*> backends_for(std::string_view function) const;
    std::size_t count_for(std::string_view function) const;

    std::span<const BackendSpec> backends() const { return backends_; }
    const FunctionRegistry& functions() const { return functions_; }

    double max_cost() const;

private:
    FunctionRegistry functions_;
    std::vector<BackendSpec> backends_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Rescales costs so the most expensive backend costs exactly 1.
/// Throws std::invalid_argument when every cost is zero.
BackendRegistry normalized_cost(const BackendRegistry& registry);

/// Correct output of one call site plus the typed wrong answer used for text corruption.
struct SiteTruth {
    Value value;
    std::string wrong_answer;
};

/// Everything the simulated backends need to know about one input.
struct LatentTruth {
    std::vector<SiteTruth> sites;
    double difficulty = 0.0;
};

/// Whether backends at one call site err independently or share one uniform draw
/// (so a more accurate backend is right whenever a less accurate one is).
enum class NoiseCorrelation { kIndependent, kSharedPerSite };

/// Common-random-number key; the backend id completes it.
struct NoiseKey {
    std::uint64_t seed = 0;
    std::uint64_t episode = 0;
    std::size_t site = 0;
};

/// Uniform in [0, 1) that is a pure function of (key, backend, stream).
double crn_uniform(const NoiseKey& key, std::string_view backend_id, std::uint64_t stream);

/// Typed wrong answer: booleans flip, text becomes the designated wrong answer,
/// numbers move by +-1 (sign from `noise`), detections flip presence.
Value corrupt(const Value& truth, const std::string& wrong_answer, std::uint64_t noise);

/// Returns the site's true value with probability accuracy(difficulty), else its
/// corruption. The outcome depends only on (key, backend id, correlation).
Value invoke_synthetic(const BackendSpec& backend, const CallSite& site, const LatentTruth& truth,
                       const NoiseKey& key,
                       NoiseCorrelation correlation = NoiseCorrelation::kIndependent);

}  // namespace fmp
