#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmprog/backend.hpp"
#include "fmprog/program_ir.hpp"

namespace fmp {

/// One streamed input as the policy sees it.
struct ProgramInput {
    std::string id;
    std::vector<double> features;
};

/// One backend id per call site.
struct ConfigurationVector {
    std::vector<std::string> choices;

    std::size_t size() const { return choices.size(); }
    friend bool operator==(const ConfigurationVector&, const ConfigurationVector&) = default;
};

/// Throws std::invalid_argument unless `config` has one registered backend per site
/// implementing that site's function.
void check_configuration(const ProgramIR& ir, const BackendRegistry& registry,
                         const ConfigurationVector& config);

struct ExecutionTrace {
    Value output;
    std::vector<std::size_t> invocations;     // dynamic call count per site
    std::vector<double> per_site_cost;        // cost x invocations, 0 when never reached
    double incurred_cost = 0.0;               // sum of per_site_cost
    std::vector<double> remote_latency_ms;    // observed only, not charged
    bool fallback_used = false;               // loop bound exhausted or no return reached
};

class ExecutionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EpisodeKey {
    std::uint64_t seed = 0;
    std::uint64_t episode = 0;
};

/// Runs the program with the configured backends. Only executed calls are charged.
ExecutionTrace execute(const ProgramIR& ir, const BackendRegistry& registry,
                       const ConfigurationVector& config, const ProgramInput& input,
                       const LatentTruth& truth, EpisodeKey key,
                       NoiseCorrelation correlation = NoiseCorrelation::kIndependent);

/// The program's output when every call returns its latent true value.
Value ground_truth_output(const ProgramIR& ir, const ProgramInput& input, const LatentTruth& truth);

/// Exact-match 0/1 loss. A kind mismatch counts as a miss and sets *kind_mismatch.
double loss(const Value& output, const Value& expected, bool* kind_mismatch = nullptr);

}  // namespace fmp
