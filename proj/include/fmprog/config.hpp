#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmprog/harness.hpp"
#include "json.hpp"

namespace fmp {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a `run` needs. Parsed from one JSON document; unknown keys are errors.
struct RunConfig {
    std::string program;                        // path as written in the document
    std::vector<GenericFunction> extra_functions;
    EnvironmentSpec environment;                // program_source, backends, routing, generator, ...
    PolicyHyperparams policy;
    std::vector<std::string> baselines = {"cheapest", "most-expensive", "routing", "pareto-random"};
    std::vector<double> pareto_random_q = {0.25, 0.5, 0.75};
    std::vector<double> lambdas = {0.01, 0.03, 0.1, 0.3, 1.0, 3.0};
    std::uint64_t horizon = 1000;
    std::vector<std::uint64_t> seeds = {0};
    std::string output;                         // empty: FMPROG_OUTPUT_ROOT, else "runs"
    bool track_regret = true;
};

inline const std::vector<std::string>& known_baselines() {
    static const std::vector<std::string> names = {"cheapest", "most-expensive", "routing", "pareto-random"};
    return names;
}

/// Relative program paths resolve against `base_dir`. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& document, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// Fully explicit form: every default written out.
nlohmann::json serialize_config(const RunConfig& config);

/// serialize(parse(document)): the canonical form of a document.
nlohmann::json normalize_config(const nlohmann::json& document, const std::filesystem::path& base_dir = ".");

/// Environment for one (seed, lambda) cell of the grid.
EnvironmentSpec environment_for(const RunConfig& config, std::uint64_t seed, double lambda);

}  // namespace fmp
