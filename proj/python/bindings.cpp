#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fmprog/config.hpp"
#include "fmprog/environments.hpp"
#include "fmprog/report.hpp"

namespace py = pybind11;
using namespace fmp;

namespace {

py::dict parse(const std::string& source) {
    const auto registry = FunctionRegistry::standard();
    ProgramIR ir;
    try {
        ir = parse_program(source, registry);
    } catch (const ParseError& e) {
        throw py::value_error(e.what());
    }
    py::list sites;
    for (const auto& s : ir.call_sites) sites.append(s.function);
    py::list diags;
    for (const auto& d : validate_program(ir, registry)) diags.append(to_string(d.pos) + ": " + d.message);
    py::dict out;
    out["name"] = ir.name;
    out["num_sites"] = ir.num_sites();
    out["call_sites"] = sites;
    out["diagnostics"] = diags;
    out["source"] = to_source(ir);
    return out;
}

std::vector<double> py_sub_rewards(const std::vector<double>& per_site_cost, double loss_value, double lambda) {
    ExecutionTrace trace;
    trace.per_site_cost = per_site_cost;
    for (double c : per_site_cost) trace.incurred_cost += c;
    return sub_rewards(trace, loss_value, lambda, per_site_cost.size());
}

std::vector<std::pair<double, double>> py_pareto_front(const std::vector<std::pair<double, double>>& points) {
    std::vector<ParetoPoint> in;
    for (const auto& [c, p] : points) in.push_back({c, p});
    std::vector<std::pair<double, double>> out;
    for (const auto& p : pareto_front(in)) out.emplace_back(p.cost, p.performance);
    return out;
}

py::dict run_canonical(std::uint64_t seed, double lambda, std::uint64_t horizon, const std::string& policy) {
    SyntheticEnvironment env(canonical_environment(seed, lambda));
    std::unique_ptr<Policy> p;
    if (policy == "structured")
        p = std::make_unique<StructuredPolicy>(env.program(), env.registry(), env.feature_dim(), PolicyHyperparams{},
                                               seed);
    else if (policy == "cheapest")
        p = static_policy(env, cheapest_config(env.program(), env.registry()), policy);
    else if (policy == "most-expensive")
        p = static_policy(env, most_expensive_config(env.program(), env.registry()), policy);
    else
        throw py::value_error("unknown policy '" + policy + "'");
    const RunResult r = run_stream(env, *p, horizon, {false, {}});
    py::dict out;
    out["episodes"] = r.metrics.episodes;
    out["accuracy"] = r.metrics.accuracy;
    out["mean_cost"] = r.metrics.mean_cost;
    out["mean_reward"] = r.metrics.mean_reward;
    py::list rewards;
    for (const auto& e : r.episodes) rewards.append(e.reward);
    out["rewards"] = rewards;
    return out;
}

std::string normalize(const std::string& document, const std::string& base_dir) {
    try {
        return normalize_config(nlohmann::json::parse(document), base_dir).dump();
    } catch (const std::exception& e) {
        throw py::value_error(e.what());
    }
}

std::string run(const std::string& config_path, const std::string& output, unsigned jobs) {
    RunConfig config = load_config(config_path);
    if (!output.empty()) config.output = output;
    py::gil_scoped_release release;
    return run_config(config, default_output_root(), jobs).string();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Structured cost-aware backend selection for foundation-model programs";
    m.def("parse", &parse, py::arg("source"));
    m.def("reward", &compute_reward, py::arg("loss"), py::arg("cost"), py::arg("lam"));
    m.def("sub_rewards", &py_sub_rewards, py::arg("per_site_cost"), py::arg("loss"), py::arg("lam"));
    m.def("pareto_front", &py_pareto_front, py::arg("points"));
    m.def("softmax", [](const std::vector<double>& s) { return softmax(s); });
    m.def("uncertainty_sigma", [](const std::vector<double>& g, const std::vector<double>& u) {
        return uncertainty_sigma(g, u);
    });
    m.def("run_canonical", &run_canonical, py::arg("seed") = 0, py::arg("lam") = 0.3, py::arg("horizon") = 1000,
          py::arg("policy") = "structured");
    m.def("normalize_config", &normalize, py::arg("document"), py::arg("base_dir") = ".");
    m.def("run_config", &run, py::arg("config_path"), py::arg("output") = "", py::arg("jobs") = 1);
    m.attr("canonical_program") = kCanonicalProgram;
}
