#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fmprog/config.hpp"

namespace fmp {

/// One output directory of a run: seed-<s>/lambda-<l>/<policy>.
struct RunTask {
    std::uint64_t seed = 0;
    double lambda = 0.0;
    std::string policy;           // structured, cheapest, most-expensive, routing, pareto-random-q0.50
    std::optional<double> q;      // pareto-random only
    std::filesystem::path dir;
};

std::string lambda_dirname(double lambda);

/// Every (seed, lambda, policy) cell, in a fixed order.
std::vector<RunTask> plan_run(const RunConfig& config, const std::filesystem::path& out_root);

/// Runs one cell and writes episodes.jsonl, summary.json, regret.csv (and checkpoint.json for learners).
void execute_task(const RunConfig& config, const RunTask& task);

/// Runs the whole grid on `jobs` worker threads, then writes pareto.csv at the root.
/// Returns the output root.
std::filesystem::path run_config(const RunConfig& config, const std::filesystem::path& out_root,
                                 unsigned jobs, std::ostream* log = nullptr);

struct ReportRow {
    std::string policy;
    double lambda = 0.0;
    std::string seed;  // "mean" for aggregate rows
    double mean_cost = 0.0;
    double accuracy = 0.0;
    std::optional<double> f1;
    double mean_reward = 0.0;
    std::size_t runs = 1;
    bool on_front = false;
};

struct Report {
    std::vector<ReportRow> rows;        // raw rows, then aggregate rows
    std::vector<std::string> problems;  // unreadable summaries, with reasons
};

/// Collects every summary.json beneath the given directories.
/// Throws std::runtime_error when no usable summary is found.
Report collect_report(const std::vector<std::filesystem::path>& dirs);

std::string pareto_csv(const Report& report);
std::string pareto_svg(const Report& report);

/// Writes pareto.csv (and pareto.svg) into `out_dir`.
Report write_report(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out_dir,
                    bool svg);

/// Default output root: $FMPROG_OUTPUT_ROOT, else "runs".
std::filesystem::path default_output_root();

}  // namespace fmp
