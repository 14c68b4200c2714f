#include "fmprog/report.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace fmp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : "nan";
}

std::string q_name(double q) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "pareto-random-q%.2f", q);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

}  // namespace

std::string lambda_dirname(double lambda) { return "lambda-" + num(lambda); }

fs::path default_output_root() {
    if (const char* env = std::getenv("FMPROG_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

std::vector<RunTask> plan_run(const RunConfig& config, const fs::path& out_root) {
    std::vector<RunTask> tasks;
    for (std::uint64_t seed : config.seeds)
        for (double lambda : config.lambdas) {
            const fs::path cell = out_root / ("seed-" + std::to_string(seed)) / lambda_dirname(lambda);
            auto add = [&](std::string policy, std::optional<double> q = std::nullopt) {
                tasks.push_back({seed, lambda, policy, q, cell / policy});
            };
            add("structured");
            for (const auto& b : config.baselines) {
                if (b == "pareto-random") {
                    for (double q : config.pareto_random_q) add(q_name(q), q);
                } else {
                    add(b);
                }
            }
        }
    return tasks;
}

void execute_task(const RunConfig& config, const RunTask& task) {
    const EnvironmentSpec spec = environment_for(config, task.seed, task.lambda);
    std::unique_ptr<StreamEnvironment> env;
    std::unique_ptr<Policy> policy;
    StructuredPolicy* learner = nullptr;

    if (task.policy == "structured") {
        env = std::make_unique<SyntheticEnvironment>(spec);
        auto p = std::make_unique<StructuredPolicy>(env->program(), env->registry(), env->feature_dim(),
                                                    config.policy, task.seed);
        learner = p.get();
        policy = std::move(p);
    } else if (task.policy == "cheapest" || task.policy == "most-expensive") {
        env = std::make_unique<SyntheticEnvironment>(spec);
        auto v = task.policy == "cheapest" ? cheapest_config(env->program(), env->registry())
                                           : most_expensive_config(env->program(), env->registry());
        policy = static_policy(*env, v, task.policy);
    } else if (task.policy == "routing") {
        env = std::make_unique<RoutingEnvironment>(spec);
        auto p = routing_policy(*env, config.policy, task.seed);
        learner = p.get();
        policy = std::move(p);
    } else if (task.q) {
        // Interpolates between the cheapest and the most expensive monolithic arm when routing
        // arms exist, else between the cheapest and most expensive program configurations.
        if (spec.routing)
            env = std::make_unique<RoutingEnvironment>(spec);
        else
            env = std::make_unique<SyntheticEnvironment>(spec);
        auto low = static_policy(*env, cheapest_config(env->program(), env->registry()), "low");
        auto high = static_policy(*env, most_expensive_config(env->program(), env->registry()), "high");
        policy = std::make_unique<ParetoRandomPolicy>(std::move(low), std::move(high), *task.q, task.seed);
    } else {
        throw std::invalid_argument("unknown policy '" + task.policy + "'");
    }

    fs::create_directories(task.dir);
    std::ofstream episodes(task.dir / "episodes.jsonl", std::ios::binary | std::ios::trunc);
    if (!episodes) throw std::runtime_error("cannot write '" + (task.dir / "episodes.jsonl").string() + "'");

    RunOptions options;
    options.track_regret = config.track_regret;
    options.on_episode = [&](const EpisodeRecord& r) { episodes << episode_json(r).dump() << '\n'; };
    const RunResult result = run_stream(*env, *policy, config.horizon, options);
    episodes.close();

    json summary = {{"policy", task.policy},
                    {"environment", spec.name},
                    {"seed", task.seed},
                    {"lambda", task.lambda},
                    {"horizon", config.horizon},
                    {"episodes", result.metrics.episodes},
                    {"accuracy", result.metrics.accuracy},
                    {"mean_cost", result.metrics.mean_cost},
                    {"mean_reward", result.metrics.mean_reward},
                    {"precision", optional_json(result.metrics.precision)},
                    {"recall", optional_json(result.metrics.recall)},
                    {"f1", optional_json(result.metrics.f1)}};
    if (result.regret && result.best_static) {
        const double t = static_cast<double>(result.metrics.episodes);
        summary["regret"] = {{"gamma", result.regret->gamma},
                             {"gamma_over_t", result.regret->gamma / t},
                             {"approximate", result.regret->approximate},
                             {"universe_size", result.universe.size()},
                             {"best_static", result.universe[*result.best_static].choices},
                             {"best_static_mean_reward", result.counterfactual_totals[*result.best_static] / t}};
        std::ostringstream csv;
        csv << "t,gamma,gamma_over_t\n";
        for (std::size_t i = 0; i < result.regret->average.size(); ++i) {
            const double g = result.regret->average[i] * static_cast<double>(i + 1);
            csv << i + 1 << ',' << num(g) << ',' << num(result.regret->average[i]) << '\n';
        }
        write_file(task.dir / "regret.csv", csv.str());
    } else {
        summary["regret"] = nullptr;
    }
    write_file(task.dir / "summary.json", summary.dump(2) + "\n");
    if (learner) write_file(task.dir / "checkpoint.json", learner->checkpoint().dump() + "\n");
}

fs::path run_config(const RunConfig& config, const fs::path& out_root, unsigned jobs, std::ostream* log) {
    const fs::path root = config.output.empty() ? out_root : fs::path(config.output);
    const std::vector<RunTask> tasks = plan_run(config, root);
    fs::create_directories(root);

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::vector<std::string> failures;
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            try {
                execute_task(config, tasks[i]);
                std::lock_guard lock(mu);
                if (log) *log << "done " << tasks[i].dir.string() << '\n';
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                failures.push_back(tasks[i].dir.string() + ": " + e.what());
            }
        }
    };
    jobs = std::max(1u, jobs);
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end());
        std::string msg = std::to_string(failures.size()) + " run(s) failed:";
        for (const auto& f : failures) msg += "\n  " + f;
        throw std::runtime_error(msg);
    }
    write_report({root}, root, false);
    return root;
}

// ---------------------------------------------------------------------------
// Reports

Report collect_report(const std::vector<fs::path>& dirs) {
    if (dirs.empty()) throw std::runtime_error("no run directories given");
    Report report;
    std::vector<fs::path> candidates;
    for (const auto& d : dirs) {
        if (!fs::is_directory(d)) {
            report.problems.push_back(d.string() + ": not a directory");
            continue;
        }
        auto consider = [&](const fs::path& dir) {
            if (fs::exists(dir / "summary.json") || fs::exists(dir / "episodes.jsonl")) candidates.push_back(dir);
        };
        consider(d);
        for (const auto& entry : fs::recursive_directory_iterator(d))
            if (entry.is_directory()) consider(entry.path());
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    for (const auto& dir : candidates) {
        const fs::path path = dir / "summary.json";
        if (!fs::exists(path)) {
            report.problems.push_back(path.string() + ": missing");
            continue;
        }
        try {
            std::ifstream in(path);
            const json s = json::parse(in);
            ReportRow row;
            row.policy = s.at("policy").get<std::string>();
            row.lambda = s.at("lambda").get<double>();
            row.seed = std::to_string(s.at("seed").get<std::uint64_t>());
            row.mean_cost = s.at("mean_cost").get<double>();
            row.accuracy = s.at("accuracy").get<double>();
            if (s.contains("f1") && !s.at("f1").is_null()) row.f1 = s.at("f1").get<double>();
            row.mean_reward = s.at("mean_reward").get<double>();
            report.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            report.problems.push_back(path.string() + ": corrupt (" + e.what() + ")");
        }
    }
    if (report.rows.empty()) {
        std::string msg = "no usable summary.json found";
        for (const auto& p : report.problems) msg += "\n  " + p;
        throw std::runtime_error(msg);
    }

    auto raw_less = [](const ReportRow& a, const ReportRow& b) {
        if (a.policy != b.policy) return a.policy < b.policy;
        if (a.lambda != b.lambda) return a.lambda < b.lambda;
        if (a.seed.size() != b.seed.size()) return a.seed.size() < b.seed.size();
        return a.seed < b.seed;
    };
    std::sort(report.rows.begin(), report.rows.end(), raw_less);

    std::map<std::pair<std::string, double>, std::vector<const ReportRow*>> groups;
    for (const auto& r : report.rows) groups[{r.policy, r.lambda}].push_back(&r);
    std::vector<ReportRow> aggregates;
    for (const auto& [key, members] : groups) {
        ReportRow a;
        a.policy = key.first;
        a.lambda = key.second;
        a.seed = "mean";
        a.runs = members.size();
        double f1_sum = 0.0;
        std::size_t f1_count = 0;
        for (const auto* m : members) {
            a.mean_cost += m->mean_cost;
            a.accuracy += m->accuracy;
            a.mean_reward += m->mean_reward;
            if (m->f1) f1_sum += *m->f1, ++f1_count;
        }
        const double n = static_cast<double>(members.size());
        a.mean_cost /= n;
        a.accuracy /= n;
        a.mean_reward /= n;
        if (f1_count == members.size()) a.f1 = f1_sum / n;
        aggregates.push_back(std::move(a));
    }

    std::vector<ParetoPoint> points;
    for (const auto& a : aggregates) points.push_back({a.mean_cost, a.accuracy});
    const auto front = pareto_front(points);
    for (auto& a : aggregates)
        for (const auto& p : front)
            if (p.cost == a.mean_cost && p.performance == a.accuracy) a.on_front = true;
    report.rows.insert(report.rows.end(), aggregates.begin(), aggregates.end());
    return report;
}

std::string pareto_csv(const Report& report) {
    std::ostringstream out;
    out << "policy,lambda,seed,runs,mean_cost,accuracy,f1,mean_reward,on_front\n";
    for (const auto& r : report.rows)
        out << r.policy << ',' << num(r.lambda) << ',' << r.seed << ',' << r.runs << ',' << num(r.mean_cost) << ','
            << num(r.accuracy) << ',' << (r.f1 ? num(*r.f1) : "") << ',' << num(r.mean_reward) << ','
            << (r.on_front ? 1 : 0) << '\n';
    return out.str();
}

std::string pareto_svg(const Report& report) {
    constexpr double W = 640, H = 480, M = 60;
    double cmax = 0.0, amin = 1.0, amax = 0.0;
    for (const auto& r : report.rows) {
        cmax = std::max(cmax, r.mean_cost);
        amin = std::min(amin, r.accuracy);
        amax = std::max(amax, r.accuracy);
    }
    if (cmax <= 0.0) cmax = 1.0;
    if (amax - amin < 1e-9) amin = amax - 0.1;
    auto sx = [&](double c) { return M + (W - 2 * M) * c / cmax; };
    auto sy = [&](double a) { return H - M - (H - 2 * M) * (a - amin) / (amax - amin); };
    char buf[256];
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                  M, H - M, W - M, H - M, M, H - M, M, M);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">normalized cost (0 to %.3g)</text>\n"
                  "<text x=\"15\" y=\"%g\" transform=\"rotate(-90 15 %g)\" text-anchor=\"middle\">accuracy "
                  "(%.3g to %.3g)</text>\n",
                  W / 2, H - 20, cmax, H / 2, H / 2, amin, amax);
    out << buf;
    std::vector<const ReportRow*> front;
    for (const auto& r : report.rows) {
        const bool agg = r.seed == "mean";
        if (agg && r.on_front) front.push_back(&r);
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%d\" fill=\"%s\"><title>%s lambda=%s seed=%s</title></circle>\n",
                      sx(r.mean_cost), sy(r.accuracy), agg ? 5 : 2, agg ? (r.on_front ? "crimson" : "steelblue") : "silver",
                      r.policy.c_str(), num(r.lambda).c_str(), r.seed.c_str());
        out << buf;
    }
    std::sort(front.begin(), front.end(), [](auto* a, auto* b) { return a->mean_cost < b->mean_cost; });
    if (front.size() > 1) {
        out << "<polyline fill=\"none\" stroke=\"crimson\" points=\"";
        for (const auto* r : front) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(r->mean_cost), sy(r->accuracy));
            out << buf;
        }
        out << "\"/>\n";
    }
    out << "</svg>\n";
    return out.str();
}

Report write_report(const std::vector<fs::path>& dirs, const fs::path& out_dir, bool svg) {
    Report report = collect_report(dirs);
    fs::create_directories(out_dir);
    write_file(out_dir / "pareto.csv", pareto_csv(report));
    if (svg) write_file(out_dir / "pareto.svg", pareto_svg(report));
    return report;
}

}  // namespace fmp
