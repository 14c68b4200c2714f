#include "fmprog/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fmp {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    return j.contains(key) ? get<T>(j, key, where) : fallback;
}

std::string correlation_name(NoiseCorrelation c) {
    return c == NoiseCorrelation::kSharedPerSite ? "shared-per-site" : "independent";
}

NoiseCorrelation correlation_from(const std::string& s) {
    if (s == "independent") return NoiseCorrelation::kIndependent;
    if (s == "shared-per-site") return NoiseCorrelation::kSharedPerSite;
    throw ConfigError("environment.correlation: expected 'independent' or 'shared-per-site', got '" + s + "'");
}

BackendSpec parse_backend(const json& j, const std::string& where) {
    check_keys(j, {"id", "function", "cost", "accuracy", "difficulty_slope", "remote"}, where);
    BackendSpec b;
    b.id = get<std::string>(j, "id", where);
    b.function = get_or<std::string>(j, "function", "", where);
    b.cost = get<double>(j, "cost", where);
    if (j.contains("remote")) {
        if (j.contains("accuracy") || j.contains("difficulty_slope"))
            throw ConfigError(where + ": remote backends take no accuracy settings");
        const json& r = j.at("remote");
        const std::string rw = where + ".remote";
        check_keys(r, {"host", "port", "path", "timeout_ms"}, rw);
        RemoteEndpoint e;
        e.host = get_or<std::string>(r, "host", e.host, rw);
        e.port = get<int>(r, "port", rw);
        e.path = get_or<std::string>(r, "path", e.path, rw);
        e.timeout_ms = get_or<int>(r, "timeout_ms", e.timeout_ms, rw);
        if (e.port <= 0 || e.port > 65535) throw ConfigError(rw + ".port out of range");
        if (e.timeout_ms <= 0) throw ConfigError(rw + ".timeout_ms must be > 0");
        b.behavior = e;
    } else {
        SyntheticBehavior s;
        s.base_accuracy = get<double>(j, "accuracy", where);
        s.difficulty_slope = get_or<double>(j, "difficulty_slope", 0.0, where);
        b.behavior = s;
    }
    return b;
}

json backend_json(const BackendSpec& b) {
    json j = {{"id", b.id}, {"function", b.function}, {"cost", b.cost}};
    if (const auto* e = std::get_if<RemoteEndpoint>(&b.behavior)) {
        j["remote"] = {{"host", e->host}, {"port", e->port}, {"path", e->path}, {"timeout_ms", e->timeout_ms}};
    } else {
        const auto& s = std::get<SyntheticBehavior>(b.behavior);
        j["accuracy"] = s.base_accuracy;
        j["difficulty_slope"] = s.difficulty_slope;
    }
    return j;
}

std::vector<WeightedValue> parse_outcomes(const json& j, ValueKind kind, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty array");
    std::vector<WeightedValue> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string w = where + "[" + std::to_string(i) + "]";
        check_keys(j[i], {"value", "weight", "wrong_answer"}, w);
        WeightedValue v;
        if (!j[i].contains("value")) throw ConfigError(w + ": missing 'value'");
        try {
            v.value = value_from_json(j[i].at("value"), kind);
        } catch (const std::exception& e) {
            throw ConfigError(w + ".value: " + e.what());
        }
        v.weight = get_or<double>(j[i], "weight", 1.0, w);
        v.wrong_answer = get_or<std::string>(j[i], "wrong_answer", "", w);
        out.push_back(std::move(v));
    }
    return out;
}

json outcomes_json(const std::vector<WeightedValue>& values) {
    json out = json::array();
    for (const auto& v : values) out.push_back({{"value", v.value}, {"weight", v.weight}, {"wrong_answer", v.wrong_answer}});
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

RunConfig parse_config(const json& d, const std::filesystem::path& base_dir) {
    check_keys(d,
               {"program", "functions", "backends", "routing", "environment", "policy", "baselines",
                "pareto_random_q", "lambdas", "horizon", "seeds", "output", "track_regret"},
               "config");
    RunConfig c;
    EnvironmentSpec& env = c.environment;

    c.program = get<std::string>(d, "program", "config");
    std::filesystem::path program_path(c.program);
    if (program_path.is_relative()) program_path = base_dir / program_path;
    env.program_source = read_file(program_path);

    if (d.contains("functions")) {
        const json& fs = d.at("functions");
        if (!fs.is_array()) throw ConfigError("functions: expected an array");
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const std::string w = "functions[" + std::to_string(i) + "]";
            check_keys(fs[i], {"name", "arity", "returns"}, w);
            GenericFunction f{get<std::string>(fs[i], "name", w), get<std::size_t>(fs[i], "arity", w),
                              ValueKind::kText};
            try {
                f.return_kind = value_kind_from_string(get<std::string>(fs[i], "returns", w));
                env.functions.add(f);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(w + ": " + e.what());
            }
            c.extra_functions.push_back(f);
        }
    }

    ProgramIR ir;
    try {
        ir = parse_program(env.program_source, env.functions);
    } catch (const ParseError& e) {
        throw ConfigError(program_path.string() + ":" + e.what());
    }
    if (auto diags = validate_program(ir, env.functions); !diags.empty())
        throw ConfigError(program_path.string() + ":" + to_string(diags.front().pos) + ": " + diags.front().message);
    env.name = ir.name;

    if (!d.contains("backends") || !d.at("backends").is_array())
        throw ConfigError("config: 'backends' must be an array");
    for (std::size_t i = 0; i < d.at("backends").size(); ++i) {
        const std::string w = "backends[" + std::to_string(i) + "]";
        BackendSpec b = parse_backend(d.at("backends")[i], w);
        if (b.function.empty()) throw ConfigError(w + ": missing 'function'");
        env.backends.push_back(std::move(b));
    }

    if (d.contains("routing")) {
        const json& r = d.at("routing");
        check_keys(r, {"function", "backends", "answer_space"}, "routing");
        RoutingSpec routing;
        routing.function = get_or<std::string>(r, "function", routing.function, "routing");
        for (std::size_t i = 0; i < r.value("backends", json::array()).size(); ++i) {
            BackendSpec b = parse_backend(r.at("backends")[i], "routing.backends[" + std::to_string(i) + "]");
            if (!b.function.empty() && b.function != routing.function)
                throw ConfigError("routing.backends: function must be '" + routing.function + "'");
            b.function = routing.function;
            routing.backends.push_back(std::move(b));
        }
        routing.answer_space = get_or<std::vector<std::string>>(r, "answer_space", {}, "routing");
        env.routing = routing;
    }

    const json e = d.value("environment", json::object());
    check_keys(e,
               {"feature_dim", "positive_rate", "feature_signal", "difficulty_max", "difficulty_feature",
                "correlation", "positive_label", "sites"},
               "environment");
    auto& g = env.generator;
    g.feature_dim = get_or<std::size_t>(e, "feature_dim", g.feature_dim, "environment");
    g.positive_rate = get_or<double>(e, "positive_rate", g.positive_rate, "environment");
    g.feature_signal = get_or<double>(e, "feature_signal", g.feature_signal, "environment");
    g.difficulty_max = get_or<double>(e, "difficulty_max", g.difficulty_max, "environment");
    if (e.contains("difficulty_feature") && !e.at("difficulty_feature").is_null())
        g.difficulty_feature = get<std::size_t>(e, "difficulty_feature", "environment");
    env.correlation = correlation_from(get_or<std::string>(e, "correlation", "independent", "environment"));
    const ValueKind out_kind = ir.return_kind.value_or(ValueKind::kText);
    if (e.contains("positive_label") && !e.at("positive_label").is_null()) {
        try {
            env.positive_label = value_from_json(e.at("positive_label"), out_kind);
        } catch (const std::exception& ex) {
            throw ConfigError(std::string("environment.positive_label: ") + ex.what());
        }
    }
    const json sites = e.value("sites", json::array());
    if (!sites.is_array() || sites.size() != ir.num_sites())
        throw ConfigError("environment.sites: expected one entry per call site (" + std::to_string(ir.num_sites()) +
                          ")");
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const std::string w = "environment.sites[" + std::to_string(i) + "]";
        check_keys(sites[i], {"positive", "negative", "feature_index"}, w);
        const ValueKind kind = env.functions.at(ir.call_sites[i].function).return_kind;
        SiteGenerator s;
        s.positive = parse_outcomes(sites[i].value("positive", json()), kind, w + ".positive");
        s.negative = parse_outcomes(sites[i].value("negative", json()), kind, w + ".negative");
        if (sites[i].contains("feature_index") && !sites[i].at("feature_index").is_null())
            s.feature_index = get<std::size_t>(sites[i], "feature_index", w);
        g.sites.push_back(std::move(s));
    }

    if (d.contains("policy")) {
        try {
            c.policy = d.at("policy").get<PolicyHyperparams>();
        } catch (const std::exception& ex) {
            throw ConfigError(std::string("policy: ") + ex.what());
        }
    }

    c.baselines = get_or(d, "baselines", c.baselines, "config");
    std::set<std::string> seen;
    for (const auto& b : c.baselines) {
        bool known = false;
        for (const auto& k : known_baselines()) known = known || k == b;
        if (!known) throw ConfigError("baselines: unknown baseline '" + b + "'");
        if (!seen.insert(b).second) throw ConfigError("baselines: '" + b + "' listed twice");
        if (b == "routing" && !env.routing) throw ConfigError("baselines: 'routing' needs a routing section");
    }
    c.pareto_random_q = get_or(d, "pareto_random_q", c.pareto_random_q, "config");
    for (double q : c.pareto_random_q)
        if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("pareto_random_q: values must lie in [0,1]");
    c.lambdas = get_or(d, "lambdas", c.lambdas, "config");
    if (c.lambdas.empty()) throw ConfigError("lambdas: must not be empty");
    for (double l : c.lambdas)
        if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("lambdas: values must be finite and > 0");
    c.horizon = get_or(d, "horizon", c.horizon, "config");
    c.seeds = get_or(d, "seeds", c.seeds, "config");
    if (c.seeds.empty()) throw ConfigError("seeds: must not be empty");
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
        throw ConfigError("seeds: duplicates are not allowed");
    c.output = get_or<std::string>(d, "output", "", "config");
    c.track_regret = get_or(d, "track_regret", true, "config");

    // Build one environment now so registry/generator problems surface before any episode runs.
    try {
        SyntheticEnvironment probe(environment_for(c, c.seeds.front(), c.lambdas.front()));
        if (env.routing) RoutingEnvironment routing_probe(environment_for(c, c.seeds.front(), c.lambdas.front()));
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    json d;
    try {
        d = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(d, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

json serialize_config(const RunConfig& c) {
    const EnvironmentSpec& env = c.environment;
    json d;
    d["program"] = c.program;
    json fs = json::array();
    for (const auto& f : c.extra_functions)
        fs.push_back({{"name", f.name}, {"arity", f.arity}, {"returns", std::string(to_string(f.return_kind))}});
    d["functions"] = fs;
    d["backends"] = json::array();
    for (const auto& b : env.backends) d["backends"].push_back(backend_json(b));
    if (env.routing) {
        json r = {{"function", env.routing->function}, {"answer_space", env.routing->answer_space}};
        r["backends"] = json::array();
        for (const auto& b : env.routing->backends) r["backends"].push_back(backend_json(b));
        d["routing"] = r;
    }
    const auto& g = env.generator;
    json e = {{"feature_dim", g.feature_dim},
              {"positive_rate", g.positive_rate},
              {"feature_signal", g.feature_signal},
              {"difficulty_max", g.difficulty_max},
              {"difficulty_feature", g.difficulty_feature ? json(*g.difficulty_feature) : json()},
              {"correlation", correlation_name(env.correlation)},
              {"positive_label", env.positive_label ? json(*env.positive_label) : json()}};
    e["sites"] = json::array();
    for (const auto& s : g.sites)
        e["sites"].push_back({{"positive", outcomes_json(s.positive)},
                              {"negative", outcomes_json(s.negative)},
                              {"feature_index", s.feature_index ? json(*s.feature_index) : json()}});
    d["environment"] = e;
    d["policy"] = c.policy;
    d["baselines"] = c.baselines;
    d["pareto_random_q"] = c.pareto_random_q;
    d["lambdas"] = c.lambdas;
    d["horizon"] = c.horizon;
    d["seeds"] = c.seeds;
    d["output"] = c.output;
    d["track_regret"] = c.track_regret;
    return d;
}

json normalize_config(const json& document, const std::filesystem::path& base_dir) {
    return serialize_config(parse_config(document, base_dir));
}

EnvironmentSpec environment_for(const RunConfig& config, std::uint64_t seed, double lambda) {
    EnvironmentSpec spec = config.environment;
    spec.seed = seed;
    spec.lambda = lambda;
    spec.horizon = config.horizon;
    return spec;
}

}  // namespace fmp
