#include "doctest.h"

#include <cmath>

#include "fmprog/environments.hpp"
#include "fmprog/policy.hpp"

using namespace fmp;

namespace {

// Relative error with a floor, so entries near zero are compared absolutely.
double rel_error(double a, double b) { return std::abs(a - b) / std::max({1e-2, std::abs(a), std::abs(b)}); }

SubPolicyState random_state(Rng& rng, std::size_t d, std::size_t h, std::size_t n) {
    PolicyHyperparams hp;
    hp.hidden = h;
    std::vector<std::string> arms;
    for (std::size_t j = 0; j < n; ++j) arms.push_back("arm" + std::to_string(j));
    SubPolicyState s = SubPolicyState::create(arms, std::vector<double>(n, 1.0), d, hp, rng);
    for (double& p : s.network.params()) p = 2.0 * rng.uniform() - 1.0;
    return s;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    return x;
}

// Forward pass written from the parameter layout alone: W1 (h x d), b1, W2 (n x h), b2.
std::vector<double> oracle_scores(std::span<const double> p, std::size_t d, std::size_t h, std::size_t n,
                                  std::span<const double> x) {
    std::vector<double> hidden(h);
    for (std::size_t k = 0; k < h; ++k) {
        double z = p[h * d + k];
        for (std::size_t i = 0; i < d; ++i) z += p[k * d + i] * x[i];
        hidden[k] = std::tanh(z);
    }
    std::vector<double> out(n);
    const std::size_t w2 = h * d + h, b2 = w2 + n * h;
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = p[b2 + j];
        for (std::size_t k = 0; k < h; ++k) out[j] += p[w2 + j * h + k] * hidden[k];
    }
    return out;
}

double log_softmax_at(std::span<const double> scores, std::size_t j) {
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    double z = 0.0;
    for (double s : scores) z += std::exp(s - m);
    return scores[j] - m - std::log(z);
}

}  // namespace

TEST_CASE("network shape and initialization") {
    Rng rng(1);
    const ScoreNetwork net = ScoreNetwork::initialized({16, 32, 3}, rng);
    CHECK(net.params().size() == 16 * 32 + 32 + 3 * 32 + 3);
    const auto p = net.params();
    for (std::size_t i = 0; i < 16 * 32; ++i) CHECK(std::abs(p[i]) <= 0.25);
    for (std::size_t i = 16 * 32; i < 16 * 32 + 32; ++i) CHECK(p[i] == 0.0);
    for (std::size_t i = 16 * 32 + 32; i < 16 * 32 + 32 + 96; ++i) CHECK(std::abs(p[i]) <= 1.0 / std::sqrt(32.0));
    for (std::size_t i = p.size() - 3; i < p.size(); ++i) CHECK(p[i] == 0.0);

    Rng rng2(1);
    SubPolicyState s = SubPolicyState::create({"a", "b", "c"}, {1, 2, 3}, 16, PolicyHyperparams{}, rng2);
    CHECK(s.uncertainty.size() == s.network.params().size());
    for (double u : s.uncertainty) CHECK(u == 1.0);
}

TEST_CASE("predicted rewards") {
    SUBCASE("zero weights") {
        SubPolicyState s;
        s.network = ScoreNetwork({4, 8, 2}, std::vector<double>(NetworkShape{4, 8, 2}.parameter_count(), 0.0));
        CHECK(predict_rewards(s, std::vector<double>{1, -2, 3, 4}) == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("linear identity") {
        SubPolicyState s;
        s.network = ScoreNetwork({2, 0, 2}, {1, 0, 0, 1, 0, 0});
        CHECK(predict_rewards(s, std::vector<double>{2, 3}) == std::vector<double>{2.0, 3.0});
    }
    SUBCASE("matches an independent forward pass") {
        Rng rng(3);
        for (int draw = 0; draw < 50; ++draw) {
            const SubPolicyState s = random_state(rng, 6, 5, 3);
            const auto x = random_vector(rng, 6);
            const auto got = predict_rewards(s, x);
            const auto want = oracle_scores(s.network.params(), 6, 5, 3, x);
            for (std::size_t j = 0; j < 3; ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("linear gradients") {
    SubPolicyState s;
    s.network = ScoreNetwork({3, 0, 2}, {0.1, 0.2, 0.3, -0.4, 0.5, 0.6, 0.0, 0.0});
    const std::vector<double> x{2, -1, 5};
    const GradientMatrix g = per_arm_gradients(s, x);
    const std::vector<double> row0(g.row(0).begin(), g.row(0).end());
    const std::vector<double> row1(g.row(1).begin(), g.row(1).end());
    CHECK(row0 == std::vector<double>{2, -1, 5, 0, 0, 0, 1, 0});
    CHECK(row1 == std::vector<double>{0, 0, 0, 2, -1, 5, 0, 1});
}

TEST_CASE("zero input gives zero input-weight gradients") {
    Rng rng(5);
    SubPolicyState s = random_state(rng, 4, 6, 2);
    const std::size_t b1 = 4 * 6;
    for (std::size_t k = 0; k < 6; ++k) s.network.params()[b1 + k] = 0.0;
    const GradientMatrix g = per_arm_gradients(s, std::vector<double>(4, 0.0));
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t l = 0; l < b1; ++l) CHECK(g(j, l) == 0.0);
}

TEST_CASE("gradients match central differences") {
    Rng rng(17);
    const double h = 1e-5;
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        const std::size_t d = 2 + rng.below(5), hid = draw % 4 == 0 ? 0 : 1 + rng.below(6), n = 2 + rng.below(3);
        SubPolicyState s = random_state(rng, d, hid, n);
        const auto x = random_vector(rng, d);
        const GradientMatrix g = per_arm_gradients(s, x);
        const std::size_t arm = rng.below(n);
        const auto lg = log_policy_gradient(s, x, arm);
        auto params = s.network.params();
        for (std::size_t l = 0; l < params.size(); ++l) {
            const double keep = params[l];
            params[l] = keep + h;
            const auto up = predict_rewards(s, x);
            params[l] = keep - h;
            const auto down = predict_rewards(s, x);
            params[l] = keep;
            for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, rel_error(g(j, l), (up[j] - down[j]) / (2 * h)));
            const double fd_log = (log_softmax_at(up, arm) - log_softmax_at(down, arm)) / (2 * h);
            worst = std::max(worst, rel_error(lg[l], fd_log));
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("sigma") {
    CHECK(uncertainty_sigma(std::vector<double>{2, 0}, std::vector<double>{4, 1}) == 1.0);
    CHECK(uncertainty_sigma(std::vector<double>{0, 0, 0}, std::vector<double>{1, 2, 3}) == 0.0);
    const std::vector<double> g{1.5, -0.5, 2.0};
    double prev = INFINITY;
    for (double u : {1.0, 10.0, 1e3, 1e6, 1e12}) {
        const double s = uncertainty_sigma(g, std::vector<double>(3, u));
        CHECK(s < prev);
        prev = s;
    }
    CHECK(prev < 1e-5);
    CHECK_THROWS(uncertainty_sigma(g, std::vector<double>{1, 0, 1}));
}

TEST_CASE("thompson selection") {
    Rng rng(2);
    const std::vector<double> zero{0, 0};
    for (int i = 0; i < 100; ++i) CHECK(thompson_select(std::vector<double>{0.3, 0.5}, zero, 0.0, rng) == 1);
    CHECK(thompson_select(std::vector<double>{0.4, 0.4}, zero, 0.0, rng, std::vector<double>{0.2, 0.1}) == 1);
    CHECK(thompson_select(std::vector<double>{0.4, 0.4}, zero, 0.0, rng, std::vector<double>{0.1, 0.2}) == 0);
    CHECK(thompson_select(std::vector<double>{0.4, 0.4}, zero, 0.0, rng, std::vector<double>{0.1, 0.1}) == 0);

    int first = 0;
    for (int i = 0; i < 10000; ++i) first += thompson_select(zero, std::vector<double>{1, 1}, 1.0, rng) == 0;
    CHECK(std::abs(first / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("adding a constant to every score changes nothing") {
    Rng scores_rng(8);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> s = random_vector(scores_rng, 4), sig(4), shifted(4);
        for (std::size_t j = 0; j < 4; ++j) {
            sig[j] = scores_rng.uniform();
            shifted[j] = s[j] + 0.375;
        }
        Rng a(i), b(i);
        CHECK(thompson_select(s, sig, 1.0, a) == thompson_select(shifted, sig, 1.0, b));
        const auto p = softmax(s), q = softmax(shifted);
        double total = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(std::abs(p[j] - q[j]) <= 1e-12);
            total += p[j];
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("uncertainty update") {
    std::vector<double> u{1, 1};
    update_uncertainty(u, std::vector<double>{0.5, 2});
    CHECK(u == std::vector<double>{1.25, 5});
    update_uncertainty(u, std::vector<double>{0, 0});
    CHECK(u == std::vector<double>{1.25, 5});
    std::vector<double> lin{1, 1};
    for (int k = 1; k <= 10; ++k) {
        update_uncertainty(lin, std::vector<double>{1, 3});
        CHECK(lin == std::vector<double>{1.0 + k, 1.0 + 9.0 * k});
    }
}

TEST_CASE("structured selection") {
    Rng rng(4);
    PolicyHyperparams hp;
    std::vector<SubPolicyState> sites;
    for (int i = 0; i < 3; ++i) sites.push_back(SubPolicyState::create({"a" + std::to_string(i), "b" + std::to_string(i)}, {0.1, 1.0}, 16, hp, rng));
    const auto x = random_vector(rng, 16);
    const Selection sel = select_configuration(sites, x, 0.0, rng);
    REQUIRE(sel.config.size() == 3);
    CHECK(sel.arm_evaluations == 6);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto r = predict_rewards(sites[i], x);
        const std::size_t greedy = r[1] > r[0] ? 1 : 0;
        CHECK(sel.arms[i] == greedy);
        CHECK(sel.config.choices[i] == sites[i].arms[greedy]);
    }
}

TEST_CASE("sub-rewards") {
    ExecutionTrace t;
    t.per_site_cost = {0.02, 0.02};
    t.incurred_cost = 0.04;
    const auto r = sub_rewards(t, 1.0, 0.5, 2);
    CHECK(r[0] == doctest::Approx(-0.51));
    CHECK(r[1] == doctest::Approx(-0.51));
    CHECK(r[0] + r[1] == doctest::Approx(-1.02));

    t.per_site_cost = {0.01, 0.0, 0.01};
    CHECK(sub_rewards(t, 1.0, 0.5, 3)[1] == doctest::Approx(-1.0 / 3.0));

    t.per_site_cost = {0.0, 0.0};
    for (double v : sub_rewards(t, 0.0, 0.7, 2)) CHECK(v == 0.0);
}

TEST_CASE("REINFORCE steps") {
    SUBCASE("closed-form softmax gradient") {
        SubPolicyState s;
        s.network = ScoreNetwork({2, 0, 2}, {0, 0, 0, 0, 0, 0});
        const std::vector<double> x{1.0, 2.0};
        const auto lg = log_policy_gradient(s, x, 0);
        CHECK(lg == std::vector<double>{0.5, 1.0, -0.5, -1.0, 0.5, -0.5});
        const SubRewardSample sample{x, 0, 1.0, 1};
        reinforce_update(s, std::span(&sample, 1), 0.1, false);
        const auto p = s.network.params();
        CHECK(p[0] == doctest::Approx(0.05));
        CHECK(p[1] == doctest::Approx(0.1));
        CHECK(p[2] == doctest::Approx(-0.05));
    }
    SUBCASE("zero reward and empty batch are no-ops") {
        Rng rng(6);
        SubPolicyState s = random_state(rng, 3, 4, 2);
        const std::vector<double> before(s.network.params().begin(), s.network.params().end());
        std::vector<SubRewardSample> batch;
        for (int i = 0; i < 8; ++i) batch.push_back({random_vector(rng, 3), rng.below(2), 0.0, 1});
        reinforce_update(s, batch, 0.5, false);
        reinforce_update(s, {}, 0.5, false);
        CHECK(std::vector<double>(s.network.params().begin(), s.network.params().end()) == before);
    }
    SUBCASE("two-arm bandit with fixed rewards converges") {
        Rng rng(7);
        PolicyHyperparams hp;
        hp.hidden = 0;
        SubPolicyState s = SubPolicyState::create({"good", "bad"}, {1, 1}, 1, hp, rng);
        const std::vector<double> x{1.0};
        for (int t = 1; t <= 2000; ++t) {
            const auto p = softmax(predict_rewards(s, x));
            const std::size_t arm = rng.uniform() < p[0] ? 0 : 1;
            const SubRewardSample sample{x, arm, arm == 0 ? 1.0 : 0.0, static_cast<std::uint64_t>(t)};
            reinforce_update(s, std::span(&sample, 1), 0.5 / std::sqrt(t), false);
        }
        CHECK(softmax(predict_rewards(s, x))[0] > 0.95);
    }
}

TEST_CASE("replay buffer keeps the newest items") {
    ReplayBuffer<int> buf(3);
    for (int i = 1; i <= 5; ++i) buf.push(i);
    CHECK(buf.size() == 3);
    CHECK(buf[0] == 3);
    CHECK(buf[2] == 5);
    Rng rng(1);
    CHECK(buf.sample(rng, 10).size() == 10);
}

TEST_CASE("hyperparameter JSON is strict") {
    PolicyHyperparams hp;
    hp.nu = 0.25;
    hp.baseline = true;
    const nlohmann::json j = hp;
    CHECK(j.get<PolicyHyperparams>() == hp);
    CHECK_THROWS(nlohmann::json({{"nu", 1.0}, {"etaa", 0.1}}).get<PolicyHyperparams>());
    CHECK_THROWS(nlohmann::json({{"eta0", 0.0}}).get<PolicyHyperparams>());
}

TEST_CASE("checkpoint restore reproduces later decisions exactly") {
    SyntheticEnvironment env(canonical_environment(3));
    PolicyHyperparams hp;
    StructuredPolicy a(env.program(), env.registry(), env.feature_dim(), hp, 3);
    for (std::uint64_t t = 1; t <= 300; ++t) run_episode(env, a, t);

    const nlohmann::json saved = nlohmann::json::parse(a.checkpoint().dump());
    StructuredPolicy b(env.program(), env.registry(), env.feature_dim(), hp, 99);
    b.restore(saved);
    CHECK(b.checkpoint() == saved);
    a.reseed(42);
    b.reseed(42);

    SyntheticEnvironment env_b(canonical_environment(3));
    for (std::uint64_t t = 301; t <= 600; ++t) {
        const auto ra = run_episode(env, a, t);
        const auto rb = run_episode(env_b, b, t);
        REQUIRE(ra.config == rb.config);
    }
    CHECK(a.checkpoint() == b.checkpoint());
}
