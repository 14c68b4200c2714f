#include "doctest.h"

#include "fmprog/environments.hpp"
#include "fmprog/executor.hpp"

using namespace fmp;

namespace {

BackendRegistry cat_registry(double find_acc = 1.0) {
    BackendRegistry r;
    r.register_backend({"det_small", "find", 0.01, SyntheticBehavior{find_acc, 0.0}});
    r.register_backend({"det_large", "find", 0.4, SyntheticBehavior{1.0, 0.0}});
    r.register_backend({"vlm_small", "vqa", 0.05, SyntheticBehavior{0.75, 0.0}});
    r.register_backend({"vlm_large", "vqa", 1.0, SyntheticBehavior{1.0, 0.0}});
    return r;
}

LatentTruth cat_truth(std::int64_t cats, std::int64_t laptops, const char* answer) {
    return {{SiteTruth{Value(Detections{cats}), ""}, SiteTruth{Value(Detections{laptops}), ""},
             SiteTruth{Value(answer), std::string(answer) == "yes" ? "no" : "yes"}},
            0.0};
}

const ProgramInput kInput{"x1", std::vector<double>(4, 0.0)};

}  // namespace

TEST_CASE("guard false leaves the answer site unexecuted") {
    const ProgramIR ir = parse_program(kCanonicalProgram, FunctionRegistry::standard());
    const auto reg = cat_registry();
    const ExecutionTrace t =
        execute(ir, reg, {{"det_small", "det_small", "vlm_large"}}, kInput, cat_truth(0, 1, "no"), {1, 1});
    CHECK(t.output == Value("no"));
    CHECK(t.per_site_cost == std::vector<double>{0.01, 0.01, 0.0});
    CHECK(t.invocations == std::vector<std::size_t>{1, 1, 0});
    CHECK(t.incurred_cost == 0.02);
}

TEST_CASE("guard true charges every configured site") {
    const ProgramIR ir = parse_program(kCanonicalProgram, FunctionRegistry::standard());
    const ExecutionTrace t = execute(ir, cat_registry(), {{"det_small", "det_small", "vlm_large"}}, kInput,
                                     cat_truth(1, 2, "yes"), {1, 1});
    CHECK(t.output == Value("yes"));
    CHECK(t.incurred_cost == doctest::Approx(1.02).epsilon(1e-15));
}

TEST_CASE("same key and truth give identical traces") {
    const ProgramIR ir = parse_program(kCanonicalProgram, FunctionRegistry::standard());
    const auto reg = cat_registry(0.6);
    for (std::uint64_t e = 1; e < 50; ++e) {
        const ConfigurationVector v{{"det_small", "det_small", "vlm_small"}};
        const auto a = execute(ir, reg, v, kInput, cat_truth(1, 1, "yes"), {5, e});
        const auto b = execute(ir, reg, v, kInput, cat_truth(1, 1, "yes"), {5, e});
        CHECK(a.output == b.output);
        CHECK(a.per_site_cost == b.per_site_cost);
    }
}

TEST_CASE("changing an unexecuted site changes nothing") {
    const ProgramIR ir = parse_program(kCanonicalProgram, FunctionRegistry::standard());
    const auto reg = cat_registry(0.7);
    int skipped = 0;
    for (std::uint64_t e = 1; e <= 300; ++e) {
        const auto truth = cat_truth(e % 2, e % 3 == 0, "yes");
        const auto a = execute(ir, reg, {{"det_small", "det_small", "vlm_small"}}, kInput, truth, {2, e});
        if (a.invocations[2] != 0) continue;
        ++skipped;
        const auto b = execute(ir, reg, {{"det_small", "det_small", "vlm_large"}}, kInput, truth, {2, e});
        CHECK(a.output == b.output);
        CHECK(a.incurred_cost == b.incurred_cost);
    }
    CHECK(skipped > 50);
}

TEST_CASE("ground truth output") {
    const ProgramIR ir = parse_program(kCanonicalProgram, FunctionRegistry::standard());
    CHECK(ground_truth_output(ir, kInput, cat_truth(1, 1, "yes")) == Value("yes"));
    CHECK(ground_truth_output(ir, kInput, cat_truth(0, 1, "yes")) == Value("no"));
    const ProgramIR single = parse_program("program p(x):\n  return vqa(x, \"what?\")", FunctionRegistry::standard());
    CHECK(ground_truth_output(single, kInput, {{SiteTruth{Value("a red kite"), ""}}, 0.0}) == Value("a red kite"));
}

TEST_CASE("zero-one loss") {
    CHECK(loss(Value("yes"), Value("yes")) == 0.0);
    CHECK(loss(Value("yes"), Value("no")) == 1.0);
    CHECK(loss(Value("N/A"), Value("N/A")) == 0.0);
    bool mismatch = false;
    CHECK(loss(Value(1.0), Value("1"), &mismatch) == 1.0);
    CHECK(mismatch);
}

TEST_CASE("loop sites charge per invocation and fall back when exhausted") {
    const char* src =
        "program p(x) default \"gave up\":\n"
        "  n = 0\n"
        "  while n < 10 bound 4:\n"
        "    n = n + count(x, \"sheep\")\n"
        "  if n >= 10:\n"
        "    return \"many\"\n"
        "  return vqa(x, \"few\")\n";
    const auto fns = FunctionRegistry::standard();
    const ProgramIR ir = parse_program(src, fns);
    BackendRegistry reg;
    reg.register_backend({"counter", "count", 0.1, SyntheticBehavior{1.0, 0.0}});
    reg.register_backend({"answer", "vqa", 0.5, SyntheticBehavior{1.0, 0.0}});
    const ConfigurationVector v{{"counter", "answer"}};
    auto truth = [](double per_call) {
        return LatentTruth{{SiteTruth{Value(per_call), ""}, SiteTruth{Value("few"), ""}}, 0.0};
    };

    const auto exhausted = execute(ir, reg, v, kInput, truth(1.0), {1, 1});
    CHECK(exhausted.output == Value("gave up"));
    CHECK(exhausted.fallback_used);
    CHECK(exhausted.invocations[0] == 4);
    CHECK(exhausted.per_site_cost[0] == doctest::Approx(0.4));
    CHECK(exhausted.per_site_cost[1] == 0.0);

    const auto quick = execute(ir, reg, v, kInput, truth(5.0), {1, 1});
    CHECK(quick.output == Value("many"));
    CHECK(quick.invocations[0] == 2);
    CHECK(quick.incurred_cost <= 0.1 * 4 + 0.5);
}

TEST_CASE("falling off the end returns the zero value of the return kind") {
    const char* src =
        "program p(x):\n"
        "  if exists(x, \"a\"):\n"
        "    return vqa(x, \"q\")\n";
    const ProgramIR ir = parse_program(src, FunctionRegistry::standard());
    BackendRegistry reg;
    reg.register_backend({"e", "exists", 0.1, SyntheticBehavior{1.0, 0.0}});
    reg.register_backend({"v", "vqa", 0.1, SyntheticBehavior{1.0, 0.0}});
    const LatentTruth truth{{SiteTruth{Value(false), ""}, SiteTruth{Value("z"), ""}}, 0.0};
    const auto t = execute(ir, reg, {{"e", "v"}}, kInput, truth, {1, 1});
    CHECK(t.output == Value(""));
    CHECK(t.fallback_used);
}

TEST_CASE("invalid configurations are rejected") {
    const ProgramIR ir = parse_program(kCanonicalProgram, FunctionRegistry::standard());
    const auto reg = cat_registry();
    const auto truth = cat_truth(1, 1, "yes");
    CHECK_THROWS_AS(execute(ir, reg, {{"det_small", "det_small"}}, kInput, truth, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(execute(ir, reg, {{"det_small", "vlm_small", "vlm_small"}}, kInput, truth, {1, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(execute(ir, reg, {{"det_small", "det_small", "nope"}}, kInput, truth, {1, 1}),
                    std::invalid_argument);
}
