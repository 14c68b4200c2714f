#include "fmprog/environments.hpp"

namespace fmp {

const char* const kCanonicalProgram =
    "program cat_on_laptop(image) default \"no\":\n"
    "  cats = find(image, \"cat\")\n"
    "  laptops = find(image, \"laptop\")\n"
    "  if len(cats) > 0 and len(laptops) > 0:\n"
    "    return vqa(image, \"Is the cat sitting or laying on the laptop keyboard?\")\n"
    "  else:\n"
    "    return \"no\"\n";

const char* const kThreeSiteProgram =
    "program smoke_alarm(image) default \"none\":\n"
    "  people = count(image, \"person\")\n"
    "  smoke = exists(image, \"smoke\")\n"
    "  if smoke and people > 0:\n"
    "    return vqa(image, \"What is burning?\")\n"
    "  return \"none\"\n";

namespace {

BackendSpec synthetic(std::string id, std::string function, double cost, double accuracy) {
    return {std::move(id), std::move(function), cost, SyntheticBehavior{accuracy, 0.0}};
}

SiteGenerator detection_site(std::size_t feature) {
    SiteGenerator s;
    s.positive = {{Value(Detections{1}), 1.0, ""}};
    s.negative = {{Value(Detections{1}), 0.1, ""}, {Value(Detections{0}), 0.9, ""}};
    s.feature_index = feature;
    return s;
}

}  // namespace

EnvironmentSpec canonical_environment(std::uint64_t seed, double lambda) {
    EnvironmentSpec spec;
    spec.name = "canonical";
    spec.program_source = kCanonicalProgram;
    spec.backends = {
        synthetic("det_tiny", "find", 1.0, 0.95),
        synthetic("vlm_find", "find", 100.0, 0.99),
        synthetic("vlm_small", "vqa", 5.0, 0.75),
        synthetic("vlm_large", "vqa", 100.0, 0.99),
    };
    RoutingSpec routing;
    routing.backends = {synthetic("mllm_small", "answer", 5.0, 0.80),
                        synthetic("mllm_large", "answer", 100.0, 0.99)};
    routing.answer_space = {"yes", "no"};
    spec.routing = routing;

    spec.generator.feature_dim = 16;
    spec.generator.positive_rate = 0.01;
    spec.generator.feature_signal = 1.5;
    spec.generator.sites = {detection_site(0), detection_site(1)};
    SiteGenerator answer;
    answer.positive = {{Value("yes"), 1.0, "no"}};
    answer.negative = {{Value("no"), 1.0, "yes"}};
    spec.generator.sites.push_back(answer);

    spec.lambda = lambda;
    spec.horizon = 5000;
    spec.seed = seed;
    spec.positive_label = Value("yes");
    return spec;
}

namespace {

EnvironmentSpec smoke_alarm_base(std::uint64_t seed, double lambda) {
    EnvironmentSpec spec;
    spec.program_source = kThreeSiteProgram;
    spec.generator.feature_dim = 16;
    spec.generator.positive_rate = 0.3;
    spec.generator.feature_signal = 1.0;

    SiteGenerator people;
    people.positive = {{Value(2.0), 1.0, ""}};
    people.negative = {{Value(2.0), 0.5, ""}, {Value(0.0), 0.5, ""}};
    SiteGenerator smoke;
    smoke.positive = {{Value(true), 1.0, ""}};
    smoke.negative = {{Value(false), 1.0, ""}};
    smoke.feature_index = 0;
    SiteGenerator scene;
    scene.positive = {{Value("fire"), 1.0, "steam"}};
    scene.negative = {{Value("steam"), 1.0, "fire"}};
    spec.generator.sites = {people, smoke, scene};

    spec.lambda = lambda;
    spec.horizon = 5000;
    spec.seed = seed;
    spec.positive_label = Value("fire");
    return spec;
}

}  // namespace

EnvironmentSpec three_site_environment(std::uint64_t seed, double lambda) {
    EnvironmentSpec spec = smoke_alarm_base(seed, lambda);
    spec.name = "three-site";
    spec.backends = {
        synthetic("count_small", "count", 5.0, 0.97),  synthetic("count_large", "count", 60.0, 0.99),
        synthetic("exists_small", "exists", 1.0, 0.995), synthetic("exists_large", "exists", 10.0, 0.98),
        synthetic("vqa_small", "vqa", 2.0, 0.90),      synthetic("vqa_large", "vqa", 100.0, 0.99),
    };
    // The small smoke detector degrades quickly with difficulty, which is visible in feature 2.
    std::get<SyntheticBehavior>(spec.backends[2].behavior).difficulty_slope = 12.0;
    spec.generator.difficulty_max = 1.0;
    spec.generator.difficulty_feature = 2;
    return spec;
}

EnvironmentSpec four_arm_environment(std::uint64_t seed, double lambda) {
    EnvironmentSpec spec = smoke_alarm_base(seed, lambda);
    spec.name = "four-arm";
    for (const char* fn : {"count", "exists", "vqa"})
        for (int k = 0; k < 4; ++k)
            spec.backends.push_back(synthetic(std::string(fn) + "_" + std::to_string(k), fn,
                                              10.0 * (k + 1), 0.6 + 0.1 * k));
    return spec;
}

}  // namespace fmp
