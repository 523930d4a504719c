#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <tuple>

#include "cocoafuse/error.hpp"
#include "cocoafuse/selection.hpp"

using namespace cocoafuse;

namespace {

Trial trial(std::string id, double metric, double se, int experts, int params) {
    return {std::move(id), metric, se, experts, params};
}

std::vector<Trial> random_trials(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> m(-100.0, -80.0), se(0.5, 5.0);
    std::uniform_int_distribution<int> e(1, 4), p(1, 6);
    std::vector<Trial> out;
    for (int i = 0; i < n; ++i) {
        const int experts = e(rng);
        out.push_back(trial("t" + std::to_string(i), m(rng), se(rng), experts, experts * p(rng)));
    }
    return out;
}

auto complexity(const Trial& t) { return std::tie(t.n_experts, t.n_params, t.id); }

}  // namespace

TEST_CASE("improvement bound") {
    const Trial inc = trial("a", 0.0, 1.0, 1, 3);
    CHECK(improvement_lower_bound(trial("b", 1.0, 0.0, 2, 6), inc) == doctest::Approx(0.5));
    CHECK(improvement_lower_bound(trial("b", -1.0, 1.0, 2, 6), inc) == 0.0);
    CHECK(improvement_lower_bound(trial("b", 0.0, 1.0, 2, 6), inc) == 0.0);
    CHECK(improvement_lower_bound(trial("b", 3.0, 0.0, 2, 6), inc) == doctest::Approx(0.9));
    const Trial exact = trial("c", 0.0, 0.0, 1, 3);
    CHECK(improvement_lower_bound(trial("b", 1.0, 0.0, 2, 6), exact) == 1.0 - 1e-12);

    double last = 0.0;
    for (double mu = 0.1; mu < 5.0; mu += 0.1) {
        const double b = improvement_lower_bound(trial("b", mu, 0.7, 2, 6), inc);
        CHECK(b > last);
        last = b;
    }
    last = 1.0;
    for (double s = 0.1; s < 5.0; s += 0.1) {
        const double b = improvement_lower_bound(trial("b", 1.0, s, 2, 6), inc);
        CHECK(b < last);
        last = b;
    }
}

TEST_CASE("pareto front") {
    const std::vector<Trial> one = {trial("x", -3.0, 1.0, 1, 2)};
    CHECK(pareto_front(one).size() == 1);
    const std::vector<Trial> two = {trial("x", -3.0, 1.0, 2, 4), trial("y", -2.0, 1.0, 1, 2)};
    const auto f2 = pareto_front(two);
    REQUIRE(f2.size() == 1);
    CHECK(f2[0].id == "y");

    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 200; ++rep) {
        const auto trials = random_trials(rng, 5);
        const auto front = pareto_front(trials);
        std::vector<std::string> expected;
        for (const auto& t : trials) {
            bool dominated = false;
            for (const auto& o : trials) {
                const bool ge = o.metric >= t.metric && o.n_experts <= t.n_experts && o.n_params <= t.n_params;
                const bool gt = o.metric > t.metric || o.n_experts < t.n_experts || o.n_params < t.n_params;
                dominated = dominated || (ge && gt);
            }
            if (!dominated) expected.push_back(t.id);
        }
        std::vector<std::string> got;
        for (const auto& t : front) got.push_back(t.id);
        std::sort(expected.begin(), expected.end());
        std::sort(got.begin(), got.end());
        CHECK(got == expected);
        CHECK(std::is_sorted(front.begin(), front.end(),
                             [](const Trial& a, const Trial& b) { return complexity(a) < complexity(b); }));
    }
    CHECK_THROWS_AS(pareto_front({}), Error);
    CHECK_THROWS_AS(pareto_front({trial("bad", 0.0, -1.0, 1, 1)}), Error);
}

TEST_CASE("selection walk") {
    SUBCASE("identical metrics keep the simplest") {
        const std::vector<Trial> t = {trial("c", -5.0, 1.0, 3, 9), trial("a", -5.0, 1.0, 1, 3), trial("b", -5.0, 1.0, 1, 4)};
        CHECK(select(t).selected.id == "a");
    }
    SUBCASE("ten sigma improvement is taken") {
        const std::vector<Trial> t = {trial("simple", 0.0, 1.0 / std::sqrt(2.0), 1, 3),
                                      trial("complex", 10.0, 1.0 / std::sqrt(2.0), 3, 9)};
        const auto r = select(t, 0.5);
        CHECK(r.selected.id == "complex");
        CHECK(r.visits[1].bound == doctest::Approx(100.0 / 101.0));
    }
    SUBCASE("half sigma improvement is not") {
        const std::vector<Trial> t = {trial("simple", 0.0, 1.0 / std::sqrt(2.0), 1, 3),
                                      trial("complex", 0.5, 1.0 / std::sqrt(2.0), 3, 9)};
        const auto r = select(t, 0.5);
        CHECK(r.selected.id == "simple");
        CHECK(r.visits[1].bound == doctest::Approx(0.2));
        CHECK_FALSE(r.visits[1].accepted);
    }
    SUBCASE("input order does not matter and the winner is on the front") {
        std::mt19937_64 rng(2);
        for (int rep = 0; rep < 100; ++rep) {
            auto trials = random_trials(rng, 8);
            const auto base = select(trials);
            std::shuffle(trials.begin(), trials.end(), rng);
            const auto again = select(trials);
            CHECK(again.selected.id == base.selected.id);
            const auto& front = base.front;
            CHECK(std::any_of(front.begin(), front.end(), [&](const Trial& t) { return t.id == base.selected.id; }));
        }
    }
    SUBCASE("raising tau on a two step front never picks the more complex trial") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.01, 0.99);
        int checked = 0;
        for (int rep = 0; rep < 500; ++rep) {
            auto trials = random_trials(rng, 2);
            if (pareto_front(trials).size() != 2) continue;
            double lo = u(rng), hi = u(rng);
            if (lo > hi) std::swap(lo, hi);
            CHECK(complexity(select(trials, hi).selected) <= complexity(select(trials, lo).selected));
            ++checked;
        }
        CHECK(checked > 50);
    }
    SUBCASE("longer fronts can reward a stricter tau with a more complex pick") {
        const std::vector<Trial> t = {trial("a", 0.0, 0.0, 1, 3), trial("b", 1.0, 1.0, 2, 6), trial("c", 2.0, 0.5, 3, 9)};
        CHECK(select(t, 0.45).selected.id == "b");
        CHECK(select(t, 0.6).selected.id == "c");
    }
    CHECK_THROWS_AS(select({trial("a", 0.0, 1.0, 1, 1)}, 1.0), Error);
}

TEST_CASE("trial manifests") {
    const auto dir = std::filesystem::temp_directory_path() / "cocoafuse_test_selection";
    std::filesystem::create_directories(dir);
    const auto csv = dir / "trials.csv";
    std::ofstream(csv) << "id,metric,se,n_experts,n_params\nm1,-120.5,3.1,1,3\nm2,-110.25,2.5,2,8\n";
    const auto from_csv = load_trials(csv.string());
    REQUIRE(from_csv.size() == 2);
    CHECK(from_csv[1].id == "m2");
    CHECK(from_csv[1].metric == -110.25);
    CHECK(from_csv[1].n_params == 8);

    const auto js = dir / "trials.json";
    std::ofstream(js) << R"([{"id": "m1", "metric": -120.5, "se": 3.1, "n_experts": 1, "n_params": 3}])";
    const auto from_json = load_trials(js.string());
    REQUIRE(from_json.size() == 1);
    CHECK(from_json[0].metric_se == 3.1);

    const auto r = select(from_csv);
    const auto doc = to_json(r);
    CHECK(doc["visits"].size() == r.visits.size());
    CHECK(doc["selected"]["id"] == r.selected.id);

    std::ofstream(dir / "bad.json") << "[{\"id\": 1}]";
    CHECK_THROWS_AS(load_trials((dir / "bad.json").string()), Error);
    CHECK_THROWS_AS(load_trials((dir / "missing.csv").string()), Error);
}
