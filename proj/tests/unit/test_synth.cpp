#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cocoafuse/density.hpp"
#include "cocoafuse/error.hpp"
#include "cocoafuse/synth.hpp"

using namespace cocoafuse;

namespace {

struct Moments {
    double mean = 0.0;
    double se = 0.0;
};

template <class Draw>
Moments mc(Draw draw, int n) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = draw();
        s += v;
        s2 += v * v;
    }
    const double m = s / n;
    return {m, std::sqrt((s2 / n - m * m) / n)};
}

int kde_modes(const std::vector<double>& v, double bandwidth) {
    auto logpdf = [&](double y) {
        double s = 0.0;
        for (double x : v) s += std::exp(-0.5 * (y - x) * (y - x) / (bandwidth * bandwidth));
        return std::log(s);
    };
    return count_modes(logpdf, GridSpec{-6.0, 6.0, 241});
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

}  // namespace

TEST_CASE("conditional mean oracle") {
    const SwitchConfig cfg;
    CHECK(conditional_mean_oracle(0.0, cfg) == doctest::Approx(0.0).scale(1.0));
    CHECK(conditional_mean_oracle(50.0, cfg) == doctest::Approx(3.0));
    CHECK(conditional_mean_oracle(-50.0, cfg) == doctest::Approx(-3.0));
    const double p = 1.0 / (1.0 + std::exp(-2.0));
    CHECK(conditional_mean_oracle(1.0, cfg) == doctest::Approx(p * 3.0 - (1.0 - p) * 3.0));
}

TEST_CASE("switch draws") {
    const SwitchConfig cfg;
    std::mt19937_64 rng(1);
    const int n = 40000;
    const Moments at0 = mc([&] { return sample_switch_y(0.0, cfg, rng); }, n);
    CHECK(std::abs(at0.mean) < 3.0 * at0.se);
    const Moments at1 = mc([&] { return sample_switch_y(1.0, cfg, rng); }, n);
    CHECK(std::abs(at1.mean - conditional_mean_oracle(1.0, cfg)) < 3.0 * at1.se);
    // p(6) > 0.99999
    REQUIRE(switch_probability(6.0, cfg) > 0.99999);
    const Moments far = mc([&] { return sample_switch_y(6.0, cfg, rng); }, n);
    CHECK(std::abs(far.mean - conditional_mean_oracle(6.0, cfg)) < 3.0 * far.se);
    CHECK(std::abs(far.mean - 3.0) < 3.0 * far.se);
}

TEST_CASE("beta draws") {
    std::mt19937_64 rng(2);
    for (auto [a, b] : {std::pair{2.0, 3.0}, std::pair{0.05, 0.2}, std::pair{1e-3, 1e-3}, std::pair{40.0, 7.0}}) {
        const Moments m = mc([&] { return sample_beta(a, b, rng); }, 40000);
        INFO(a, " ", b);
        CHECK(std::abs(m.mean - a / (a + b)) < 3.0 * m.se + 1e-12);
    }
    for (int i = 0; i < 1000; ++i) {
        const double v = sample_beta(1e-3, 2e-3, rng);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("transition draws") {
    std::mt19937_64 rng(3);
    for (double k : {0.1, 5.0, 100.0}) {
        TransitionConfig cfg;
        cfg.k = k;
        for (double x : {-2.0, -0.7, 0.0, 0.4, 1.5}) {
            const double p = switch_probability(x, cfg);
            const Moments a = mc([&] { return sample_beta(k * p, k * (1.0 - p), rng); }, 20000);
            CHECK(std::abs(a.mean - p) < 3.0 * a.se);
            const Moments y = mc([&] { return sample_transition_y(x, cfg, rng); }, 20000);
            INFO("k=", k, " x=", x);
            CHECK(std::abs(y.mean - conditional_mean_oracle(x, cfg)) < 3.0 * y.se);
        }
    }

    SUBCASE("small k is bimodal, large k unimodal") {
        TransitionConfig cfg;
        std::vector<double> small, large;
        cfg.k = 0.1;
        for (int i = 0; i < 4000; ++i) small.push_back(sample_transition_y(0.0, cfg, rng));
        cfg.k = 100.0;
        for (int i = 0; i < 4000; ++i) large.push_back(sample_transition_y(0.0, cfg, rng));
        CHECK(kde_modes(small, 0.5) == 2);
        CHECK(kde_modes(large, 0.5) == 1);
    }

    SUBCASE("vanishing k matches the switch") {
        TransitionConfig cfg;
        cfg.k = 1e-3;
        for (double x : {0.0, 0.8}) {
            std::vector<double> a, b;
            for (int i = 0; i < 5000; ++i) {
                a.push_back(sample_transition_y(x, cfg, rng));
                b.push_back(sample_switch_y(x, cfg, rng));
            }
            // 1% critical value, equal sample sizes
            CHECK(ks_statistic(a, b) < 1.628 * std::sqrt(2.0 / 5000.0));
        }
    }
}

TEST_CASE("generators") {
    TransitionConfig cfg;
    cfg.n_train = 120;
    cfg.n_test = 80;
    cfg.seed = 9;
    const SynthData a = gen_transition(cfg);
    const SynthData b = gen_transition(cfg);
    CHECK(a.train.rows() == 120);
    CHECK(a.test.rows() == 80);
    CHECK(a.train.column("y") == b.train.column("y"));
    CHECK(a.test.column("x") == b.test.column("x"));
    cfg.seed = 10;
    CHECK(gen_transition(cfg).train.column("y") != a.train.column("y"));
    for (double x : a.train.column("x")) {
        CHECK(x >= -3.0);
        CHECK(x <= 3.0);
    }

    const Dataset d = synth_dataset(a.train);
    CHECK(d.size() == 120);
    CHECK(d.expert_dim() == 1);
    CHECK(d.gate_dim() == 2);
    CHECK(d.gate_names == std::vector<std::string>{"bias", "x"});

    const TransitionConfig back = transition_config_from_json(to_json(cfg));
    CHECK(back.k == cfg.k);
    CHECK(back.seed == cfg.seed);
    CHECK(to_json(static_cast<const SwitchConfig&>(cfg))["generator"] == "switch");
    CHECK_THROWS_AS(transition_config_from_json({{"k", -1.0}}), Error);
    CHECK_THROWS_AS(switch_config_from_json({{"sigma", "wide"}}), Error);
    SwitchConfig bad;
    bad.n_train = 0;
    CHECK_THROWS_AS(gen_switch(bad), Error);
}
