#include "cocoafuse/synth.hpp"

#include <cmath>

#include "cocoafuse/density.hpp"
#include "cocoafuse/error.hpp"

namespace cocoafuse {

void SwitchConfig::validate() const {
    if (!(sigma > 0.0)) throw config_error("synth: sigma must be positive");
    if (n_train < 1 || n_test < 1) throw config_error("synth: n_train and n_test must be at least 1");
    if (!(x_hi > x_lo)) throw config_error("synth: need x_lo < x_hi");
    if (!std::isfinite(mu1) || !std::isfinite(mu2) || !std::isfinite(tau)) throw config_error("synth: non-finite parameter");
}

void TransitionConfig::validate() const {
    SwitchConfig::validate();
    if (!(k > 0.0)) throw config_error("synth: k must be positive");
}

double switch_probability(double x, const SwitchConfig& cfg) { return logistic(cfg.tau * x); }

double conditional_mean_oracle(double x, const SwitchConfig& cfg) {
    const double p = switch_probability(x, cfg);
    return p * cfg.mu1 + (1.0 - p) * cfg.mu2;
}

double sample_switch_y(double x, const SwitchConfig& cfg, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(switch_probability(x, cfg));
    std::normal_distribution<double> noise(0.0, cfg.sigma);
    const bool z = coin(rng);
    return (z ? cfg.mu1 : cfg.mu2) + noise(rng);
}

namespace {

// log of a Gamma(shape, 1) draw; shapes below one use the boosting identity.
double log_gamma_draw(double shape, std::mt19937_64& rng) {
    if (shape >= 1.0) {
        std::gamma_distribution<double> g(shape, 1.0);
        return std::log(g(rng));
    }
    std::gamma_distribution<double> g(shape + 1.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double lg = std::log(g(rng));
    double u = unif(rng);
    while (u == 0.0) u = unif(rng);
    return lg + std::log(u) / shape;
}

template <class Draw>
SynthData generate(const SwitchConfig& cfg, Draw draw_y) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> xdist(cfg.x_lo, cfg.x_hi);
    SynthData out{Table({"x", "y"}), Table({"x", "y"})};
    for (std::size_t i = 0; i < cfg.n_train + cfg.n_test; ++i) {
        const double x = xdist(rng);
        const double row[2] = {x, draw_y(x, rng)};
        (i < cfg.n_train ? out.train : out.test).append_row(row);
    }
    return out;
}

}  // namespace

double sample_beta(double a, double b, std::mt19937_64& rng) {
    const double la = log_gamma_draw(a, rng);
    const double lb = log_gamma_draw(b, rng);
    return std::exp(la - log_sum_exp(la, lb));
}

double sample_transition_y(double x, const TransitionConfig& cfg, std::mt19937_64& rng) {
    const double p = switch_probability(x, cfg);
    const double alpha = sample_beta(cfg.k * p, cfg.k * (1.0 - p), rng);
    std::normal_distribution<double> noise(0.0, cfg.sigma);
    return cfg.mu1 * alpha + cfg.mu2 * (1.0 - alpha) + noise(rng);
}

SynthData gen_switch(const SwitchConfig& cfg) {
    cfg.validate();
    return generate(cfg, [&](double x, std::mt19937_64& rng) { return sample_switch_y(x, cfg, rng); });
}

SynthData gen_transition(const TransitionConfig& cfg) {
    cfg.validate();
    return generate(cfg, [&](double x, std::mt19937_64& rng) { return sample_transition_y(x, cfg, rng); });
}

Dataset synth_dataset(const Table& table) {
    const auto& x = table.column("x");
    const auto& y = table.column("y");
    const auto n = static_cast<Eigen::Index>(x.size());
    RowMatrix xm(n, 1);
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        xm(i, 0) = x[static_cast<std::size_t>(i)];
        yv(i) = y[static_cast<std::size_t>(i)];
    }
    Dataset d = Dataset::from_matrices(yv, xm, xm, xm);
    d.expert_names = {"x"};
    d.gate_names = {"bias", "x"};
    d.behavior_names = {"bias", "x"};
    return d;
}

nlohmann::json to_json(const SwitchConfig& cfg) {
    return {{"generator", "switch"}, {"mu1", cfg.mu1},         {"mu2", cfg.mu2},       {"sigma", cfg.sigma},
            {"tau", cfg.tau},        {"n_train", cfg.n_train}, {"n_test", cfg.n_test}, {"x_lo", cfg.x_lo},
            {"x_hi", cfg.x_hi},      {"seed", cfg.seed}};
}

nlohmann::json to_json(const TransitionConfig& cfg) {
    auto j = to_json(static_cast<const SwitchConfig&>(cfg));
    j["generator"] = "transition";
    j["k"] = cfg.k;
    return j;
}

SwitchConfig switch_config_from_json(const nlohmann::json& doc) {
    SwitchConfig c;
    try {
        c.mu1 = doc.value("mu1", c.mu1);
        c.mu2 = doc.value("mu2", c.mu2);
        c.sigma = doc.value("sigma", c.sigma);
        c.tau = doc.value("tau", c.tau);
        c.n_train = doc.value("n_train", c.n_train);
        c.n_test = doc.value("n_test", c.n_test);
        c.x_lo = doc.value("x_lo", c.x_lo);
        c.x_hi = doc.value("x_hi", c.x_hi);
        c.seed = doc.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
}

TransitionConfig transition_config_from_json(const nlohmann::json& doc) {
    TransitionConfig c;
    static_cast<SwitchConfig&>(c) = switch_config_from_json(doc);
    try {
        c.k = doc.value("k", c.k);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace cocoafuse
