#pragma once

// Switch and Transition synthetic generators.

#include <cstdint>
#include <random>

#include <json.hpp>

#include "cocoafuse/dataio.hpp"

namespace cocoafuse {

struct SwitchConfig {
    double mu1 = 3.0;
    double mu2 = -3.0;
    double sigma = 0.25;
    double tau = 2.0;  // p(x) = logistic(tau x)
    std::size_t n_train = 500;
    std::size_t n_test = 500;
    double x_lo = -3.0;  // x ~ U[x_lo, x_hi]
    double x_hi = 3.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct TransitionConfig : SwitchConfig {
    double k = 5.0;  // Beta total count

    void validate() const;
};

/// Train and test tables with columns x, y, drawn from one seeded stream.
struct SynthData {
    Table train;
    Table test;
};

double switch_probability(double x, const SwitchConfig& cfg);
double conditional_mean_oracle(double x, const SwitchConfig& cfg);

double sample_switch_y(double x, const SwitchConfig& cfg, std::mt19937_64& rng);
double sample_transition_y(double x, const TransitionConfig& cfg, std::mt19937_64& rng);

/// Beta(a, b) via two Gamma draws taken in log space.
double sample_beta(double a, double b, std::mt19937_64& rng);

SynthData gen_switch(const SwitchConfig& cfg);
SynthData gen_transition(const TransitionConfig& cfg);

/// Dataset with expert feature x and gate/behaviour features (1, x).
Dataset synth_dataset(const Table& table);

nlohmann::json to_json(const SwitchConfig& cfg);
nlohmann::json to_json(const TransitionConfig& cfg);
SwitchConfig switch_config_from_json(const nlohmann::json& doc);
TransitionConfig transition_config_from_json(const nlohmann::json& doc);

}  // namespace cocoafuse
