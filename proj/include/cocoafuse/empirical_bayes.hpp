#pragma once

// Prior hyperparameter tuning by stochastic gradient ascent on the expected
// log-likelihood plus an entropy bonus on averaged gate activations.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cocoafuse/sampler.hpp"

namespace cocoafuse {

struct EBConfig {
    double gamma = 1.0;
    int iterations = 20;     // K
    double step_size = 0.05; // eta_k = step_size / k^decay
    double decay = 0.5;
    double max_update = 0.5; // per-coordinate clip, locations and log-scales alike
    SamplerConfig inner{.chains = 2, .warmup = 300, .draws = 300};
    std::uint64_t seed = 1;
    std::vector<bool> mask;  // hyperparameters that move; empty means all

    void validate(std::size_t hyper_dim) const;
};

struct EBIterate {
    std::vector<double> lambda;  // PriorConfig::flatten order
    double objective = -INFINITY;
    double ell = -INFINITY;
    double entropy = -INFINITY;
    double grad_norm = 0.0;
    bool sampler_failed = false;
    bool entropy_collapsed = false;
    bool divergence_warning = false;
    std::string message;

    bool flagged() const { return sampler_failed || entropy_collapsed || !std::isfinite(objective); }
};

struct EBTrace {
    std::vector<std::string> names;
    std::vector<EBIterate> iterates;
    std::size_t best = 0;

    std::string to_csv() const;
};

/// Mean over draws of total log-likelihood plus log-prior under `prior`.
double ell_estimate(const PosteriorSample& post, const PriorConfig& prior);

/// Normalized Shannon entropy of a probability vector (0 log 0 = 0). One for
/// a single expert.
double normalized_entropy(std::span<const double> probs);

/// Gate activations averaged over the rows of `data`.
std::vector<double> average_activation(const ParameterVector& theta, const Dataset& data, const ModelSpec& spec);

struct EntropyEstimate {
    double value = 0.0;          // mean of ln H, -inf when any draw collapses
    std::vector<double> log_h;   // per draw
    bool collapsed = false;
};

EntropyEstimate entropy_penalty(const PosteriorSample& post, const Dataset& data);

/// Mean over draws of d log p(theta_s | lambda) / d lambda.
std::vector<double> marginal_grad_estimate(const PosteriorSample& post, const PriorConfig& prior);

struct EntropyGradient {
    std::vector<double> gradient;
    int excluded = 0;  // draws with ln H = -inf
    bool collapsed = false;
};

/// Centered score-function estimate. Draws with non-finite ln H are excluded.
EntropyGradient score_function_gradient(std::span<const double> log_h, const std::vector<std::vector<double>>& scores);

EntropyGradient entropy_grad_estimate(const PosteriorSample& post, const PriorConfig& prior, const Dataset& data);

/// Produces the posterior for iterate k under `prior`.
using PosteriorProvider = std::function<PosteriorSample(const PriorConfig& prior, int k)>;

struct EBResult {
    PriorConfig best;
    EBTrace trace;
};

/// Throws a tuning error when every iterate fails to sample.
EBResult tune(const Dataset& data, const ModelSpec& spec, const PriorConfig& initial, const EBConfig& cfg);
EBResult tune(const Dataset& data, const ModelSpec& spec, const PriorConfig& initial, const EBConfig& cfg,
              const PosteriorProvider& provider);

}  // namespace cocoafuse
