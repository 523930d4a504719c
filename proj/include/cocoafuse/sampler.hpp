#pragma once

// Hamiltonian Monte Carlo with dual-averaging step size and diagonal mass
// matrix adaptation, run over several independent chains.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cocoafuse/dataio.hpp"
#include "cocoafuse/model.hpp"
#include "cocoafuse/priors.hpp"
#include "cocoafuse/transform.hpp"

namespace cocoafuse {

struct SamplerConfig {
    int chains = 4;
    int warmup = 1000;
    int draws = 1000;  // kept draws per chain
    double target_accept = 0.8;
    int max_leapfrog = 128;
    std::uint64_t seed = 1;
    int threads = 0;  // 0: COCOAFUSE_THREADS or hardware concurrency

    void validate() const;
};

/// Differentiable log-density over an unconstrained space.
class LogDensity {
public:
    virtual ~LogDensity() = default;
    virtual std::size_t dim() const = 0;
    virtual LogDensityResult evaluate(std::span<const double> z) const = 0;
};

struct ChainDiagnostics {
    int divergences = 0;            // post-warmup
    double mean_accept = 0.0;       // post-warmup mean acceptance probability
    double step_size = 0.0;
    std::vector<double> inv_metric;
    std::vector<double> abs_energy_error;  // |Delta H| per kept transition
    bool divergence_warning = false;       // more than 10% divergent
};

/// Unconstrained draws, one matrix per chain (draws x dim).
struct HmcRun {
    std::vector<RowMatrix> draws;
    std::vector<ChainDiagnostics> chains;
};

using ChainInit = std::function<std::vector<double>(int chain, std::mt19937_64& rng)>;

/// Per-chain generator derived from (seed, chain) only.
std::mt19937_64 chain_rng(std::uint64_t seed, int chain);

/// Number of worker threads for `chains` chains (honours COCOAFUSE_THREADS).
int worker_threads(int chains, int requested = 0);

/// Throws a sampling error when a chain has no non-divergent kept transition.
HmcRun run_hmc(const LogDensity& target, const ChainInit& init, const SamplerConfig& cfg);

/// Posterior of the combined model.
struct PosteriorSample {
    ModelSpec spec;
    PriorConfig prior;
    SamplerConfig config;
    std::vector<std::string> names;
    int chains = 0;
    int draws_per_chain = 0;
    RowMatrix draws;             // (chains * draws_per_chain) x free_dim, chain-major, constrained
    RowMatrix pointwise_loglik;  // (chains * draws_per_chain) x N
    std::vector<ChainDiagnostics> diagnostics;
    bool divergence_warning = false;

    std::size_t size() const { return static_cast<std::size_t>(draws.rows()); }
    ParameterVector draw(std::size_t s) const;
    /// Draws of one flat parameter, split per chain.
    std::vector<std::vector<double>> parameter_chains(std::size_t index) const;
};

/// Model log-posterior as a LogDensity.
class ModelLogDensity : public LogDensity {
public:
    ModelLogDensity(const Dataset& data, const PriorConfig& prior, const ModelSpec& spec)
        : data_(data), prior_(prior), spec_(spec) {}
    std::size_t dim() const override { return static_cast<std::size_t>(spec_.free_dim()); }
    LogDensityResult evaluate(std::span<const double> z) const override {
        return log_posterior_unconstrained(z, data_, prior_, spec_);
    }

private:
    const Dataset& data_;
    const PriorConfig& prior_;
    const ModelSpec& spec_;
};

/// Chains start from prior draws mapped to the unconstrained space plus
/// N(0, 0.1) jitter. Kept draws are mapped back and scored on `data`.
PosteriorSample sample_posterior(const Dataset& data, const ModelSpec& spec, const PriorConfig& prior,
                                 const SamplerConfig& cfg);

/// Pointwise log-likelihood of every posterior draw on another dataset.
RowMatrix pointwise_loglik(const PosteriorSample& post, const Dataset& data);

}  // namespace cocoafuse
