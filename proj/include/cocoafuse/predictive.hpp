#pragma once

// Posterior predictive draws, densities and credible intervals.

#include <cstdint>
#include <span>
#include <utility>

#include "cocoafuse/sampler.hpp"

namespace cocoafuse {

/// One response draw per (posterior draw, query row).
struct PredictiveDraws {
    RowMatrix y;      // S x Q
    RowMatrix means;  // S x Q conditional means E[y | x, theta_s]

    std::size_t draws() const { return static_cast<std::size_t>(y.rows()); }
    std::size_t queries() const { return static_cast<std::size_t>(y.cols()); }
    std::vector<double> column(std::size_t q) const;
    /// Posterior predictive mean per query row.
    Eigen::VectorXd predictive_mean() const;
};

/// Mixture and fusion sample the component index from the weights first;
/// blend samples the collapsed Gaussian.
double sample_conditional(const ConditionalDensity& dens, std::mt19937_64& rng);

PredictiveDraws posterior_predict(const PosteriorSample& post, const Dataset& query, std::uint64_t seed);

/// log (1/S) sum_s p(y | x_q, theta_s) for one query row.
double predictive_logpdf(const PosteriorSample& post, const Dataset& query, std::size_t row, double y);

/// Equal-tailed interval from Hazen (type 5) empirical quantiles.
std::pair<double, double> credible_interval(std::span<const double> draws, double level);

/// Hazen quantile of draws (sorted internally when unsorted).
double empirical_quantile(std::span<const double> draws, double p);

}  // namespace cocoafuse
