#pragma once

// Pareto-smoothed importance sampling.

#include <span>
#include <vector>

namespace cocoafuse {

struct GpdFit {
    double k = 0.0;      // shape
    double sigma = 0.0;  // scale
};

/// Zhang-Stephens profile-quadrature fit of a generalized Pareto distribution
/// to positive exceedances `x` sorted ascending, with weakly informative
/// shrinkage of k towards 0.5.
GpdFit gpd_fit(std::span<const double> x);

/// Quantile function of the generalized Pareto distribution with location 0.
double gpd_quantile(double p, double k, double sigma);

struct PsisResult {
    std::vector<double> log_weights;  // smoothed, unnormalized
    double k = 0.0;
    bool smoothed = false;
};

/// Number of tail draws replaced for S draws.
std::size_t psis_tail_length(std::size_t draws);

/// Smooths the largest log-ratios; weights truncated at the largest raw weight.
PsisResult psis_smooth(std::span<const double> log_ratios);

}  // namespace cocoafuse
