#pragma once

// Numerical kernels for combining univariate Gaussian densities by mixing,
// blending and fusing. Everything here is a pure function.

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace cocoafuse {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

/// Location/scale of a univariate Gaussian. `sigma` is a standard deviation.
struct GaussianParams {
    double mu = 0.0;
    double sigma = 1.0;

    double variance() const { return sigma * sigma; }
};

/// Probability vector over M components. Validated on construction.
class Weights {
public:
    Weights() = default;
    explicit Weights(std::vector<double> pi);

    /// Uniform weights 1/M.
    static Weights uniform(std::size_t m);

    std::size_t size() const { return pi_.size(); }
    double operator[](std::size_t i) const { return pi_[i]; }
    std::span<const double> values() const { return pi_; }

private:
    std::vector<double> pi_;
};

/// Behaviour coefficient in (0, 1), stored through its logit so that the
/// endpoints are only ever approached. Both beta and 1 - beta are kept so the
/// complement stays accurate close to either end.
class FusionCoefficient {
public:
    FusionCoefficient() = default;

    static FusionCoefficient from_logit(double eta);
    /// Requires 0 < beta < 1.
    static FusionCoefficient from_beta(double beta);

    double logit() const { return logit_; }
    double beta() const { return beta_; }
    double complement() const { return complement_; }

private:
    double logit_ = 0.0;
    double beta_ = 0.5;
    double complement_ = 0.5;
};

double logistic(double x);
double log_logistic(double x);
double softplus(double x);

/// log(sum(exp(terms))) evaluated around the maximum term.
double log_sum_exp(std::span<const double> terms);
double log_sum_exp(double a, double b);

double gaussian_logpdf(double x, const GaussianParams& g);

double mixture_logpdf(double x, std::span<const GaussianParams> components, const Weights& w);

/// Mean and standard deviation of the blend: weighted means and weighted
/// variances of the components.
GaussianParams blend_params(std::span<const GaussianParams> components, const Weights& w);

double blend_logpdf(double x, std::span<const GaussianParams> components, const Weights& w);

/// Per-component parameters interpolated between each component and the blend.
std::vector<GaussianParams> fusion_component_params(std::span<const GaussianParams> components,
                                                    const Weights& w, const FusionCoefficient& beta);

double fusion_logpdf(double x, std::span<const GaussianParams> components, const Weights& w,
                     const FusionCoefficient& beta);

/// Uniform evaluation grid over [lo, hi].
struct GridSpec {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t points = 2000;

    double spacing() const { return (hi - lo) / static_cast<double>(points - 1); }
    double at(std::size_t i) const { return lo + spacing() * static_cast<double>(i); }
};

/// Number of strict interior local maxima of `logpdf` sampled on `grid`.
/// Flat runs count once when both neighbours of the run are lower.
/// When `min_scale` > 0 the grid must have at least 10 points per min_scale.
int count_modes(const std::function<double(double)>& logpdf, const GridSpec& grid,
                double min_scale = 0.0);

/// Grid covering every component mean +/- 6 of the largest standard deviation.
GridSpec covering_grid(std::span<const GaussianParams> components, std::size_t points = 4001);

}  // namespace cocoafuse
