#include "cocoafuse/density.hpp"

#include <algorithm>
#include <cfloat>
#include <limits>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

Weights::Weights(std::vector<double> pi) : pi_(std::move(pi)) {
    if (pi_.empty()) throw usage_error("weights: empty probability vector");
    double total = 0.0;
    for (double p : pi_) {
        if (!(p >= 0.0)) throw usage_error("weights: negative or NaN entry");
        total += p;
    }
    const double tol = 1e-12 + 4.0 * DBL_EPSILON * static_cast<double>(pi_.size());
    if (std::abs(total - 1.0) > tol) throw usage_error("weights: entries do not sum to one");
}

Weights Weights::uniform(std::size_t m) {
    return Weights(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

FusionCoefficient FusionCoefficient::from_logit(double eta) {
    if (std::isnan(eta)) throw usage_error("fusion coefficient: NaN logit");
    FusionCoefficient b;
    b.logit_ = eta;
    b.beta_ = logistic(eta);
    b.complement_ = logistic(-eta);
    return b;
}

FusionCoefficient FusionCoefficient::from_beta(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw usage_error("fusion coefficient must lie in (0, 1)");
    FusionCoefficient b;
    b.logit_ = std::log(beta) - std::log1p(-beta);
    b.beta_ = beta;
    b.complement_ = 1.0 - beta;
    return b;
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_logistic(double x) { return -softplus(-x); }

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> terms) {
    if (terms.empty()) throw usage_error("log_sum_exp: empty input");
    double mx = -std::numeric_limits<double>::infinity();
    for (double t : terms) {
        if (std::isnan(t)) throw usage_error("log_sum_exp: NaN term");
        mx = std::max(mx, t);
    }
    if (std::isinf(mx)) return mx;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc);
}

double log_sum_exp(double a, double b) {
    const double mx = std::max(a, b);
    if (std::isinf(mx)) return mx;
    return mx + std::log1p(std::exp(std::min(a, b) - mx));
}

double gaussian_logpdf(double x, const GaussianParams& g) {
    const double z = (x - g.mu) / g.sigma;
    return -kLogSqrt2Pi - std::log(g.sigma) - 0.5 * z * z;
}

namespace {

void check_sizes(std::span<const GaussianParams> components, const Weights& w) {
    if (components.empty() || components.size() != w.size())
        throw usage_error("component count does not match weight count");
}

}  // namespace

double mixture_logpdf(double x, std::span<const GaussianParams> components, const Weights& w) {
    check_sizes(components, w);
    std::vector<double> terms(components.size());
    for (std::size_t i = 0; i < components.size(); ++i)
        terms[i] = std::log(w[i]) + gaussian_logpdf(x, components[i]);
    return log_sum_exp(terms);
}

GaussianParams blend_params(std::span<const GaussianParams> components, const Weights& w) {
    check_sizes(components, w);
    double mu = 0.0;
    double var = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) {
        mu += w[i] * components[i].mu;
        var += w[i] * components[i].variance();
    }
    return {mu, std::sqrt(var)};
}

double blend_logpdf(double x, std::span<const GaussianParams> components, const Weights& w) {
    return gaussian_logpdf(x, blend_params(components, w));
}

std::vector<GaussianParams> fusion_component_params(std::span<const GaussianParams> components,
                                                    const Weights& w, const FusionCoefficient& beta) {
    const GaussianParams blend = blend_params(components, w);
    const double b = beta.beta();
    const double c = beta.complement();
    std::vector<GaussianParams> out(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) {
        out[i].mu = b * components[i].mu + c * blend.mu;
        out[i].sigma = std::sqrt(b * components[i].variance() + c * blend.variance());
    }
    return out;
}

double fusion_logpdf(double x, std::span<const GaussianParams> components, const Weights& w,
                     const FusionCoefficient& beta) {
    const auto fused = fusion_component_params(components, w, beta);
    return mixture_logpdf(x, fused, w);
}

int count_modes(const std::function<double(double)>& logpdf, const GridSpec& grid, double min_scale) {
    if (grid.points < 3 || !(grid.hi > grid.lo)) throw usage_error("count_modes: degenerate grid");
    if (min_scale > 0.0 && grid.spacing() > min_scale / 10.0)
        throw usage_error("count_modes: grid too coarse (fewer than 10 points per scale)");

    std::vector<double> v(grid.points);
    for (std::size_t i = 0; i < grid.points; ++i) v[i] = logpdf(grid.at(i));

    int modes = 0;
    std::size_t i = 1;
    while (i + 1 < v.size()) {
        // collapse a plateau starting at i
        std::size_t j = i;
        while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
        if (j + 1 >= v.size()) break;
        if (v[i] > v[i - 1] && v[j] > v[j + 1]) ++modes;
        i = j + 1;
    }
    return modes;
}

GridSpec covering_grid(std::span<const GaussianParams> components, std::size_t points) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double smax = 0.0;
    for (const auto& c : components) {
        lo = std::min(lo, c.mu);
        hi = std::max(hi, c.mu);
        smax = std::max(smax, c.sigma);
    }
    return {lo - 6.0 * smax, hi + 6.0 * smax, points};
}

}  // namespace cocoafuse
