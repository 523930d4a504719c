#include "cocoafuse/psis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cocoafuse/density.hpp"
#include "cocoafuse/error.hpp"

namespace cocoafuse {

namespace {

// Profile log-likelihood per observation at theta.
double profile_lx(double theta, std::span<const double> x) {
    const double a = -theta;
    double k = 0.0;
    for (double v : x) k += std::log1p(a * v);
    k /= static_cast<double>(x.size());
    return std::log(a / k) - k - 1.0;
}

}  // namespace

GpdFit gpd_fit(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) throw usage_error("gpd_fit: need at least two exceedances");
    const double prior = 3.0;
    const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
    const double xstar = x[static_cast<std::size_t>(std::floor(static_cast<double>(n) / 4.0 + 0.5)) - 1];
    std::vector<double> theta(m), ltheta(m);
    for (std::size_t j = 0; j < m; ++j) {
        theta[j] = 1.0 / x[n - 1] +
                   (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j + 1) - 0.5))) / prior / xstar;
        ltheta[j] = static_cast<double>(n) * profile_lx(theta[j], x);
    }
    // theta == 0 gives 0/0 in the profile; those grid points carry no weight
    for (double& l : ltheta)
        if (std::isnan(l)) l = -INFINITY;
    const double lse = log_sum_exp(ltheta);
    double theta_hat = 0.0;
    for (std::size_t j = 0; j < m; ++j) theta_hat += theta[j] * std::exp(ltheta[j] - lse);
    double k = 0.0;
    for (double v : x) k += std::log1p(-theta_hat * v);
    k /= static_cast<double>(n);
    GpdFit fit;
    fit.sigma = -k / theta_hat;
    const double nn = static_cast<double>(n);
    fit.k = (k * nn + 0.5 * 10.0) / (nn + 10.0);
    if (std::isnan(fit.k)) fit.k = INFINITY;
    return fit;
}

double gpd_quantile(double p, double k, double sigma) {
    if (k == 0.0) return -sigma * std::log1p(-p);
    return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

std::size_t psis_tail_length(std::size_t draws) {
    const double s = static_cast<double>(draws);
    return static_cast<std::size_t>(std::ceil(std::min(0.2 * s, 3.0 * std::sqrt(s))));
}

PsisResult psis_smooth(std::span<const double> log_ratios) {
    const std::size_t s = log_ratios.size();
    if (s < 2) throw usage_error("psis: need at least two draws");
    PsisResult out;
    const double max_lr = *std::max_element(log_ratios.begin(), log_ratios.end());
    out.log_weights.resize(s);
    for (std::size_t i = 0; i < s; ++i) out.log_weights[i] = log_ratios[i] - max_lr;

    const std::size_t tail = psis_tail_length(s);
    if (tail < 5 || tail + 1 > s) return out;
    std::vector<std::size_t> order(s);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.log_weights[a] < out.log_weights[b]; });
    const double cutoff = out.log_weights[order[s - tail - 1]];
    const double lo = out.log_weights[order[s - tail]];
    const double hi = out.log_weights[order[s - 1]];
    if (!(hi > lo) || !std::isfinite(cutoff)) return out;  // degenerate tail, k = 0

    const double exp_cutoff = std::exp(cutoff);
    std::vector<double> x(tail);
    for (std::size_t i = 0; i < tail; ++i) x[i] = std::exp(out.log_weights[order[s - tail + i]]) - exp_cutoff;
    // ties with the cutoff are dropped from the fit
    std::vector<double> pos;
    for (double v : x)
        if (v > 0.0) pos.push_back(v);
    if (pos.size() < 5) return out;
    const GpdFit fit = gpd_fit(pos);
    out.k = fit.k;
    if (!std::isfinite(fit.k)) return out;
    for (std::size_t i = 0; i < tail; ++i) {
        const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(tail);
        const double lw = std::log(gpd_quantile(p, fit.k, fit.sigma) + exp_cutoff);
        out.log_weights[order[s - tail + i]] = std::min(lw, 0.0);
    }
    out.smoothed = true;
    return out;
}

}  // namespace cocoafuse
