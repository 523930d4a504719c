#include "cocoafuse/diagnostics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

namespace {

void check_chains(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw usage_error("split_rhat: need at least two chains");
    const std::size_t n = chains.front().size();
    if (n < 4) throw usage_error("split_rhat: chains too short to split");
    for (const auto& c : chains)
        if (c.size() != n) throw usage_error("split_rhat: chains must have equal length");
}

std::vector<std::vector<double>> split(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        // odd lengths drop the middle draw
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    return out;
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double rhat_of_segments(const std::vector<std::vector<double>>& seg) {
    std::vector<double> means, vars;
    for (const auto& s : seg) {
        means.push_back(mean_of(s));
        vars.push_back(var_of(s));
    }
    const double w = mean_of(vars);
    const double b_over_l = var_of(means);
    if (!(w > 0.0)) return 1.0;
    return std::sqrt((w + b_over_l) / w);
}

bool is_constant(const std::vector<std::vector<double>>& chains) {
    const double first = chains.front().front();
    for (const auto& c : chains)
        for (double x : c)
            if (x != first) return false;
    return true;
}

}  // namespace

double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

RhatResult split_rhat(const std::vector<std::vector<double>>& chains) {
    check_chains(chains);
    RhatResult out;
    if (is_constant(chains)) {
        out.degenerate = true;
        return out;
    }
    auto seg = split(chains);
    std::vector<double> pooled;
    for (const auto& s : seg) pooled.insert(pooled.end(), s.begin(), s.end());
    const auto ranks = average_ranks(pooled);
    const double total = static_cast<double>(pooled.size());
    std::size_t k = 0;
    for (auto& s : seg)
        for (double& x : s) x = normal_quantile((ranks[k++] - 0.375) / (total + 0.25));
    out.value = rhat_of_segments(seg);
    return out;
}

double split_rhat_classic(const std::vector<std::vector<double>>& chains) {
    check_chains(chains);
    if (is_constant(chains)) return 1.0;
    return rhat_of_segments(split(chains));
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
    if (chains.empty() || chains.front().size() < 4) throw usage_error("ess: need chains of length >= 4");
    const std::size_t m = chains.size();
    const std::size_t n = chains.front().size();
    for (const auto& c : chains)
        if (c.size() != n) throw usage_error("ess: chains must have equal length");
    if (is_constant(chains)) return static_cast<double>(m * n);

    std::vector<double> means(m), vars(m);
    for (std::size_t c = 0; c < m; ++c) {
        means[c] = mean_of(chains[c]);
        vars[c] = var_of(chains[c]);
    }
    const double w = mean_of(vars);
    const double nn = static_cast<double>(n);
    double var_plus = w * (nn - 1.0) / nn;
    if (m > 1) var_plus += var_of(means);

    // Autocovariance of chain c at lag t (biased estimator).
    auto acov = [&](std::size_t c, std::size_t t) {
        double s = 0.0;
        const auto& x = chains[c];
        for (std::size_t i = 0; i + t < n; ++i) s += (x[i] - means[c]) * (x[i + t] - means[c]);
        return s / nn;
    };
    auto rho = [&](std::size_t t) {
        double a = 0.0;
        for (std::size_t c = 0; c < m; ++c) a += acov(c, t);
        a /= static_cast<double>(m);
        const double acov0 = w * (nn - 1.0) / nn;
        return 1.0 - (acov0 - a) / var_plus;
    };

    std::vector<double> pairs;
    double prev = INFINITY;
    for (std::size_t t = 0; t + 1 < n; t += 2) {
        double p = rho(t) + rho(t + 1);
        if (p < 0.0) break;
        p = std::min(p, prev);  // monotone
        pairs.push_back(p);
        prev = p;
    }
    double tau = -1.0;
    for (double p : pairs) tau += 2.0 * p;
    tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m * n)));
    return static_cast<double>(m * n) / tau;
}

double mcse_mean(const std::vector<std::vector<double>>& chains) {
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
    const double sd = std::sqrt(var_of(pooled));
    return sd / std::sqrt(effective_sample_size(chains));
}

}  // namespace cocoafuse
