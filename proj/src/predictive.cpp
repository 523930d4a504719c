#include "cocoafuse/predictive.hpp"

#include <algorithm>
#include <cmath>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

std::vector<double> PredictiveDraws::column(std::size_t q) const {
    std::vector<double> out(draws());
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = y(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(q));
    return out;
}

Eigen::VectorXd PredictiveDraws::predictive_mean() const { return y.colwise().mean().transpose(); }

double sample_conditional(const ConditionalDensity& dens, std::mt19937_64& rng) {
    std::size_t k = 0;
    if (dens.components.size() > 1) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double u = unif(rng);
        double acc = 0.0;
        k = dens.components.size() - 1;
        for (std::size_t i = 0; i < dens.components.size(); ++i) {
            acc += dens.weights[i];
            if (u < acc) {
                k = i;
                break;
            }
        }
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    return dens.components[k].mu + dens.components[k].sigma * normal(rng);
}

PredictiveDraws posterior_predict(const PosteriorSample& post, const Dataset& query, std::uint64_t seed) {
    if (post.size() == 0) throw usage_error("posterior_predict: empty posterior");
    post.spec.check_dataset(query);
    const auto s_count = static_cast<Eigen::Index>(post.size());
    const auto q_count = static_cast<Eigen::Index>(query.size());
    PredictiveDraws out;
    out.y.resize(s_count, q_count);
    out.means.resize(s_count, q_count);
    std::mt19937_64 rng(seed);
    for (Eigen::Index s = 0; s < s_count; ++s) {
        const ParameterVector theta = post.draw(static_cast<std::size_t>(s));
        for (Eigen::Index q = 0; q < q_count; ++q) {
            const auto dens = conditional_density(feature_row(query, static_cast<std::size_t>(q)), theta, post.spec);
            out.y(s, q) = sample_conditional(dens, rng);
            out.means(s, q) = dens.mean();
        }
    }
    return out;
}

double predictive_logpdf(const PosteriorSample& post, const Dataset& query, std::size_t row, double y) {
    const FeatureRow fr = feature_row(query, row);
    std::vector<double> terms(post.size());
    for (std::size_t s = 0; s < post.size(); ++s) terms[s] = conditional_logpdf(y, fr, post.draw(s), post.spec);
    return log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
}

double empirical_quantile(std::span<const double> draws, double p) {
    if (draws.empty()) throw usage_error("quantile of empty draws");
    std::vector<double> sorted(draws.begin(), draws.end());
    if (!std::is_sorted(sorted.begin(), sorted.end())) std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const double h = n * p + 0.5;  // 1-based position
    if (h <= 1.0) return sorted.front();
    if (h >= n) return sorted.back();
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    return sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]);
}

std::pair<double, double> credible_interval(std::span<const double> draws, double level) {
    if (draws.size() < 100) throw usage_error("credible_interval: need at least 100 draws");
    if (!(level > 0.0 && level < 1.0)) throw usage_error("credible_interval: level must be in (0, 1)");
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());
    const double tail = 0.5 * (1.0 - level);
    return {empirical_quantile(sorted, tail), empirical_quantile(sorted, 1.0 - tail)};
}

}  // namespace cocoafuse
