#pragma once

// Predictive quality metrics over posterior samples.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cocoafuse/predictive.hpp"

namespace cocoafuse {

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

struct LooResult {
    double value = 0.0;
    double se = 0.0;
    std::vector<double> pointwise;
    std::vector<double> pareto_k;
    int high_k = 0;  // points with k > 0.7
};

constexpr double kParetoKThreshold = 0.7;

/// Pointwise log-likelihoods are S x N (draws x points).
Estimate lppd(const RowMatrix& pointwise_loglik);
std::vector<double> lppd_pointwise(const RowMatrix& pointwise_loglik);

LooResult psis_loo(const RowMatrix& pointwise_loglik);

using Interval = std::pair<double, double>;

Estimate cic(std::span<const double> y, std::span<const Interval> intervals);
Estimate cil(std::span<const Interval> intervals);
Estimate emse(std::span<const double> y, const PredictiveDraws& predictive);
double r_squared(std::span<const double> y, std::span<const double> predictive_means);

struct MetricsReport {
    Estimate loo;
    Estimate lppd;
    Estimate cic;
    Estimate cil;
    Estimate emse;
    double r2 = 0.0;
    std::vector<double> pareto_k;
    int high_k = 0;
    double level = 0.95;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::size_t draws = 0;
};

/// LOO on the training log-likelihoods stored in `post`; the rest on `test`.
MetricsReport evaluate(const PosteriorSample& post, const Dataset& test, std::uint64_t seed, double level = 0.95);

/// Same, reusing predictive draws already made on `test`.
MetricsReport evaluate(const PosteriorSample& post, const Dataset& test, const PredictiveDraws& predictive,
                       double level = 0.95);

nlohmann::json to_json(const MetricsReport& r);

/// Header and row in the order LOO, LPPD, CIC, CIL, eMSE, R2.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const MetricsReport& r);

}  // namespace cocoafuse
