#pragma once

// Convergence diagnostics over per-chain scalar series.

#include <span>
#include <vector>

namespace cocoafuse {

struct RhatResult {
    double value = 1.0;
    bool degenerate = false;  // constant input, value set to 1
};

/// Rank-normalized split R-hat. Needs at least two chains of equal length >= 4.
RhatResult split_rhat(const std::vector<std::vector<double>>& chains);

/// Classical split R-hat on the raw values.
double split_rhat_classic(const std::vector<std::vector<double>>& chains);

/// Multi-chain effective sample size (Geyer initial monotone sequence).
double effective_sample_size(const std::vector<std::vector<double>>& chains);

/// Monte Carlo standard error of the pooled mean.
double mcse_mean(const std::vector<std::vector<double>>& chains);

/// Normal quantile function.
double normal_quantile(double p);

/// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace cocoafuse
