#pragma once

// Bijection between the unconstrained sampling space and ParameterVector.
// sigmas: log transform. Ordered blocks: first element free, then
// softplus-positive increments (ordered sigmas are ordered on the log scale).

#include <span>
#include <vector>

#include "cocoafuse/dataio.hpp"
#include "cocoafuse/model.hpp"
#include "cocoafuse/priors.hpp"

namespace cocoafuse {

ParameterVector constrain(std::span<const double> z, const ModelSpec& spec, double* log_jacobian = nullptr);

std::vector<double> unconstrain(const ParameterVector& theta, const ModelSpec& spec);

/// Pulls a constrained-space gradient back to z and adds the log-Jacobian
/// gradient. `grad_theta` must come from the same z.
std::vector<double> pullback_gradient(std::span<const double> z, const ParameterVector& theta,
                                      const ParameterVector& grad_theta, const ModelSpec& spec);

struct LogDensityResult {
    double value = 0.0;
    std::vector<double> gradient;
    bool divergent = false;  // non-finite value or gradient
};

/// Log-likelihood + log-prior + log-Jacobian at z with exact gradient.
LogDensityResult log_posterior_unconstrained(std::span<const double> z, const Dataset& data, const PriorConfig& prior,
                                             const ModelSpec& spec);

}  // namespace cocoafuse
