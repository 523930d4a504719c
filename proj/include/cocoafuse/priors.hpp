#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include <json.hpp>

#include "cocoafuse/model.hpp"

namespace cocoafuse {

enum class PriorFamily { laplace, lognormal };

/// Independent priors over one parameter block, one (location, scale) per entry.
struct PriorBlock {
    PriorFamily family = PriorFamily::laplace;
    Eigen::MatrixXd location;
    Eigen::MatrixXd scale;

    Eigen::Index size() const { return location.size(); }
    static PriorBlock filled(PriorFamily family, Eigen::Index rows, Eigen::Index cols, double location, double scale);
};

/// Hyperparameters for every block. Expert sigmas are lognormal; all other
/// blocks are Laplace. The pinned last gate column carries no prior.
struct PriorConfig {
    PriorBlock expert_coeffs;  // experts x (expert_dim + 1)
    PriorBlock expert_sigmas;  // experts x 1
    PriorBlock gate;           // gate_dim x (experts - 1)
    PriorBlock behavior;       // behavior_dim x 1 (0 x 1 unless fusion)

    /// Laplace(0, 1) on coefficient/gate/behaviour entries, lognormal(0, 1) on sigmas.
    static PriorConfig defaults(const ModelSpec& spec);

    void validate(const ModelSpec& spec) const;

    /// Flat hyperparameter vector: every block's locations then scales, blocks
    /// in declaration order, entries row-major.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    std::size_t hyper_dim() const;
    std::vector<std::string> hyper_names() const;
};

double laplace_logpdf(double x, double location, double scale);
double lognormal_logpdf(double x, double location, double scale);

double log_prior(const ParameterVector& theta, const PriorConfig& prior);

/// Adds d log p / d theta to `grad` (subgradient 0 at Laplace kinks).
void log_prior_gradient(const ParameterVector& theta, const PriorConfig& prior, ParameterVector& grad);

/// Gradient of log p(theta | lambda) with respect to the flat hyperparameter
/// vector (d/dlocation, d/dscale) in PriorConfig::flatten order.
std::vector<double> log_prior_hyper_gradient(const ParameterVector& theta, const PriorConfig& prior);

/// Independent prior draw. Ordered blocks are sorted after drawing.
ParameterVector sample_prior(const PriorConfig& prior, const ModelSpec& spec, std::mt19937_64& rng);

nlohmann::json to_json(const PriorConfig& prior);
/// Missing blocks fall back to defaults; scalars broadcast over a block.
PriorConfig prior_config_from_json(const nlohmann::json& doc, const ModelSpec& spec);

}  // namespace cocoafuse
