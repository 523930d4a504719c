#pragma once

// Competitive / collaborative / fused combination of Gaussian linear experts.

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cocoafuse/dataio.hpp"
#include "cocoafuse/density.hpp"

namespace cocoafuse {

enum class CombinationMode { mixture, blend, fusion };
enum class OrderConstraint { none, ordered_bias, ordered_sigma };

std::string to_string(CombinationMode m);
std::string to_string(OrderConstraint c);
CombinationMode combination_mode_from(const std::string& s);
OrderConstraint order_constraint_from(const std::string& s);

/// Structure of a model instance. Feature dimensions count columns of the
/// derived matrices: `expert_dim` excludes the intercept, `gate_dim` and
/// `behavior_dim` include the leading constant.
struct ModelSpec {
    int experts = 2;
    int expert_dim = 1;
    int gate_dim = 2;
    int behavior_dim = 2;
    CombinationMode mode = CombinationMode::fusion;
    OrderConstraint constraint = OrderConstraint::none;
    FeatureConfig features;

    /// Columns per expert coefficient row (intercept + features).
    int coeff_width() const { return expert_dim + 1; }
    int free_gate_columns() const { return experts - 1; }
    bool has_behavior() const { return mode == CombinationMode::fusion; }

    /// Dimension of the unconstrained parameter vector.
    int free_dim() const;

    void validate() const;
    void check_dataset(const Dataset& data) const;

    /// Copies the dimensions of `data`'s feature matrices into the spec.
    static ModelSpec for_dataset(const Dataset& data, int experts, CombinationMode mode,
                                 OrderConstraint constraint = OrderConstraint::none);
};

/// All uncertain parameters in constrained form.
struct ParameterVector {
    RowMatrix coeffs;         // experts x (expert_dim + 1); column 0 is the intercept
    Eigen::VectorXd sigmas;   // experts, residual standard deviations
    Eigen::MatrixXd gate;     // gate_dim x experts, last column pinned to zero
    Eigen::VectorXd behavior; // behavior_dim (empty unless mode == fusion)

    static ParameterVector zeros(const ModelSpec& spec);

    /// Flat layout: coeffs (row-major), sigmas, free gate entries (row-major),
    /// behaviour. Same order as the unconstrained vector.
    std::vector<double> flatten(const ModelSpec& spec) const;
    static ParameterVector unflatten(std::span<const double> flat, const ModelSpec& spec);

    /// Throws usage_error on a violated invariant.
    void validate(const ModelSpec& spec) const;
};

/// Display names matching ParameterVector::flatten.
std::vector<std::string> parameter_names(const ModelSpec& spec, const std::vector<std::string>& expert_features = {},
                                         const std::vector<std::string>& gate_features = {},
                                         const std::vector<std::string>& behavior_features = {});

/// Covariate row split into the three feature views.
struct FeatureRow {
    std::span<const double> expert;
    std::span<const double> gate;
    std::span<const double> behavior;
};

FeatureRow feature_row(const Dataset& data, std::size_t i);

/// softmax(gate^T phi) evaluated in log space.
Weights gate_probs(std::span<const double> gate_features, const Eigen::MatrixXd& gate);
/// Log of gate_probs.
std::vector<double> gate_log_probs(std::span<const double> gate_features, const Eigen::MatrixXd& gate);

FusionCoefficient behavior_beta(std::span<const double> behavior_features, const Eigen::VectorXd& behavior);

/// Conditional law of y given one covariate row: component weights plus the
/// component Gaussians after any blend/fusion interpolation. For blend mode a
/// single collapsed component is returned with weight one.
struct ConditionalDensity {
    Weights weights;
    std::vector<GaussianParams> components;
    std::vector<GaussianParams> experts;  // raw expert Gaussians
    FusionCoefficient beta;               // fusion mode only

    double logpdf(double y) const { return mixture_logpdf(y, components, weights); }
    double mean() const;
};

ConditionalDensity conditional_density(const FeatureRow& row, const ParameterVector& theta, const ModelSpec& spec);

double conditional_logpdf(double y, const FeatureRow& row, const ParameterVector& theta, const ModelSpec& spec);

/// Sum over rows of conditional_logpdf with gradient accumulated into `grad`
/// (same shape as theta, gradient with respect to sigma not log sigma).
double log_likelihood(const Dataset& data, const ParameterVector& theta, const ModelSpec& spec,
                      ParameterVector* grad = nullptr);

/// Pointwise conditional log-densities for every row.
Eigen::VectorXd pointwise_log_likelihood(const Dataset& data, const ParameterVector& theta, const ModelSpec& spec);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& doc);

}  // namespace cocoafuse
