#include "cocoafuse/model.hpp"

#include <cmath>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

std::string to_string(CombinationMode m) {
    switch (m) {
        case CombinationMode::mixture: return "mixture";
        case CombinationMode::blend: return "blend";
        case CombinationMode::fusion: return "fusion";
    }
    return "fusion";
}

std::string to_string(OrderConstraint c) {
    switch (c) {
        case OrderConstraint::none: return "none";
        case OrderConstraint::ordered_bias: return "ordered_bias";
        case OrderConstraint::ordered_sigma: return "ordered_sigma";
    }
    return "none";
}

CombinationMode combination_mode_from(const std::string& s) {
    if (s == "mixture" || s == "moe") return CombinationMode::mixture;
    if (s == "blend" || s == "boe") return CombinationMode::blend;
    if (s == "fusion" || s == "cocoafuse") return CombinationMode::fusion;
    throw config_error("unknown combination mode '" + s + "'");
}

OrderConstraint order_constraint_from(const std::string& s) {
    if (s == "none") return OrderConstraint::none;
    if (s == "ordered_bias") return OrderConstraint::ordered_bias;
    if (s == "ordered_sigma") return OrderConstraint::ordered_sigma;
    throw config_error("unknown identifiability constraint '" + s + "'");
}

int ModelSpec::free_dim() const {
    return experts * coeff_width() + experts + gate_dim * free_gate_columns() + (has_behavior() ? behavior_dim : 0);
}

void ModelSpec::validate() const {
    if (experts < 1) throw usage_error("model needs at least one expert");
    if (expert_dim < 0) throw usage_error("expert feature dimension must be non-negative");
    if (gate_dim < 1 || behavior_dim < 1) throw usage_error("gate and behaviour maps need the constant column");
}

void ModelSpec::check_dataset(const Dataset& data) const {
    validate();
    if (static_cast<int>(data.expert_dim()) != expert_dim || static_cast<int>(data.gate_dim()) != gate_dim ||
        (has_behavior() && static_cast<int>(data.behavior_dim()) != behavior_dim))
        throw usage_error("dataset feature dimensions do not match the model spec");
}

ModelSpec ModelSpec::for_dataset(const Dataset& data, int experts, CombinationMode mode, OrderConstraint constraint) {
    ModelSpec s;
    s.experts = experts;
    s.expert_dim = static_cast<int>(data.expert_dim());
    s.gate_dim = static_cast<int>(data.gate_dim());
    s.behavior_dim = static_cast<int>(data.behavior_dim());
    s.mode = mode;
    s.constraint = constraint;
    s.features = data.features;
    s.validate();
    return s;
}

ParameterVector ParameterVector::zeros(const ModelSpec& spec) {
    ParameterVector p;
    p.coeffs = RowMatrix::Zero(spec.experts, spec.coeff_width());
    p.sigmas = Eigen::VectorXd::Ones(spec.experts);
    p.gate = Eigen::MatrixXd::Zero(spec.gate_dim, spec.experts);
    p.behavior = Eigen::VectorXd::Zero(spec.has_behavior() ? spec.behavior_dim : 0);
    return p;
}

std::vector<double> ParameterVector::flatten(const ModelSpec& spec) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(spec.free_dim()));
    for (int i = 0; i < spec.experts; ++i)
        for (int p = 0; p < spec.coeff_width(); ++p) out.push_back(coeffs(i, p));
    for (int i = 0; i < spec.experts; ++i) out.push_back(sigmas(i));
    for (int k = 0; k < spec.gate_dim; ++k)
        for (int j = 0; j < spec.free_gate_columns(); ++j) out.push_back(gate(k, j));
    if (spec.has_behavior())
        for (int k = 0; k < spec.behavior_dim; ++k) out.push_back(behavior(k));
    return out;
}

ParameterVector ParameterVector::unflatten(std::span<const double> flat, const ModelSpec& spec) {
    if (static_cast<int>(flat.size()) != spec.free_dim()) throw usage_error("parameter vector has wrong length");
    ParameterVector p = zeros(spec);
    std::size_t c = 0;
    for (int i = 0; i < spec.experts; ++i)
        for (int q = 0; q < spec.coeff_width(); ++q) p.coeffs(i, q) = flat[c++];
    for (int i = 0; i < spec.experts; ++i) p.sigmas(i) = flat[c++];
    for (int k = 0; k < spec.gate_dim; ++k)
        for (int j = 0; j < spec.free_gate_columns(); ++j) p.gate(k, j) = flat[c++];
    if (spec.has_behavior())
        for (int k = 0; k < spec.behavior_dim; ++k) p.behavior(k) = flat[c++];
    return p;
}

void ParameterVector::validate(const ModelSpec& spec) const {
    if (coeffs.rows() != spec.experts || coeffs.cols() != spec.coeff_width() || sigmas.size() != spec.experts ||
        gate.rows() != spec.gate_dim || gate.cols() != spec.experts ||
        behavior.size() != (spec.has_behavior() ? spec.behavior_dim : 0))
        throw usage_error("parameter vector shape does not match the model spec");
    for (int i = 0; i < spec.experts; ++i)
        if (!(sigmas(i) > 0.0)) throw usage_error("expert standard deviations must be positive");
    if (!gate.col(spec.experts - 1).isZero(0.0)) throw usage_error("last gate column must be exactly zero");
    for (int i = 1; i < spec.experts; ++i) {
        if (spec.constraint == OrderConstraint::ordered_bias && coeffs(i, 0) < coeffs(i - 1, 0))
            throw usage_error("ordered_bias constraint violated");
        if (spec.constraint == OrderConstraint::ordered_sigma && sigmas(i) < sigmas(i - 1))
            throw usage_error("ordered_sigma constraint violated");
    }
}

std::vector<std::string> parameter_names(const ModelSpec& spec, const std::vector<std::string>& expert_features,
                                         const std::vector<std::string>& gate_features,
                                         const std::vector<std::string>& behavior_features) {
    auto feat = [](const std::vector<std::string>& names, int idx, const char* fallback) {
        if (idx < static_cast<int>(names.size())) return names[static_cast<std::size_t>(idx)];
        return std::string(fallback) + std::to_string(idx);
    };
    std::vector<std::string> out;
    for (int i = 0; i < spec.experts; ++i) {
        const std::string e = "expert" + std::to_string(i + 1) + ".";
        out.push_back(e + "bias");
        for (int p = 0; p < spec.expert_dim; ++p) out.push_back(e + feat(expert_features, p, "x"));
    }
    for (int i = 0; i < spec.experts; ++i) out.push_back("sigma" + std::to_string(i + 1));
    for (int k = 0; k < spec.gate_dim; ++k)
        for (int j = 0; j < spec.free_gate_columns(); ++j)
            out.push_back("gate" + std::to_string(j + 1) + "." + feat(gate_features, k, "g"));
    if (spec.has_behavior())
        for (int k = 0; k < spec.behavior_dim; ++k) out.push_back("behavior." + feat(behavior_features, k, "b"));
    return out;
}

FeatureRow feature_row(const Dataset& data, std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    return {{data.expert_x.row(r).data(), static_cast<std::size_t>(data.expert_x.cols())},
            {data.gate_x.row(r).data(), static_cast<std::size_t>(data.gate_x.cols())},
            {data.behavior_x.row(r).data(), static_cast<std::size_t>(data.behavior_x.cols())}};
}

std::vector<double> gate_log_probs(std::span<const double> gate_features, const Eigen::MatrixXd& gate) {
    if (static_cast<Eigen::Index>(gate_features.size()) != gate.rows())
        throw usage_error("gate feature dimension does not match gate matrix");
    const auto m = static_cast<std::size_t>(gate.cols());
    std::vector<double> logits(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < gate_features.size(); ++k)
            logits[j] += gate(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * gate_features[k];
    const double norm = log_sum_exp(logits);
    for (double& l : logits) l -= norm;
    return logits;
}

Weights gate_probs(std::span<const double> gate_features, const Eigen::MatrixXd& gate) {
    auto lp = gate_log_probs(gate_features, gate);
    double total = 0.0;
    for (double& l : lp) {
        l = std::exp(l);
        total += l;
    }
    for (double& l : lp) l /= total;
    return Weights(std::move(lp));
}

FusionCoefficient behavior_beta(std::span<const double> behavior_features, const Eigen::VectorXd& behavior) {
    if (static_cast<Eigen::Index>(behavior_features.size()) != behavior.size())
        throw usage_error("behaviour feature dimension does not match behaviour vector");
    double eta = 0.0;
    for (std::size_t k = 0; k < behavior_features.size(); ++k)
        eta += behavior(static_cast<Eigen::Index>(k)) * behavior_features[k];
    return FusionCoefficient::from_logit(eta);
}

double ConditionalDensity::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) m += weights[i] * components[i].mu;
    return m;
}

namespace {

void check_row(const FeatureRow& row, const ParameterVector& theta, const ModelSpec& spec) {
    if (static_cast<int>(row.expert.size()) != spec.expert_dim)
        throw usage_error("expert feature dimension does not match the model spec");
    for (double v : row.expert)
        if (!std::isfinite(v)) throw data_error("non-finite expert feature value");
    for (double v : row.gate)
        if (!std::isfinite(v)) throw data_error("non-finite gate feature value");
    if (spec.has_behavior())
        for (double v : row.behavior)
            if (!std::isfinite(v)) throw data_error("non-finite behaviour feature value");
    (void)theta;
}

}  // namespace

ConditionalDensity conditional_density(const FeatureRow& row, const ParameterVector& theta, const ModelSpec& spec) {
    check_row(row, theta, spec);
    const int m = spec.experts;
    ConditionalDensity out;
    out.experts.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        double mu = theta.coeffs(i, 0);
        for (int p = 0; p < spec.expert_dim; ++p) mu += theta.coeffs(i, p + 1) * row.expert[static_cast<std::size_t>(p)];
        out.experts[static_cast<std::size_t>(i)] = {mu, theta.sigmas(i)};
    }
    out.weights = gate_probs(row.gate, theta.gate);
    switch (spec.mode) {
        case CombinationMode::mixture:
            out.components = out.experts;
            break;
        case CombinationMode::blend:
            out.components = {blend_params(out.experts, out.weights)};
            out.weights = Weights({1.0});
            break;
        case CombinationMode::fusion:
            out.beta = behavior_beta(row.behavior, theta.behavior);
            out.components = fusion_component_params(out.experts, out.weights, out.beta);
            break;
    }
    return out;
}

double conditional_logpdf(double y, const FeatureRow& row, const ParameterVector& theta, const ModelSpec& spec) {
    return conditional_density(row, theta, spec).logpdf(y);
}

namespace {

// Scratch buffers for one likelihood sweep.
struct RowWork {
    explicit RowWork(int m)
        : mean(m), var(m), logpi(m), pi(m), fmean(m), fvar(m), terms(m), dmean(m), dvar(m), dlogpi(m) {}
    std::vector<double> mean, var, logpi, pi, fmean, fvar, terms, dmean, dvar, dlogpi;
};

inline double normal_logpdf_var(double y, double mu, double var) {
    const double r = y - mu;
    return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * r * r / var;
}

// One row: returns log p(y | x, theta); when `grad` is given, accumulates the
// gradient with respect to coeffs, sigmas, gate and behaviour.
double row_loglik(double y, const FeatureRow& row, const ParameterVector& theta, const ModelSpec& spec, RowWork& w,
                  ParameterVector* grad) {
    const int m = spec.experts;
    const int pdim = spec.expert_dim;
    for (int i = 0; i < m; ++i) {
        double mu = theta.coeffs(i, 0);
        for (int p = 0; p < pdim; ++p) mu += theta.coeffs(i, p + 1) * row.expert[static_cast<std::size_t>(p)];
        w.mean[i] = mu;
        w.var[i] = theta.sigmas(i) * theta.sigmas(i);
    }
    // gate log-probabilities
    double amax = -INFINITY;
    for (int j = 0; j < m; ++j) {
        double a = 0.0;
        for (int k = 0; k < spec.gate_dim; ++k) a += theta.gate(k, j) * row.gate[static_cast<std::size_t>(k)];
        w.logpi[j] = a;
        amax = std::max(amax, a);
    }
    double asum = 0.0;
    for (int j = 0; j < m; ++j) asum += std::exp(w.logpi[j] - amax);
    const double anorm = amax + std::log(asum);
    for (int j = 0; j < m; ++j) {
        w.logpi[j] -= anorm;
        w.pi[j] = std::exp(w.logpi[j]);
    }

    double mu_b = 0.0, var_b = 0.0;
    if (spec.mode != CombinationMode::mixture) {
        for (int i = 0; i < m; ++i) {
            mu_b += w.pi[i] * w.mean[i];
            var_b += w.pi[i] * w.var[i];
        }
    }

    double ll = 0.0;
    double beta = 1.0, comp = 0.0, eta = 0.0;
    double dmu_b = 0.0, dvar_b = 0.0, dbeta = 0.0;
    std::fill(w.dlogpi.begin(), w.dlogpi.end(), 0.0);

    if (spec.mode == CombinationMode::blend) {
        ll = normal_logpdf_var(y, mu_b, var_b);
        if (grad) {
            const double r = y - mu_b;
            dmu_b = r / var_b;
            dvar_b = -0.5 / var_b + 0.5 * r * r / (var_b * var_b);
            for (int i = 0; i < m; ++i) {
                w.dmean[i] = 0.0;
                w.dvar[i] = 0.0;
            }
        }
    } else {
        if (spec.mode == CombinationMode::fusion) {
            for (int k = 0; k < spec.behavior_dim; ++k) eta += theta.behavior(k) * row.behavior[static_cast<std::size_t>(k)];
            beta = logistic(eta);
            comp = logistic(-eta);
            for (int i = 0; i < m; ++i) {
                w.fmean[i] = beta * w.mean[i] + comp * mu_b;
                w.fvar[i] = beta * w.var[i] + comp * var_b;
            }
        } else {
            for (int i = 0; i < m; ++i) {
                w.fmean[i] = w.mean[i];
                w.fvar[i] = w.var[i];
            }
        }
        double tmax = -INFINITY;
        for (int i = 0; i < m; ++i) {
            w.terms[i] = w.logpi[i] + normal_logpdf_var(y, w.fmean[i], w.fvar[i]);
            tmax = std::max(tmax, w.terms[i]);
        }
        double tsum = 0.0;
        for (int i = 0; i < m; ++i) tsum += std::exp(w.terms[i] - tmax);
        ll = tmax + std::log(tsum);
        if (grad) {
            double sum_gmu = 0.0, sum_gvar = 0.0;
            for (int i = 0; i < m; ++i) {
                const double resp = std::exp(w.terms[i] - ll);
                const double r = y - w.fmean[i];
                const double gmu = resp * r / w.fvar[i];
                const double gvar = resp * (-0.5 / w.fvar[i] + 0.5 * r * r / (w.fvar[i] * w.fvar[i]));
                w.dlogpi[i] = resp;
                w.dmean[i] = beta * gmu;
                w.dvar[i] = beta * gvar;
                sum_gmu += gmu;
                sum_gvar += gvar;
                if (spec.mode == CombinationMode::fusion) dbeta += gmu * (w.mean[i] - mu_b) + gvar * (w.var[i] - var_b);
            }
            if (spec.mode == CombinationMode::fusion) {
                dmu_b = comp * sum_gmu;
                dvar_b = comp * sum_gvar;
            }
        }
    }

    if (grad) {
        if (spec.mode != CombinationMode::mixture) {
            for (int i = 0; i < m; ++i) {
                w.dmean[i] += w.pi[i] * dmu_b;
                w.dvar[i] += w.pi[i] * dvar_b;
                w.dlogpi[i] += w.pi[i] * (w.mean[i] * dmu_b + w.var[i] * dvar_b);
            }
        }
        double sum_dlogpi = 0.0;
        for (int i = 0; i < m; ++i) sum_dlogpi += w.dlogpi[i];
        for (int j = 0; j + 1 < m; ++j) {
            const double da = w.dlogpi[j] - w.pi[j] * sum_dlogpi;
            for (int k = 0; k < spec.gate_dim; ++k) grad->gate(k, j) += da * row.gate[static_cast<std::size_t>(k)];
        }
        for (int i = 0; i < m; ++i) {
            grad->coeffs(i, 0) += w.dmean[i];
            for (int p = 0; p < pdim; ++p) grad->coeffs(i, p + 1) += w.dmean[i] * row.expert[static_cast<std::size_t>(p)];
            grad->sigmas(i) += 2.0 * theta.sigmas(i) * w.dvar[i];
        }
        if (spec.mode == CombinationMode::fusion) {
            const double deta = beta * comp * dbeta;
            for (int k = 0; k < spec.behavior_dim; ++k) grad->behavior(k) += deta * row.behavior[static_cast<std::size_t>(k)];
        }
    }
    return ll;
}

}  // namespace

double log_likelihood(const Dataset& data, const ParameterVector& theta, const ModelSpec& spec, ParameterVector* grad) {
    RowWork work(spec.experts);
    double total = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n)
        total += row_loglik(data.y(static_cast<Eigen::Index>(n)), feature_row(data, n), theta, spec, work, grad);
    return total;
}

Eigen::VectorXd pointwise_log_likelihood(const Dataset& data, const ParameterVector& theta, const ModelSpec& spec) {
    RowWork work(spec.experts);
    Eigen::VectorXd out(static_cast<Eigen::Index>(data.size()));
    for (std::size_t n = 0; n < data.size(); ++n)
        out(static_cast<Eigen::Index>(n)) =
            row_loglik(data.y(static_cast<Eigen::Index>(n)), feature_row(data, n), theta, spec, work, nullptr);
    return out;
}

nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::json doc{{"experts", spec.experts},
                       {"expert_dim", spec.expert_dim},
                       {"gate_dim", spec.gate_dim},
                       {"behavior_dim", spec.behavior_dim},
                       {"mode", to_string(spec.mode)},
                       {"constraint", to_string(spec.constraint)}};
    doc["features"] = to_json(spec.features);
    return doc;
}

ModelSpec model_spec_from_json(const nlohmann::json& doc) {
    try {
        ModelSpec s;
        s.experts = doc.value("experts", 2);
        s.mode = combination_mode_from(doc.value("mode", std::string("fusion")));
        s.constraint = order_constraint_from(doc.value("constraint", std::string("none")));
        if (doc.contains("features")) {
            s.features = feature_config_from_json(doc.at("features"));
            FeatureConfig probe = s.features;
            if (!probe.gate.transforms.empty() && probe.gate.transforms.front().kind != TransformKind::constant_one)
                probe.gate.transforms.insert(probe.gate.transforms.begin(), FeatureTransform{TransformKind::constant_one, ""});
            if (probe.gate.transforms.empty()) probe.gate.transforms.push_back({TransformKind::constant_one, ""});
            if (!probe.behavior.transforms.empty() &&
                probe.behavior.transforms.front().kind != TransformKind::constant_one)
                probe.behavior.transforms.insert(probe.behavior.transforms.begin(),
                                                 FeatureTransform{TransformKind::constant_one, ""});
            if (probe.behavior.transforms.empty()) probe.behavior.transforms.push_back({TransformKind::constant_one, ""});
            s.expert_dim = static_cast<int>(probe.expert.width());
            s.gate_dim = static_cast<int>(probe.gate.width());
            s.behavior_dim = static_cast<int>(probe.behavior.width());
        }
        s.expert_dim = doc.value("expert_dim", s.expert_dim);
        s.gate_dim = doc.value("gate_dim", s.gate_dim);
        s.behavior_dim = doc.value("behavior_dim", s.behavior_dim);
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("model spec: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::usage) throw config_error(std::string("model spec: ") + e.what());
        throw;
    }
}

}  // namespace cocoafuse
