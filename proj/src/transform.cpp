#include "cocoafuse/transform.hpp"

#include <cmath>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

namespace {

// Inverse of softplus for d >= 0.
double softplus_inverse(double d) {
    d = std::max(d, 1e-300);
    if (d > 30.0) return d + std::log(-std::expm1(-d));
    return std::log(std::expm1(d));
}

struct Offsets {
    std::size_t coeffs = 0, sigmas = 0, gate = 0, behavior = 0;
};

Offsets offsets(const ModelSpec& spec) {
    Offsets o;
    o.sigmas = static_cast<std::size_t>(spec.experts * spec.coeff_width());
    o.gate = o.sigmas + static_cast<std::size_t>(spec.experts);
    o.behavior = o.gate + static_cast<std::size_t>(spec.gate_dim * spec.free_gate_columns());
    return o;
}

}  // namespace

ParameterVector constrain(std::span<const double> z, const ModelSpec& spec, double* log_jacobian) {
    if (static_cast<int>(z.size()) != spec.free_dim()) throw usage_error("unconstrained vector has wrong length");
    ParameterVector p = ParameterVector::unflatten(z, spec);
    const Offsets o = offsets(spec);
    const int m = spec.experts;
    double lj = 0.0;
    if (spec.constraint == OrderConstraint::ordered_bias) {
        for (int i = 1; i < m; ++i) {
            const double zi = z[o.coeffs + static_cast<std::size_t>(i * spec.coeff_width())];
            p.coeffs(i, 0) = p.coeffs(i - 1, 0) + softplus(zi);
            lj += log_logistic(zi);
        }
    }
    if (spec.constraint == OrderConstraint::ordered_sigma) {
        double level = z[o.sigmas];
        p.sigmas(0) = std::exp(level);
        lj += level;
        for (int i = 1; i < m; ++i) {
            const double zi = z[o.sigmas + static_cast<std::size_t>(i)];
            level += softplus(zi);
            p.sigmas(i) = std::exp(level);
            lj += level + log_logistic(zi);
        }
    } else {
        for (int i = 0; i < m; ++i) {
            const double zi = z[o.sigmas + static_cast<std::size_t>(i)];
            p.sigmas(i) = std::exp(zi);
            lj += zi;
        }
    }
    if (log_jacobian) *log_jacobian = lj;
    return p;
}

std::vector<double> unconstrain(const ParameterVector& theta, const ModelSpec& spec) {
    theta.validate(spec);
    std::vector<double> z = theta.flatten(spec);
    const Offsets o = offsets(spec);
    const int m = spec.experts;
    if (spec.constraint == OrderConstraint::ordered_bias)
        for (int i = 1; i < m; ++i)
            z[o.coeffs + static_cast<std::size_t>(i * spec.coeff_width())] =
                softplus_inverse(theta.coeffs(i, 0) - theta.coeffs(i - 1, 0));
    if (spec.constraint == OrderConstraint::ordered_sigma) {
        z[o.sigmas] = std::log(theta.sigmas(0));
        for (int i = 1; i < m; ++i)
            z[o.sigmas + static_cast<std::size_t>(i)] =
                softplus_inverse(std::log(theta.sigmas(i)) - std::log(theta.sigmas(i - 1)));
    } else {
        for (int i = 0; i < m; ++i) z[o.sigmas + static_cast<std::size_t>(i)] = std::log(theta.sigmas(i));
    }
    return z;
}

std::vector<double> pullback_gradient(std::span<const double> z, const ParameterVector& theta,
                                      const ParameterVector& grad_theta, const ModelSpec& spec) {
    std::vector<double> g = grad_theta.flatten(spec);
    const Offsets o = offsets(spec);
    const int m = spec.experts;
    if (spec.constraint == OrderConstraint::ordered_bias) {
        const auto w = static_cast<std::size_t>(spec.coeff_width());
        double tail = 0.0;  // sum of d/d bias_i for i >= j
        for (int j = m - 1; j >= 0; --j) {
            tail += grad_theta.coeffs(j, 0);
            const std::size_t idx = o.coeffs + static_cast<std::size_t>(j) * w;
            if (j == 0) {
                g[idx] = tail;
            } else {
                g[idx] = logistic(z[idx]) * tail + logistic(-z[idx]);
            }
        }
    }
    if (spec.constraint == OrderConstraint::ordered_sigma) {
        double tail = 0.0;
        for (int j = m - 1; j >= 0; --j) {
            tail += grad_theta.sigmas(j) * theta.sigmas(j) + 1.0;
            const std::size_t idx = o.sigmas + static_cast<std::size_t>(j);
            g[idx] = j == 0 ? tail : logistic(z[idx]) * tail + logistic(-z[idx]);
        }
    } else {
        for (int i = 0; i < m; ++i)
            g[o.sigmas + static_cast<std::size_t>(i)] = grad_theta.sigmas(i) * theta.sigmas(i) + 1.0;
    }
    return g;
}

LogDensityResult log_posterior_unconstrained(std::span<const double> z, const Dataset& data, const PriorConfig& prior,
                                             const ModelSpec& spec) {
    LogDensityResult out;
    for (double v : z)
        if (!std::isfinite(v)) {
            out.divergent = true;
            out.value = -INFINITY;
            out.gradient.assign(z.size(), 0.0);
            return out;
        }
    double lj = 0.0;
    const ParameterVector theta = constrain(z, spec, &lj);
    bool finite_theta = theta.sigmas.allFinite() && (theta.sigmas.array() > 0.0).all() && theta.coeffs.allFinite();
    if (!finite_theta) {
        out.divergent = true;
        out.value = -INFINITY;
        out.gradient.assign(z.size(), 0.0);
        return out;
    }
    ParameterVector grad = ParameterVector::zeros(spec);
    grad.sigmas.setZero();
    const double ll = log_likelihood(data, theta, spec, &grad);
    const double lp = log_prior(theta, prior);
    log_prior_gradient(theta, prior, grad);
    out.value = ll + lp + lj;
    out.gradient = pullback_gradient(z, theta, grad, spec);
    bool ok = std::isfinite(out.value);
    for (double g : out.gradient) ok = ok && std::isfinite(g);
    out.divergent = !ok;
    return out;
}

}  // namespace cocoafuse
