#include "cocoafuse/priors.hpp"

#include <algorithm>
#include <cmath>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

PriorBlock PriorBlock::filled(PriorFamily family, Eigen::Index rows, Eigen::Index cols, double location, double scale) {
    return {family, Eigen::MatrixXd::Constant(rows, cols, location), Eigen::MatrixXd::Constant(rows, cols, scale)};
}

PriorConfig PriorConfig::defaults(const ModelSpec& spec) {
    PriorConfig p;
    p.expert_coeffs = PriorBlock::filled(PriorFamily::laplace, spec.experts, spec.coeff_width(), 0.0, 1.0);
    p.expert_sigmas = PriorBlock::filled(PriorFamily::lognormal, spec.experts, 1, 0.0, 1.0);
    p.gate = PriorBlock::filled(PriorFamily::laplace, spec.gate_dim, spec.free_gate_columns(), 0.0, 1.0);
    p.behavior = PriorBlock::filled(PriorFamily::laplace, spec.has_behavior() ? spec.behavior_dim : 0, 1, 0.0, 1.0);
    return p;
}

namespace {

void check_block(const PriorBlock& b, PriorFamily family, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (b.family != family) throw config_error(std::string("prior block '") + name + "' has the wrong family");
    if (b.location.rows() != rows || b.location.cols() != cols || b.scale.rows() != rows || b.scale.cols() != cols)
        throw config_error(std::string("prior block '") + name + "' has the wrong shape");
    for (Eigen::Index i = 0; i < b.scale.size(); ++i) {
        if (!(b.scale.data()[i] > 0.0) || !std::isfinite(b.scale.data()[i]))
            throw config_error(std::string("prior block '") + name + "' needs positive finite scales");
        if (!std::isfinite(b.location.data()[i]))
            throw config_error(std::string("prior block '") + name + "' needs finite locations");
    }
}

template <typename F>
void for_each_block(const PriorConfig& p, F&& f) {
    f(p.expert_coeffs, "expert_coeffs");
    f(p.expert_sigmas, "expert_sigmas");
    f(p.gate, "gate");
    f(p.behavior, "behavior");
}

template <typename F>
void for_each_block(PriorConfig& p, F&& f) {
    f(p.expert_coeffs, "expert_coeffs");
    f(p.expert_sigmas, "expert_sigmas");
    f(p.gate, "gate");
    f(p.behavior, "behavior");
}

}  // namespace

void PriorConfig::validate(const ModelSpec& spec) const {
    check_block(expert_coeffs, PriorFamily::laplace, spec.experts, spec.coeff_width(), "expert_coeffs");
    check_block(expert_sigmas, PriorFamily::lognormal, spec.experts, 1, "expert_sigmas");
    check_block(gate, PriorFamily::laplace, spec.gate_dim, spec.free_gate_columns(), "gate");
    check_block(behavior, PriorFamily::laplace, spec.has_behavior() ? spec.behavior_dim : 0, 1, "behavior");
}

std::vector<double> PriorConfig::flatten() const {
    std::vector<double> out;
    for_each_block(*this, [&](const PriorBlock& b, const char*) {
        for (Eigen::Index i = 0; i < b.location.rows(); ++i)
            for (Eigen::Index j = 0; j < b.location.cols(); ++j) out.push_back(b.location(i, j));
        for (Eigen::Index i = 0; i < b.scale.rows(); ++i)
            for (Eigen::Index j = 0; j < b.scale.cols(); ++j) out.push_back(b.scale(i, j));
    });
    return out;
}

void PriorConfig::assign(std::span<const double> flat) {
    if (flat.size() != hyper_dim()) throw usage_error("hyperparameter vector has wrong length");
    std::size_t c = 0;
    for_each_block(*this, [&](PriorBlock& b, const char*) {
        for (Eigen::Index i = 0; i < b.location.rows(); ++i)
            for (Eigen::Index j = 0; j < b.location.cols(); ++j) b.location(i, j) = flat[c++];
        for (Eigen::Index i = 0; i < b.scale.rows(); ++i)
            for (Eigen::Index j = 0; j < b.scale.cols(); ++j) b.scale(i, j) = flat[c++];
    });
}

std::size_t PriorConfig::hyper_dim() const {
    std::size_t n = 0;
    for_each_block(*this, [&](const PriorBlock& b, const char*) { n += 2 * static_cast<std::size_t>(b.size()); });
    return n;
}

std::vector<std::string> PriorConfig::hyper_names() const {
    std::vector<std::string> out;
    for_each_block(*this, [&](const PriorBlock& b, const char* name) {
        for (const char* what : {"location", "scale"})
            for (Eigen::Index i = 0; i < b.location.rows(); ++i)
                for (Eigen::Index j = 0; j < b.location.cols(); ++j)
                    out.push_back(std::string(name) + "." + what + "[" + std::to_string(i) + "][" + std::to_string(j) +
                                  "]");
    });
    return out;
}

double laplace_logpdf(double x, double location, double scale) {
    return -std::log(2.0 * scale) - std::abs(x - location) / scale;
}

double lognormal_logpdf(double x, double location, double scale) {
    const double z = (std::log(x) - location) / scale;
    return -std::log(x) - std::log(scale) - kLogSqrt2Pi - 0.5 * z * z;
}

namespace {

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double log_prior(const ParameterVector& theta, const PriorConfig& prior) {
    double lp = 0.0;
    const auto& c = prior.expert_coeffs;
    for (Eigen::Index i = 0; i < c.location.rows(); ++i)
        for (Eigen::Index j = 0; j < c.location.cols(); ++j)
            lp += laplace_logpdf(theta.coeffs(i, j), c.location(i, j), c.scale(i, j));
    const auto& s = prior.expert_sigmas;
    for (Eigen::Index i = 0; i < s.location.rows(); ++i)
        lp += lognormal_logpdf(theta.sigmas(i), s.location(i, 0), s.scale(i, 0));
    const auto& g = prior.gate;
    for (Eigen::Index k = 0; k < g.location.rows(); ++k)
        for (Eigen::Index j = 0; j < g.location.cols(); ++j)
            lp += laplace_logpdf(theta.gate(k, j), g.location(k, j), g.scale(k, j));
    const auto& b = prior.behavior;
    for (Eigen::Index k = 0; k < b.location.rows(); ++k)
        lp += laplace_logpdf(theta.behavior(k), b.location(k, 0), b.scale(k, 0));
    return lp;
}

void log_prior_gradient(const ParameterVector& theta, const PriorConfig& prior, ParameterVector& grad) {
    const auto& c = prior.expert_coeffs;
    for (Eigen::Index i = 0; i < c.location.rows(); ++i)
        for (Eigen::Index j = 0; j < c.location.cols(); ++j)
            grad.coeffs(i, j) -= sign(theta.coeffs(i, j) - c.location(i, j)) / c.scale(i, j);
    const auto& s = prior.expert_sigmas;
    for (Eigen::Index i = 0; i < s.location.rows(); ++i) {
        const double x = theta.sigmas(i);
        const double sc = s.scale(i, 0);
        grad.sigmas(i) += -1.0 / x - (std::log(x) - s.location(i, 0)) / (sc * sc * x);
    }
    const auto& g = prior.gate;
    for (Eigen::Index k = 0; k < g.location.rows(); ++k)
        for (Eigen::Index j = 0; j < g.location.cols(); ++j)
            grad.gate(k, j) -= sign(theta.gate(k, j) - g.location(k, j)) / g.scale(k, j);
    const auto& b = prior.behavior;
    for (Eigen::Index k = 0; k < b.location.rows(); ++k)
        grad.behavior(k) -= sign(theta.behavior(k) - b.location(k, 0)) / b.scale(k, 0);
}

std::vector<double> log_prior_hyper_gradient(const ParameterVector& theta, const PriorConfig& prior) {
    std::vector<double> out;
    out.reserve(prior.hyper_dim());
    auto laplace_block = [&](const PriorBlock& blk, auto&& value) {
        std::vector<double> dscale;
        for (Eigen::Index i = 0; i < blk.location.rows(); ++i)
            for (Eigen::Index j = 0; j < blk.location.cols(); ++j) {
                const double r = value(i, j) - blk.location(i, j);
                const double sc = blk.scale(i, j);
                out.push_back(sign(r) / sc);
                dscale.push_back(-1.0 / sc + std::abs(r) / (sc * sc));
            }
        out.insert(out.end(), dscale.begin(), dscale.end());
    };
    laplace_block(prior.expert_coeffs, [&](Eigen::Index i, Eigen::Index j) { return theta.coeffs(i, j); });
    {
        const auto& s = prior.expert_sigmas;
        std::vector<double> dscale;
        for (Eigen::Index i = 0; i < s.location.rows(); ++i) {
            const double z = std::log(theta.sigmas(i)) - s.location(i, 0);
            const double sc = s.scale(i, 0);
            out.push_back(z / (sc * sc));
            dscale.push_back(-1.0 / sc + z * z / (sc * sc * sc));
        }
        out.insert(out.end(), dscale.begin(), dscale.end());
    }
    laplace_block(prior.gate, [&](Eigen::Index k, Eigen::Index j) { return theta.gate(k, j); });
    laplace_block(prior.behavior, [&](Eigen::Index k, Eigen::Index) { return theta.behavior(k); });
    return out;
}

ParameterVector sample_prior(const PriorConfig& prior, const ModelSpec& spec, std::mt19937_64& rng) {
    std::exponential_distribution<double> expo(1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto laplace = [&](double loc, double scale) {
        const double a = expo(rng);
        const double b = expo(rng);
        return loc + scale * (a - b);
    };
    ParameterVector p = ParameterVector::zeros(spec);
    for (int i = 0; i < spec.experts; ++i)
        for (int j = 0; j < spec.coeff_width(); ++j)
            p.coeffs(i, j) = laplace(prior.expert_coeffs.location(i, j), prior.expert_coeffs.scale(i, j));
    for (int i = 0; i < spec.experts; ++i)
        p.sigmas(i) = std::exp(prior.expert_sigmas.location(i, 0) + prior.expert_sigmas.scale(i, 0) * normal(rng));
    for (int k = 0; k < spec.gate_dim; ++k)
        for (int j = 0; j < spec.free_gate_columns(); ++j)
            p.gate(k, j) = laplace(prior.gate.location(k, j), prior.gate.scale(k, j));
    if (spec.has_behavior())
        for (int k = 0; k < spec.behavior_dim; ++k)
            p.behavior(k) = laplace(prior.behavior.location(k, 0), prior.behavior.scale(k, 0));
    if (spec.constraint == OrderConstraint::ordered_bias) {
        Eigen::VectorXd b = p.coeffs.col(0);
        std::sort(b.data(), b.data() + b.size());
        p.coeffs.col(0) = b;
    } else if (spec.constraint == OrderConstraint::ordered_sigma) {
        std::sort(p.sigmas.data(), p.sigmas.data() + p.sigmas.size());
    }
    return p;
}

namespace {

const char* family_name(PriorFamily f) { return f == PriorFamily::laplace ? "laplace" : "lognormal"; }

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

// Accepts a scalar, a flat list (one entry per row when cols == 1, or a single
// row broadcast when rows == 1) or a nested list.
void read_matrix(const nlohmann::json& j, Eigen::MatrixXd& m, const std::string& what) {
    if (j.is_number()) {
        m.setConstant(j.get<double>());
        return;
    }
    if (!j.is_array()) throw config_error("prior '" + what + "' must be a number or an array");
    if (m.cols() == 1 && (j.empty() || !j.front().is_array())) {
        if (static_cast<Eigen::Index>(j.size()) != m.rows()) throw config_error("prior '" + what + "' has wrong length");
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = j[static_cast<std::size_t>(i)].get<double>();
        return;
    }
    if (static_cast<Eigen::Index>(j.size()) != m.rows()) throw config_error("prior '" + what + "' has wrong row count");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (row.is_number()) {
            m.row(i).setConstant(row.get<double>());
            continue;
        }
        if (static_cast<Eigen::Index>(row.size()) != m.cols())
            throw config_error("prior '" + what + "' has wrong column count");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
}

}  // namespace

nlohmann::json to_json(const PriorConfig& prior) {
    nlohmann::json doc;
    for_each_block(prior, [&](const PriorBlock& b, const char* name) {
        doc[name] = {{"family", family_name(b.family)},
                     {"location", matrix_json(b.location)},
                     {"scale", matrix_json(b.scale)}};
    });
    return doc;
}

PriorConfig prior_config_from_json(const nlohmann::json& doc, const ModelSpec& spec) {
    PriorConfig p = PriorConfig::defaults(spec);
    try {
        for_each_block(p, [&](PriorBlock& b, const char* name) {
            if (!doc.contains(name)) return;
            const auto& j = doc.at(name);
            if (j.contains("family") && j.at("family").get<std::string>() != family_name(b.family))
                throw config_error(std::string("prior block '") + name + "' must use the " + family_name(b.family) +
                                   " family");
            if (j.contains("location")) read_matrix(j.at("location"), b.location, std::string(name) + ".location");
            if (j.contains("scale")) read_matrix(j.at("scale"), b.scale, std::string(name) + ".scale");
        });
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("prior config: ") + e.what());
    }
    p.validate(spec);
    return p;
}

}  // namespace cocoafuse
