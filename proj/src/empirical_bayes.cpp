#include "cocoafuse/empirical_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

void EBConfig::validate(std::size_t hyper_dim) const {
    if (gamma < 0.0) throw usage_error("eb: gamma must be non-negative");
    if (iterations < 1) throw usage_error("eb: need at least one iteration");
    if (!(step_size > 0.0)) throw usage_error("eb: step size must be positive");
    if (!(max_update > 0.0)) throw usage_error("eb: max_update must be positive");
    if (!mask.empty() && mask.size() != hyper_dim) throw usage_error("eb: mask length does not match hyperparameters");
    inner.validate();
}

std::string EBTrace::to_csv() const {
    std::ostringstream os;
    os << "iterate,objective,ell,entropy,grad_norm,sampler_failed,entropy_collapsed,divergence_warning,best";
    for (const auto& n : names) os << ',' << n;
    os << '\n';
    for (std::size_t k = 0; k < iterates.size(); ++k) {
        const auto& it = iterates[k];
        os << k + 1 << ',' << format_double(it.objective) << ',' << format_double(it.ell) << ','
           << format_double(it.entropy) << ',' << format_double(it.grad_norm) << ',' << it.sampler_failed << ','
           << it.entropy_collapsed << ',' << it.divergence_warning << ',' << (k == best);
        for (double v : it.lambda) os << ',' << format_double(v);
        os << '\n';
    }
    return os.str();
}

double ell_estimate(const PosteriorSample& post, const PriorConfig& prior) {
    if (post.size() == 0) throw usage_error("ell_estimate: empty posterior");
    double total = 0.0;
    for (std::size_t s = 0; s < post.size(); ++s) {
        double ll = 0.0;
        if (post.pointwise_loglik.cols() > 0) ll = post.pointwise_loglik.row(static_cast<Eigen::Index>(s)).sum();
        total += ll + log_prior(post.draw(s), prior);
    }
    return total / static_cast<double>(post.size());
}

double normalized_entropy(std::span<const double> probs) {
    if (probs.size() <= 1) return 1.0;
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return std::min(1.0, h / std::log(static_cast<double>(probs.size())));
}

std::vector<double> average_activation(const ParameterVector& theta, const Dataset& data, const ModelSpec& spec) {
    if (data.size() == 0) throw usage_error("average_activation: no rows");
    std::vector<double> avg(static_cast<std::size_t>(spec.experts), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Weights w = gate_probs(feature_row(data, i).gate, theta.gate);
        for (std::size_t m = 0; m < avg.size(); ++m) avg[m] += w[m];
    }
    for (double& a : avg) a /= static_cast<double>(data.size());
    return avg;
}

EntropyEstimate entropy_penalty(const PosteriorSample& post, const Dataset& data) {
    if (post.size() == 0) throw usage_error("entropy_penalty: empty posterior");
    EntropyEstimate out;
    double sum = 0.0;
    for (std::size_t s = 0; s < post.size(); ++s) {
        const auto avg = average_activation(post.draw(s), data, post.spec);
        const double lh = std::log(normalized_entropy(avg));
        out.log_h.push_back(lh);
        if (!std::isfinite(lh)) out.collapsed = true;
        sum += lh;
    }
    out.value = out.collapsed ? -INFINITY : sum / static_cast<double>(post.size());
    return out;
}

std::vector<double> marginal_grad_estimate(const PosteriorSample& post, const PriorConfig& prior) {
    if (post.size() == 0) throw usage_error("marginal_grad_estimate: empty posterior");
    std::vector<double> g(prior.hyper_dim(), 0.0);
    for (std::size_t s = 0; s < post.size(); ++s) {
        const auto gs = log_prior_hyper_gradient(post.draw(s), prior);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += gs[j];
    }
    for (double& v : g) v /= static_cast<double>(post.size());
    return g;
}

EntropyGradient score_function_gradient(std::span<const double> log_h, const std::vector<std::vector<double>>& scores) {
    if (log_h.size() != scores.size() || scores.empty()) throw usage_error("score gradient: size mismatch");
    EntropyGradient out;
    out.gradient.assign(scores.front().size(), 0.0);
    double mean = 0.0;
    std::size_t kept = 0;
    for (double v : log_h) {
        if (std::isfinite(v)) {
            mean += v;
            ++kept;
        }
    }
    out.excluded = static_cast<int>(log_h.size() - kept);
    out.collapsed = out.excluded > 0;
    if (kept == 0) return out;
    mean /= static_cast<double>(kept);
    const auto finite = [](double v) { return std::isfinite(v); };
    const auto first = std::find_if(log_h.begin(), log_h.end(), finite);
    if (std::all_of(first, log_h.end(), [&](double v) { return !finite(v) || v == *first; })) return out;
    for (std::size_t s = 0; s < scores.size(); ++s) {
        if (!std::isfinite(log_h[s])) continue;
        const double c = log_h[s] - mean;
        for (std::size_t j = 0; j < out.gradient.size(); ++j) out.gradient[j] += c * scores[s][j];
    }
    for (double& v : out.gradient) v /= static_cast<double>(kept);
    return out;
}

EntropyGradient entropy_grad_estimate(const PosteriorSample& post, const PriorConfig& prior, const Dataset& data) {
    const EntropyEstimate h = entropy_penalty(post, data);
    std::vector<std::vector<double>> scores;
    for (std::size_t s = 0; s < post.size(); ++s) scores.push_back(log_prior_hyper_gradient(post.draw(s), prior));
    return score_function_gradient(h.log_h, scores);
}

EBResult tune(const Dataset& data, const ModelSpec& spec, const PriorConfig& initial, const EBConfig& cfg) {
    PosteriorProvider provider = [&](const PriorConfig& prior, int k) {
        SamplerConfig inner = cfg.inner;
        inner.seed = cfg.seed + static_cast<std::uint64_t>(k);
        return sample_posterior(data, spec, prior, inner);
    };
    return tune(data, spec, initial, cfg, provider);
}

EBResult tune(const Dataset& data, const ModelSpec& spec, const PriorConfig& initial, const EBConfig& cfg,
              const PosteriorProvider& provider) {
    initial.validate(spec);
    const std::size_t dim = initial.hyper_dim();
    cfg.validate(dim);
    // Which flat entries are scales.
    std::vector<bool> is_scale;
    for (const PriorBlock* b : {&initial.expert_coeffs, &initial.expert_sigmas, &initial.gate, &initial.behavior}) {
        is_scale.insert(is_scale.end(), static_cast<std::size_t>(b->size()), false);
        is_scale.insert(is_scale.end(), static_cast<std::size_t>(b->size()), true);
    }

    EBResult result;
    result.trace.names = initial.hyper_names();
    PriorConfig current = initial;
    std::vector<double> lambda = current.flatten();

    for (int k = 1; k <= cfg.iterations; ++k) {
        EBIterate it;
        it.lambda = lambda;
        std::vector<double> grad(dim, 0.0);
        try {
            const PosteriorSample post = provider(current, k);
            it.divergence_warning = post.divergence_warning;
            it.ell = ell_estimate(post, current);
            const auto g_ell = marginal_grad_estimate(post, current);
            for (std::size_t j = 0; j < dim; ++j) grad[j] = g_ell[j];
            if (cfg.gamma > 0.0) {
                const EntropyEstimate h = entropy_penalty(post, data);
                it.entropy = h.value;
                it.entropy_collapsed = h.collapsed;
                std::vector<std::vector<double>> scores;
                for (std::size_t s = 0; s < post.size(); ++s)
                    scores.push_back(log_prior_hyper_gradient(post.draw(s), current));
                const auto g_h = score_function_gradient(h.log_h, scores);
                for (std::size_t j = 0; j < dim; ++j) grad[j] += cfg.gamma * g_h.gradient[j];
                it.objective = it.ell + cfg.gamma * h.value;
            } else {
                it.entropy = 0.0;
                it.objective = it.ell;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::sampling && e.kind() != ErrorKind::numerical) throw;
            it.sampler_failed = true;
            it.message = e.what();
            std::fill(grad.begin(), grad.end(), 0.0);
        }

        // Gradient with respect to the ascent coordinates (log for scales).
        double norm2 = 0.0;
        std::vector<double> step(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j) {
            if (!cfg.mask.empty() && !cfg.mask[j]) continue;
            const double gj = is_scale[j] ? grad[j] * lambda[j] : grad[j];
            if (!std::isfinite(gj)) continue;
            norm2 += gj * gj;
            step[j] = gj;
        }
        it.grad_norm = std::sqrt(norm2);
        result.trace.iterates.push_back(it);

        if (k == cfg.iterations) break;
        const double eta = cfg.step_size / std::pow(static_cast<double>(k), cfg.decay);
        for (std::size_t j = 0; j < dim; ++j) {
            const double u = std::clamp(eta * step[j], -cfg.max_update, cfg.max_update);
            if (is_scale[j])
                lambda[j] *= std::exp(u);
            else
                lambda[j] += u;
        }
        current.assign(lambda);
    }

    auto& its = result.trace.iterates;
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < its.size(); ++k) {
        if (its[k].sampler_failed) continue;
        if (!best) {
            best = k;
            continue;
        }
        const bool cand_ok = !its[k].flagged();
        const bool best_ok = !its[*best].flagged();
        if ((cand_ok && !best_ok) || (cand_ok == best_ok && its[k].objective > its[*best].objective)) best = k;
    }
    if (!best) throw Error(ErrorKind::tuning, "tune: every iterate failed to sample");
    result.trace.best = *best;
    result.best = initial;
    result.best.assign(its[*best].lambda);
    return result;
}

}  // namespace cocoafuse
