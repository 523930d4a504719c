#include "cocoafuse/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

void SamplerConfig::validate() const {
    if (chains < 1) throw usage_error("sampler: need at least one chain");
    if (warmup < 100) throw usage_error("sampler: warmup must be at least 100 iterations");
    if (draws < 100) throw usage_error("sampler: need at least 100 kept draws per chain");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw usage_error("sampler: target acceptance must be in (0, 1)");
    if (max_leapfrog < 1) throw usage_error("sampler: max_leapfrog must be positive");
}

std::mt19937_64 chain_rng(std::uint64_t seed, int chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

int worker_threads(int chains, int requested) {
    int n = requested;
    if (n <= 0) {
        if (const char* env = std::getenv("COCOAFUSE_THREADS")) n = std::atoi(env);
    }
    if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return std::clamp(n, 1, std::max(1, chains));
}

namespace {

constexpr double kDivergenceThreshold = 1000.0;

// Dual averaging of log step size.
class StepSizeAdapter {
public:
    void restart(double step) {
        mu_ = std::log(10.0 * step);
        log_step_bar_ = 0.0;
        h_bar_ = 0.0;
        counter_ = 0;
    }

    double update(double accept_prob, double target) {
        ++counter_;
        const double t = static_cast<double>(counter_);
        const double eta = 1.0 / (t + kT0);
        h_bar_ = (1.0 - eta) * h_bar_ + eta * (target - accept_prob);
        const double log_step = mu_ - std::sqrt(t) / kGamma * h_bar_;
        const double w = std::pow(t, -kKappa);
        log_step_bar_ = w * log_step + (1.0 - w) * log_step_bar_;
        return std::exp(log_step);
    }

    double final_step() const { return std::exp(log_step_bar_); }

private:
    static constexpr double kGamma = 0.05;
    static constexpr double kT0 = 10.0;
    static constexpr double kKappa = 0.75;
    double mu_ = 0.0;
    double log_step_bar_ = 0.0;
    double h_bar_ = 0.0;
    long counter_ = 0;
};

// Welford accumulator for the diagonal metric.
class VarianceWindow {
public:
    explicit VarianceWindow(std::size_t d) : mean_(d, 0.0), m2_(d, 0.0) {}
    void reset() {
        std::fill(mean_.begin(), mean_.end(), 0.0);
        std::fill(m2_.begin(), m2_.end(), 0.0);
        n_ = 0;
    }
    void add(std::span<const double> x) {
        ++n_;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double delta = x[i] - mean_[i];
            mean_[i] += delta / static_cast<double>(n_);
            m2_[i] += delta * (x[i] - mean_[i]);
        }
    }
    // Variance shrunk towards 1e-3 as in common practice for short windows.
    std::vector<double> regularized() const {
        std::vector<double> v(mean_.size(), 1.0);
        if (n_ < 3) return v;
        const double n = static_cast<double>(n_);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double var = m2_[i] / (n - 1.0);
            v[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
        }
        return v;
    }

private:
    std::vector<double> mean_, m2_;
    long n_ = 0;
};

struct Transition {
    double accept_prob = 0.0;
    double abs_energy_error = 0.0;
    bool divergent = false;
};

class Chain {
public:
    Chain(const LogDensity& target, std::vector<double> init, std::mt19937_64& rng)
        : target_(target), rng_(rng), q_(std::move(init)), inv_metric_(q_.size(), 1.0) {
        current_ = target_.evaluate(q_);
        if (current_.divergent || !std::isfinite(current_.value))
            throw Error(ErrorKind::sampling, "sampler: initial point has non-finite log density");
    }

    const std::vector<double>& position() const { return q_; }
    void set_inv_metric(std::vector<double> m) { inv_metric_ = std::move(m); }
    const std::vector<double>& inv_metric() const { return inv_metric_; }

    Transition transition(double step, int n_steps) {
        const std::size_t d = q_.size();
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> p(d);
        for (std::size_t i = 0; i < d; ++i) p[i] = normal(rng_) / std::sqrt(inv_metric_[i]);
        const double h0 = -current_.value + kinetic(p);

        std::vector<double> q = q_;
        LogDensityResult state = current_;
        Transition tr;
        for (int s = 0; s < n_steps; ++s) {
            for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * step * state.gradient[i];
            for (std::size_t i = 0; i < d; ++i) q[i] += step * inv_metric_[i] * p[i];
            state = target_.evaluate(q);
            if (state.divergent) {
                tr.divergent = true;
                break;
            }
            for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * step * state.gradient[i];
            const double h = -state.value + kinetic(p);
            if (!std::isfinite(h) || std::abs(h - h0) > kDivergenceThreshold) {
                tr.divergent = true;
                break;
            }
        }
        if (tr.divergent) {
            tr.accept_prob = 0.0;
            tr.abs_energy_error = INFINITY;
            return tr;
        }
        const double h1 = -state.value + kinetic(p);
        const double delta = h0 - h1;
        tr.abs_energy_error = std::abs(delta);
        tr.accept_prob = delta >= 0.0 ? 1.0 : std::exp(delta);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        if (unif(rng_) < tr.accept_prob) {
            q_ = std::move(q);
            current_ = std::move(state);
        }
        return tr;
    }

    // Step-size doubling/halving until the one-step acceptance crosses 0.5.
    double reasonable_step(double step) {
        const std::size_t d = q_.size();
        std::normal_distribution<double> normal(0.0, 1.0);
        auto log_accept = [&](double eps) {
            std::vector<double> p(d);
            for (std::size_t i = 0; i < d; ++i) p[i] = normal(rng_) / std::sqrt(inv_metric_[i]);
            const double h0 = -current_.value + kinetic(p);
            std::vector<double> q = q_;
            for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * current_.gradient[i];
            for (std::size_t i = 0; i < d; ++i) q[i] += eps * inv_metric_[i] * p[i];
            const auto st = target_.evaluate(q);
            if (st.divergent) return -HUGE_VAL;
            for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * st.gradient[i];
            const double h = -st.value + kinetic(p);
            return std::isfinite(h) ? h0 - h : -HUGE_VAL;
        };
        double la = log_accept(step);
        const double dir = la > std::log(0.5) ? 1.0 : -1.0;
        for (int it = 0; it < 60; ++it) {
            if (dir > 0 ? !(la > std::log(0.5)) : (la > std::log(0.5))) break;
            step *= std::pow(2.0, dir);
            if (step < 1e-10 || step > 1e7) break;
            la = log_accept(step);
        }
        return std::clamp(step, 1e-10, 1e7);
    }

private:
    double kinetic(const std::vector<double>& p) const {
        double k = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) k += inv_metric_[i] * p[i] * p[i];
        return 0.5 * k;
    }

    const LogDensity& target_;
    std::mt19937_64& rng_;
    std::vector<double> q_;
    std::vector<double> inv_metric_;
    LogDensityResult current_;
};

struct ChainOutput {
    RowMatrix draws;
    ChainDiagnostics diag;
    std::string error;
};

ChainOutput run_chain(const LogDensity& target, const ChainInit& init, const SamplerConfig& cfg, int chain_index) {
    ChainOutput out;
    std::mt19937_64 rng = chain_rng(cfg.seed, chain_index);
    auto start = init(chain_index, rng);
    if (start.size() != target.dim()) throw usage_error("sampler: initial point has wrong dimension");
    Chain chain(target, std::move(start), rng);
    std::uniform_int_distribution<int> steps_dist(1, cfg.max_leapfrog);

    // Warmup: [0, a) step size only; [a, b) first metric window; [b, c) second
    // metric window from the second half of warmup; [c, W) step size only.
    const int w = cfg.warmup;
    const int a = static_cast<int>(0.15 * w);
    const int b = w / 2;
    const int c = static_cast<int>(0.7 * w);

    StepSizeAdapter adapter;
    double step = chain.reasonable_step(1.0);
    adapter.restart(step);
    VarianceWindow window(target.dim());
    for (int it = 0; it < w; ++it) {
        const Transition tr = chain.transition(step, steps_dist(rng));
        step = adapter.update(tr.accept_prob, cfg.target_accept);
        if (it >= a && it < c) window.add(chain.position());
        if (it + 1 == b || it + 1 == c) {
            chain.set_inv_metric(window.regularized());
            window.reset();
            step = chain.reasonable_step(step);
            adapter.restart(step);
        }
    }
    step = adapter.final_step();

    const std::size_t d = target.dim();
    out.draws.resize(cfg.draws, static_cast<Eigen::Index>(d));
    double accept_sum = 0.0;
    for (int it = 0; it < cfg.draws; ++it) {
        const Transition tr = chain.transition(step, steps_dist(rng));
        accept_sum += tr.accept_prob;
        if (tr.divergent) ++out.diag.divergences;
        out.diag.abs_energy_error.push_back(tr.abs_energy_error);
        const auto& q = chain.position();
        for (std::size_t i = 0; i < d; ++i) out.draws(it, static_cast<Eigen::Index>(i)) = q[i];
    }
    out.diag.mean_accept = accept_sum / cfg.draws;
    out.diag.step_size = step;
    out.diag.inv_metric = chain.inv_metric();
    out.diag.divergence_warning = out.diag.divergences > cfg.draws / 10;
    if (out.diag.divergences == cfg.draws)
        out.error = "sampler: chain " + std::to_string(chain_index) + " produced only divergent transitions";
    return out;
}

}  // namespace

HmcRun run_hmc(const LogDensity& target, const ChainInit& init, const SamplerConfig& cfg) {
    cfg.validate();
    std::vector<ChainOutput> outputs(static_cast<std::size_t>(cfg.chains));
    std::vector<std::string> errors(outputs.size());
    const int workers = worker_threads(cfg.chains, cfg.threads);
    auto work = [&](int first) {
        for (int ch = first; ch < cfg.chains; ch += workers) {
            try {
                outputs[static_cast<std::size_t>(ch)] = run_chain(target, init, cfg, ch);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(ch)] = e.what();
            }
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work, t);
    }
    HmcRun run;
    for (std::size_t ch = 0; ch < outputs.size(); ++ch) {
        if (!errors[ch].empty()) throw Error(ErrorKind::sampling, errors[ch]);
        if (!outputs[ch].error.empty()) throw Error(ErrorKind::sampling, outputs[ch].error);
        run.draws.push_back(std::move(outputs[ch].draws));
        run.chains.push_back(std::move(outputs[ch].diag));
    }
    return run;
}

ParameterVector PosteriorSample::draw(std::size_t s) const {
    const auto row = draws.row(static_cast<Eigen::Index>(s));
    return ParameterVector::unflatten(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), spec);
}

std::vector<std::vector<double>> PosteriorSample::parameter_chains(std::size_t index) const {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(chains));
    for (int c = 0; c < chains; ++c)
        for (int s = 0; s < draws_per_chain; ++s)
            out[static_cast<std::size_t>(c)].push_back(draws(c * draws_per_chain + s, static_cast<Eigen::Index>(index)));
    return out;
}

PosteriorSample sample_posterior(const Dataset& data, const ModelSpec& spec, const PriorConfig& prior,
                                 const SamplerConfig& cfg) {
    cfg.validate();
    spec.check_dataset(data);
    prior.validate(spec);
    ModelLogDensity target(data, prior, spec);

    ChainInit init = [&](int, std::mt19937_64& rng) {
        std::normal_distribution<double> jitter(0.0, 0.1);
        for (int attempt = 0; attempt < 100; ++attempt) {
            auto z = unconstrain(sample_prior(prior, spec, rng), spec);
            for (double& v : z) v += jitter(rng);
            const auto r = target.evaluate(z);
            if (!r.divergent && std::isfinite(r.value)) return z;
        }
        throw Error(ErrorKind::sampling, "sampler: could not find a finite initial point in 100 prior draws");
    };
    HmcRun run = run_hmc(target, init, cfg);

    PosteriorSample post;
    post.spec = spec;
    post.prior = prior;
    post.config = cfg;
    post.names = parameter_names(spec, data.expert_names, data.gate_names, data.behavior_names);
    post.chains = cfg.chains;
    post.draws_per_chain = cfg.draws;
    const auto total = static_cast<Eigen::Index>(cfg.chains) * cfg.draws;
    post.draws.resize(total, spec.free_dim());
    post.pointwise_loglik.resize(total, static_cast<Eigen::Index>(data.size()));
    for (int c = 0; c < cfg.chains; ++c) {
        for (int s = 0; s < cfg.draws; ++s) {
            const auto row = run.draws[static_cast<std::size_t>(c)].row(s);
            const ParameterVector theta =
                constrain(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), spec);
            const auto flat = theta.flatten(spec);
            const Eigen::Index r = static_cast<Eigen::Index>(c) * cfg.draws + s;
            for (std::size_t i = 0; i < flat.size(); ++i) post.draws(r, static_cast<Eigen::Index>(i)) = flat[i];
            if (data.size() > 0) post.pointwise_loglik.row(r) = pointwise_log_likelihood(data, theta, spec).transpose();
        }
        post.divergence_warning = post.divergence_warning || run.chains[static_cast<std::size_t>(c)].divergence_warning;
    }
    post.diagnostics = std::move(run.chains);
    return post;
}

RowMatrix pointwise_loglik(const PosteriorSample& post, const Dataset& data) {
    post.spec.check_dataset(data);
    RowMatrix out(static_cast<Eigen::Index>(post.size()), static_cast<Eigen::Index>(data.size()));
    for (std::size_t s = 0; s < post.size(); ++s)
        out.row(static_cast<Eigen::Index>(s)) = pointwise_log_likelihood(data, post.draw(s), post.spec).transpose();
    return out;
}

}  // namespace cocoafuse
