#include "cocoafuse/metrics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "cocoafuse/error.hpp"
#include "cocoafuse/psis.hpp"

namespace cocoafuse {

namespace {

Estimate sum_estimate(const std::vector<double>& terms) {
    const double n = static_cast<double>(terms.size());
    Estimate e;
    e.value = std::accumulate(terms.begin(), terms.end(), 0.0);
    if (terms.size() < 2) return e;
    const double m = e.value / n;
    double ss = 0.0;
    for (double t : terms) ss += (t - m) * (t - m);
    e.se = std::sqrt(n * ss / (n - 1.0));
    return e;
}

Estimate mean_estimate(const std::vector<double>& terms) {
    const double n = static_cast<double>(terms.size());
    Estimate e;
    e.value = std::accumulate(terms.begin(), terms.end(), 0.0) / n;
    if (terms.size() < 2) return e;
    double ss = 0.0;
    for (double t : terms) ss += (t - e.value) * (t - e.value);
    e.se = std::sqrt(ss / (n - 1.0) / n);
    return e;
}

std::vector<double> column_of(const RowMatrix& m, Eigen::Index j) {
    std::vector<double> c(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index s = 0; s < m.rows(); ++s) c[static_cast<std::size_t>(s)] = m(s, j);
    return c;
}

void check_column(const std::vector<double>& col, Eigen::Index j) {
    for (double v : col)
        if (v > -INFINITY) return;
    throw metric_error("log-likelihood of row " + std::to_string(j) + " is -inf for every draw");
}

}  // namespace

std::vector<double> lppd_pointwise(const RowMatrix& ll) {
    if (ll.rows() < 1 || ll.cols() < 1) throw metric_error("lppd: empty log-likelihood matrix");
    std::vector<double> terms(static_cast<std::size_t>(ll.cols()));
    const double log_s = std::log(static_cast<double>(ll.rows()));
    for (Eigen::Index j = 0; j < ll.cols(); ++j) {
        const auto col = column_of(ll, j);
        check_column(col, j);
        terms[static_cast<std::size_t>(j)] = log_sum_exp(col) - log_s;
    }
    return terms;
}

Estimate lppd(const RowMatrix& ll) { return sum_estimate(lppd_pointwise(ll)); }

LooResult psis_loo(const RowMatrix& ll) {
    if (ll.rows() < 2 || ll.cols() < 1) throw metric_error("psis_loo: need at least two draws");
    LooResult out;
    for (Eigen::Index j = 0; j < ll.cols(); ++j) {
        auto col = column_of(ll, j);
        check_column(col, j);
        std::vector<double> lr(col.size());
        for (std::size_t s = 0; s < col.size(); ++s) lr[s] = -col[s];
        const PsisResult ps = psis_smooth(lr);
        std::vector<double> num(col.size());
        for (std::size_t s = 0; s < col.size(); ++s) num[s] = ps.log_weights[s] + col[s];
        out.pointwise.push_back(log_sum_exp(num) - log_sum_exp(ps.log_weights));
        out.pareto_k.push_back(ps.k);
        if (ps.k > kParetoKThreshold) ++out.high_k;
    }
    const Estimate e = sum_estimate(out.pointwise);
    out.value = e.value;
    out.se = e.se;
    return out;
}

Estimate cic(std::span<const double> y, std::span<const Interval> intervals) {
    if (y.size() != intervals.size() || y.empty()) throw metric_error("cic: size mismatch or empty input");
    double hits = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (intervals[i].first > intervals[i].second) throw metric_error("cic: interval with lo > hi");
        if (y[i] >= intervals[i].first && y[i] <= intervals[i].second) hits += 1.0;
    }
    const double n = static_cast<double>(y.size());
    Estimate e;
    e.value = hits / n;
    e.se = std::sqrt(e.value * (1.0 - e.value) / n);
    return e;
}

Estimate cil(std::span<const Interval> intervals) {
    if (intervals.empty()) throw metric_error("cil: empty input");
    std::vector<double> len;
    for (const auto& iv : intervals) {
        if (iv.first > iv.second) throw metric_error("cil: interval with lo > hi");
        len.push_back(iv.second - iv.first);
    }
    return mean_estimate(len);
}

Estimate emse(std::span<const double> y, const PredictiveDraws& pred) {
    if (y.size() != pred.queries() || y.empty()) throw metric_error("emse: size mismatch or empty input");
    if (pred.draws() < 2) throw metric_error("emse: need at least two draws per point");
    std::vector<double> per_point(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto col = pred.y.col(static_cast<Eigen::Index>(i));
        per_point[i] = (col.array() - y[i]).square().mean();
    }
    return mean_estimate(per_point);
}

double r_squared(std::span<const double> y, std::span<const double> means) {
    if (y.size() != means.size() || y.size() < 2) throw metric_error("r_squared: need two or more matched points");
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - means[i]) * (y[i] - means[i]);
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    if (!(ss_tot > 0.0)) throw metric_error("r_squared: response has zero variance");
    return 1.0 - ss_res / ss_tot;
}

MetricsReport evaluate(const PosteriorSample& post, const Dataset& test, std::uint64_t seed, double level) {
    return evaluate(post, test, posterior_predict(post, test, seed), level);
}

MetricsReport evaluate(const PosteriorSample& post, const Dataset& test, const PredictiveDraws& pred, double level) {
    if (test.size() == 0) throw data_error("evaluate: test set is empty");
    MetricsReport r;
    r.level = level;
    r.n_train = static_cast<std::size_t>(post.pointwise_loglik.cols());
    r.n_test = test.size();
    r.draws = post.size();
    if (post.pointwise_loglik.cols() > 0) {
        const LooResult loo = psis_loo(post.pointwise_loglik);
        r.loo = {loo.value, loo.se};
        r.pareto_k = loo.pareto_k;
        r.high_k = loo.high_k;
    }
    r.lppd = lppd(pointwise_loglik(post, test));
    std::vector<Interval> iv;
    for (std::size_t q = 0; q < pred.queries(); ++q) iv.push_back(credible_interval(pred.column(q), level));
    std::span<const double> y(test.y.data(), test.size());
    r.cic = cic(y, iv);
    r.cil = cil(iv);
    r.emse = emse(y, pred);
    const Eigen::VectorXd means = pred.predictive_mean();
    r.r2 = r_squared(y, std::span<const double>(means.data(), static_cast<std::size_t>(means.size())));
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    auto est = [](const Estimate& e) { return nlohmann::json{{"value", e.value}, {"se", e.se}}; };
    return {{"psis_loo", est(r.loo)},
            {"lppd", est(r.lppd)},
            {"cic", est(r.cic)},
            {"cil", est(r.cil)},
            {"emse", est(r.emse)},
            {"r2", r.r2},
            {"pareto_k", r.pareto_k},
            {"pareto_k_above_0.7", r.high_k},
            {"level", r.level},
            {"n_train", r.n_train},
            {"n_test", r.n_test},
            {"draws", r.draws}};
}

std::string metrics_csv_header() {
    return "model,loo,loo_se,lppd,lppd_se,cic,cic_se,cil,cil_se,emse,emse_se,r2";
}

std::string metrics_csv_row(const std::string& label, const MetricsReport& r) {
    std::ostringstream os;
    os << label;
    for (const Estimate* e : {&r.loo, &r.lppd, &r.cic, &r.cil, &r.emse})
        os << ',' << format_double(e->value) << ',' << format_double(e->se);
    os << ',' << format_double(r.r2);
    return os.str();
}

}  // namespace cocoafuse
