#include "cocoafuse/serialize.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cocoafuse/diagnostics.hpp"
#include "cocoafuse/error.hpp"
#include "cocoafuse/predictive.hpp"

namespace cocoafuse {

nlohmann::json to_json(const SamplerConfig& cfg) {
    return {{"chains", cfg.chains},
            {"warmup", cfg.warmup},
            {"draws", cfg.draws},
            {"target_accept", cfg.target_accept},
            {"max_leapfrog", cfg.max_leapfrog},
            {"seed", cfg.seed}};
}

SamplerConfig sampler_config_from_json(const nlohmann::json& doc, SamplerConfig c) {
    try {
        c.chains = doc.value("chains", c.chains);
        c.warmup = doc.value("warmup", c.warmup);
        c.draws = doc.value("draws", c.draws);
        c.target_accept = doc.value("target_accept", c.target_accept);
        c.max_leapfrog = doc.value("max_leapfrog", c.max_leapfrog);
        c.seed = doc.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("sampler config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw config_error(e.what());
    }
    return c;
}

std::vector<ParameterSummary> summarize(const PosteriorSample& post) {
    std::vector<ParameterSummary> out;
    for (std::size_t j = 0; j < static_cast<std::size_t>(post.draws.cols()); ++j) {
        ParameterSummary s;
        s.name = j < post.names.size() ? post.names[j] : "p" + std::to_string(j);
        const auto chains = post.parameter_chains(j);
        std::vector<double> pooled;
        for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
        double m = 0.0;
        for (double v : pooled) m += v;
        m /= static_cast<double>(pooled.size());
        double ss = 0.0;
        for (double v : pooled) ss += (v - m) * (v - m);
        s.mean = m;
        s.sd = pooled.size() > 1 ? std::sqrt(ss / static_cast<double>(pooled.size() - 1)) : 0.0;
        s.q05 = empirical_quantile(pooled, 0.05);
        s.q95 = empirical_quantile(pooled, 0.95);
        if (chains.size() >= 2 && chains.front().size() >= 4) {
            const RhatResult r = split_rhat(chains);
            s.rhat = r.value;
            s.degenerate = r.degenerate;
        }
        if (!chains.empty() && chains.front().size() >= 4) s.ess = effective_sample_size(chains);
        out.push_back(s);
    }
    return out;
}

std::string summary_csv(const std::vector<ParameterSummary>& rows) {
    std::ostringstream os;
    os << "parameter,mean,sd,q05,q95,rhat,ess,degenerate\n";
    for (const auto& r : rows)
        os << r.name << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ',' << format_double(r.q05) << ','
           << format_double(r.q95) << ',' << format_double(r.rhat) << ',' << format_double(r.ess) << ','
           << r.degenerate << '\n';
    return os.str();
}

namespace {

Table matrix_table(const RowMatrix& m, const std::vector<std::string>& names) {
    Table t(names);
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        t.append_row(row);
    }
    return t;
}

RowMatrix table_matrix(const Table& t) {
    RowMatrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
    for (std::size_t j = 0; j < t.cols(); ++j)
        for (std::size_t i = 0; i < t.rows(); ++i)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.column(j)[i];
    return m;
}

}  // namespace

void write_posterior(const std::string& dir, const PosteriorSample& post) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json diag = nlohmann::json::array();
    for (const auto& d : post.diagnostics)
        diag.push_back({{"divergences", d.divergences},
                        {"mean_accept", d.mean_accept},
                        {"step_size", d.step_size},
                        {"inv_metric", d.inv_metric},
                        {"divergence_warning", d.divergence_warning}});
    nlohmann::json header = {{"spec", to_json(post.spec)},
                             {"prior", to_json(post.prior)},
                             {"sampler", to_json(post.config)},
                             {"chains", post.chains},
                             {"draws_per_chain", post.draws_per_chain},
                             {"names", post.names},
                             {"n_points", post.pointwise_loglik.cols()},
                             {"divergence_warning", post.divergence_warning},
                             {"diagnostics", diag}};
    std::ofstream(fs::path(dir) / "posterior.json") << header.dump(2) << '\n';
    write_csv((fs::path(dir) / "draws.csv").string(), matrix_table(post.draws, post.names));
    std::vector<std::string> cols;
    for (Eigen::Index j = 0; j < post.pointwise_loglik.cols(); ++j) cols.push_back("n" + std::to_string(j + 1));
    if (!cols.empty()) write_csv((fs::path(dir) / "loglik.csv").string(), matrix_table(post.pointwise_loglik, cols));
}

PosteriorSample read_posterior(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "posterior.json");
    if (!in) throw data_error("cannot open posterior header in '" + dir + "'");
    PosteriorSample post;
    try {
        const auto header = nlohmann::json::parse(in);
        post.spec = model_spec_from_json(header.at("spec"));
        post.prior = prior_config_from_json(header.at("prior"), post.spec);
        post.config = sampler_config_from_json(header.at("sampler"));
        post.chains = header.at("chains").get<int>();
        post.draws_per_chain = header.at("draws_per_chain").get<int>();
        post.names = header.at("names").get<std::vector<std::string>>();
        post.divergence_warning = header.value("divergence_warning", false);
        for (const auto& d : header.value("diagnostics", nlohmann::json::array())) {
            ChainDiagnostics c;
            c.divergences = d.value("divergences", 0);
            c.mean_accept = d.value("mean_accept", 0.0);
            c.step_size = d.value("step_size", 0.0);
            c.inv_metric = d.value("inv_metric", std::vector<double>{});
            c.divergence_warning = d.value("divergence_warning", false);
            post.diagnostics.push_back(c);
        }
        const auto n_points = header.value("n_points", 0);
        post.draws = table_matrix(load_csv((fs::path(dir) / "draws.csv").string()));
        if (n_points > 0)
            post.pointwise_loglik = table_matrix(load_csv((fs::path(dir) / "loglik.csv").string()));
        else
            post.pointwise_loglik.resize(post.draws.rows(), 0);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("posterior header in '" + dir + "': " + e.what());
    }
    if (post.draws.rows() != static_cast<Eigen::Index>(post.chains) * post.draws_per_chain ||
        post.draws.cols() != post.spec.free_dim())
        throw data_error("posterior draws in '" + dir + "' do not match the header");
    return post;
}

}  // namespace cocoafuse
