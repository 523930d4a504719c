#include "cocoafuse/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "cocoafuse/diagnostics.hpp"
#include "cocoafuse/empirical_bayes.hpp"
#include "cocoafuse/metrics.hpp"
#include "cocoafuse/model.hpp"
#include "cocoafuse/predictive.hpp"
#include "cocoafuse/priors.hpp"
#include "cocoafuse/selection.hpp"
#include "cocoafuse/serialize.hpp"
#include "cocoafuse/synth.hpp"

namespace cocoafuse {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config: return kExitConfig;
        case ErrorKind::data:
        case ErrorKind::metric: return kExitData;
        case ErrorKind::convergence: return kExitConvergence;
        case ErrorKind::numerical:
        case ErrorKind::sampling:
        case ErrorKind::tuning: return kExitNumerical;
    }
    return kExitNumerical;
}

json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw config_error("'" + path.string() + "': " + e.what());
    }
}

namespace {

struct Context {
    json config;
    fs::path base;  // relative paths in the config resolve against this
    fs::path out;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path.string() + "'");
    out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void prepare_output(const fs::path& dir, bool force) {
    std::error_code ec;
    if (fs::exists(dir, ec)) {
        if (!fs::is_directory(dir)) throw config_error("output '" + dir.string() + "' is not a directory");
        if (!fs::is_empty(dir)) {
            if (!force) throw config_error("output directory '" + dir.string() + "' is not empty; pass --force to replace it");
            fs::remove_all(dir);
        }
    }
    fs::create_directories(dir, ec);
    if (ec) throw config_error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

Context open(const CommandOptions& opts) {
    if (opts.config_path.empty()) throw config_error("--config is required");
    if (opts.output.empty()) throw config_error("--output is required");
    Context ctx;
    ctx.config = load_json_file(opts.config_path);
    if (!ctx.config.is_object()) throw config_error("config must be a JSON object");
    ctx.base = fs::absolute(opts.config_path).parent_path();
    ctx.out = opts.output;
    return ctx;
}

template <class T>
T get_or(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(std::string("config field '") + key + "': " + e.what());
    }
}

std::uint64_t command_seed(const CommandOptions& opts, const json& cfg, std::uint64_t fallback = 1) {
    if (opts.seed) return *opts.seed;
    return get_or<std::uint64_t>(cfg, "seed", fallback);
}

// --- data -------------------------------------------------------------------

struct Prepared {
    Table train_raw;
    Table test_raw;
    Dataset train;
    Dataset test;
    FeatureConfig fitted;
};

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

FeatureConfig features_from(const json& cfg) {
    if (!cfg.contains("features")) return FeatureConfig::single_covariate("x", "y");
    FeatureConfig f = feature_config_from_json(cfg.at("features"));
    f.fitted = false;
    return f;
}

Prepared prepare(const Context& ctx) {
    if (!ctx.config.contains("data")) throw config_error("config needs a 'data' section");
    const json& data = ctx.config.at("data");
    const FeatureConfig features = features_from(ctx.config);
    const std::vector<std::string> required{features.response};

    Prepared p;
    if (data.contains("train")) {
        p.train_raw = load_csv(resolve(ctx.base, get_or<std::string>(data, "train", "")).string(), required);
        if (data.contains("test"))
            p.test_raw = load_csv(resolve(ctx.base, get_or<std::string>(data, "test", "")).string(), required);
        else
            p.test_raw = p.train_raw.select_rows(std::vector<std::size_t>{});
    } else if (data.contains("path")) {
        const Table raw = load_csv(resolve(ctx.base, get_or<std::string>(data, "path", "")).string(), required);
        const Split s = split_from_json(data.value("split", json{{"policy", "random_fraction"}}), raw);
        p.train_raw = raw.select_rows(s.train);
        p.test_raw = raw.select_rows(s.test);
    } else {
        throw config_error("'data' needs either 'train' or 'path'");
    }
    if (p.train_raw.rows() == 0) throw data_error("training set is empty");
    p.fitted = fit_features(p.train_raw, features, all_rows(p.train_raw.rows()));
    p.train = apply_features(p.train_raw, p.fitted);
    if (p.test_raw.rows() > 0) p.test = apply_features(p.test_raw, p.fitted);
    return p;
}

ModelSpec spec_from(const json& cfg, const Dataset& train) {
    const ModelSpec base = model_spec_from_json(cfg.value("model", json::object()));
    ModelSpec spec = ModelSpec::for_dataset(train, base.experts, base.mode, base.constraint);
    spec.features = train.features;
    return spec;
}

PriorConfig prior_from(const Context& ctx, const ModelSpec& spec) {
    if (!ctx.config.contains("priors")) return PriorConfig::defaults(spec);
    const json& p = ctx.config.at("priors");
    if (p.is_string()) return prior_config_from_json(load_json_file(resolve(ctx.base, p.get<std::string>())), spec);
    return prior_config_from_json(p, spec);
}

SamplerConfig sampler_from(const CommandOptions& opts, const json& cfg) {
    SamplerConfig s = sampler_config_from_json(cfg.value("sampler", json::object()));
    if (opts.seed) s.seed = *opts.seed;
    else if (cfg.contains("seed") && !cfg.value("sampler", json::object()).contains("seed"))
        s.seed = get_or<std::uint64_t>(cfg, "seed", s.seed);
    return s;
}

void write_inputs(const fs::path& out, const Prepared& p) {
    write_json(out / "features.json", to_json(p.fitted));
    write_csv((out / "train.csv").string(), p.train_raw);
    write_csv((out / "test.csv").string(), p.test_raw);
}

double max_rhat(const std::vector<ParameterSummary>& rows) {
    double worst = 1.0;
    for (const auto& r : rows)
        if (!r.degenerate && std::isfinite(r.rhat)) worst = std::max(worst, r.rhat);
    return worst;
}

json diagnostics_json(const PosteriorSample& post, double rhat) {
    json chains = json::array();
    for (const auto& c : post.diagnostics)
        chains.push_back({{"divergences", c.divergences}, {"mean_accept", c.mean_accept}, {"step_size", c.step_size}});
    return {{"max_rhat", rhat},
            {"rhat_threshold", kRhatThreshold},
            {"converged", rhat <= kRhatThreshold},
            {"divergence_warning", post.divergence_warning},
            {"chains", chains}};
}

// --- evaluate helpers ---------------------------------------------------------

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    return empirical_quantile(v, 0.5);
}

std::string default_grid_column(const FeatureConfig& f) {
    for (const auto* map : {&f.gate, &f.expert, &f.behavior})
        for (const auto& t : map->transforms)
            if (t.kind != TransformKind::constant_one && !t.column.empty()) return t.column;
    throw config_error("cannot pick a grid column; set grid.column");
}

constexpr double kBands[] = {0.025, 0.05, 0.95, 0.975};

std::string band_header() { return "mean,q025,q05,q95,q975"; }

std::string band_row(const std::vector<double>& draws, double mean) {
    std::string s = format_double(mean);
    for (double p : kBands) s += "," + format_double(empirical_quantile(draws, p));
    return s;
}

void write_curves(const fs::path& path, const json& grid_cfg, const PosteriorSample& post, const Table& train_raw,
                  const FeatureConfig& fitted, std::uint64_t seed) {
    const std::string column = grid_cfg.contains("column") ? get_or<std::string>(grid_cfg, "column", "")
                                                           : default_grid_column(fitted);
    if (!train_raw.has(column)) throw config_error("grid column '" + column + "' is not in the training data");
    const auto& xs = train_raw.column(column);
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    const double lo = get_or<double>(grid_cfg, "lo", *mn);
    const double hi = get_or<double>(grid_cfg, "hi", *mx);
    const int points = get_or<int>(grid_cfg, "points", 200);
    if (points < 2 || !(hi > lo)) throw config_error("grid needs points >= 2 and hi > lo");

    Table grid(train_raw.names());
    std::vector<double> row(train_raw.cols());
    for (std::size_t j = 0; j < train_raw.cols(); ++j) row[j] = median(train_raw.column(j));
    row[train_raw.index(fitted.response)] = 0.0;
    const std::size_t gi = train_raw.index(column);
    for (int i = 0; i < points; ++i) {
        row[gi] = lo + (hi - lo) * i / (points - 1);
        grid.append_row(row);
    }
    const Dataset q = apply_features(grid, fitted);
    const PredictiveDraws pred = posterior_predict(post, q, seed);
    const Eigen::VectorXd mean = pred.predictive_mean();

    const int m = post.spec.experts;
    const bool fusion = post.spec.has_behavior();
    std::ostringstream out;
    out << column << "," << band_header();
    for (int k = 0; k < m; ++k) out << ",gate" << k + 1;
    if (fusion) out << ",beta";
    out << "\n";

    std::vector<ParameterVector> thetas;
    thetas.reserve(post.size());
    for (std::size_t s = 0; s < post.size(); ++s) thetas.push_back(post.draw(s));
    for (int i = 0; i < points; ++i) {
        const auto qi = static_cast<std::size_t>(i);
        out << format_double(grid.column(gi)[qi]) << "," << band_row(pred.column(qi), mean(i));
        const FeatureRow fr = feature_row(q, qi);
        std::vector<double> gate(static_cast<std::size_t>(m), 0.0);
        double beta = 0.0;
        for (const auto& th : thetas) {
            const Weights w = gate_probs(fr.gate, th.gate);
            for (int k = 0; k < m; ++k) gate[static_cast<std::size_t>(k)] += w[static_cast<std::size_t>(k)];
            if (fusion) beta += behavior_beta(fr.behavior, th.behavior).beta();
        }
        const double n = static_cast<double>(thetas.size());
        for (double g : gate) out << "," << format_double(g / n);
        if (fusion) out << "," << format_double(beta / n);
        out << "\n";
    }
    write_text(path, out.str());
}

// --- tune helpers ---------------------------------------------------------------

EBConfig eb_from(const CommandOptions& opts, const json& cfg, const PriorConfig& prior) {
    const json eb = cfg.value("eb", json::object());
    EBConfig c;
    c.gamma = get_or<double>(eb, "gamma", c.gamma);
    c.iterations = get_or<int>(eb, "iterations", c.iterations);
    c.step_size = get_or<double>(eb, "step_size", c.step_size);
    c.decay = get_or<double>(eb, "decay", c.decay);
    c.max_update = get_or<double>(eb, "max_update", c.max_update);
    if (eb.contains("inner")) c.inner = sampler_config_from_json(eb.at("inner"), c.inner);
    c.seed = opts.seed ? *opts.seed : get_or<std::uint64_t>(eb, "seed", get_or<std::uint64_t>(cfg, "seed", c.seed));
    c.inner.seed = c.seed;
    if (eb.contains("mask")) {
        // prefixes of hyperparameter names, e.g. "gate." or "expert_sigmas.location"
        const auto prefixes = get_or<std::vector<std::string>>(eb, "mask", {});
        const auto names = prior.hyper_names();
        c.mask.assign(names.size(), false);
        for (std::size_t i = 0; i < names.size(); ++i)
            for (const auto& p : prefixes)
                if (names[i].rfind(p, 0) == 0) c.mask[i] = true;
        if (std::none_of(c.mask.begin(), c.mask.end(), [](bool b) { return b; }))
            throw config_error("eb.mask matches no hyperparameter");
    }
    try {
        c.validate(prior.hyper_dim());
    } catch (const Error& e) {
        throw config_error(std::string("eb: ") + e.what());
    }
    return c;
}

// --- select helpers ----------------------------------------------------------------

Trial trial_from_fit(const std::string& id, const fs::path& dir) {
    const PosteriorSample post = read_posterior((dir / "posterior").string());
    const LooResult loo = psis_loo(post.pointwise_loglik);
    return {id, loo.value, loo.se, post.spec.experts, post.spec.free_dim()};
}

}  // namespace

Split split_from_json(const json& doc, const Table& raw) {
    const std::size_t n = raw.rows();
    const std::string policy = get_or<std::string>(doc, "policy", "random_fraction");
    if (policy == "random_fraction") {
        RandomFraction p;
        p.train_fraction = get_or<double>(doc, "train_fraction", p.train_fraction);
        p.seed = get_or<std::uint64_t>(doc, "seed", p.seed);
        return split(n, p);
    }
    if (policy == "head_tail") {
        HeadTail p;
        p.train_fraction = get_or<double>(doc, "train_fraction", p.train_fraction);
        return split(n, p);
    }
    if (policy == "indices") {
        IndexList p;
        p.train = get_or<std::vector<std::size_t>>(doc, "train", {});
        p.test = get_or<std::vector<std::size_t>>(doc, "test", {});
        return split(n, p);
    }
    if (policy == "head_random_tail_equispaced") {
        HeadRandomTailEquispaced p;
        p.head_fraction = get_or<double>(doc, "head_fraction", p.head_fraction);
        p.n_train = get_or<std::size_t>(doc, "n_train", p.n_train);
        p.n_test = get_or<std::size_t>(doc, "n_test", p.n_test);
        p.seed = get_or<std::uint64_t>(doc, "seed", p.seed);
        return split(n, p);
    }
    if (policy == "random_subset") {
        // disjoint random draws of n_train and n_test rows
        const auto n_train = get_or<std::size_t>(doc, "n_train", n / 2);
        const auto n_test = get_or<std::size_t>(doc, "n_test", n - n_train);
        if (n_train == 0 || n_train + n_test > n) throw config_error("random_subset asks for more rows than the data has");
        std::vector<std::size_t> rows = all_rows(n);
        std::mt19937_64 rng(get_or<std::uint64_t>(doc, "seed", 0));
        std::shuffle(rows.begin(), rows.end(), rng);
        IndexList p;
        p.train.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        p.test.assign(rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                      rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
        std::sort(p.train.begin(), p.train.end());
        std::sort(p.test.begin(), p.test.end());
        return split(n, p);
    }
    if (policy == "column") {
        // nonzero marks a test row
        const std::string col = get_or<std::string>(doc, "column", "is_test");
        if (!raw.has(col)) throw data_error("split column '" + col + "' is missing");
        IndexList p;
        const auto& v = raw.column(col);
        for (std::size_t i = 0; i < n; ++i) (v[i] != 0.0 ? p.test : p.train).push_back(i);
        return split(n, p);
    }
    throw config_error("unknown split policy '" + policy + "'");
}

int cmd_simulate(const CommandOptions& opts) {
    Context ctx = open(opts);
    const std::string gen = get_or<std::string>(ctx.config, "generator", "switch");
    json cfg = ctx.config;
    cfg.erase("generator");
    if (opts.seed) cfg["seed"] = *opts.seed;
    SynthData data;
    json echo;
    if (gen == "switch") {
        const SwitchConfig c = switch_config_from_json(cfg);
        data = gen_switch(c);
        echo = to_json(c);
    } else if (gen == "transition") {
        const TransitionConfig c = transition_config_from_json(cfg);
        data = gen_transition(c);
        echo = to_json(c);
    } else {
        throw config_error("unknown generator '" + gen + "'");
    }
    prepare_output(ctx.out, opts.force);
    write_csv((ctx.out / "train.csv").string(), data.train);
    write_csv((ctx.out / "test.csv").string(), data.test);
    write_json(ctx.out / "synth.json", echo);
    return kExitOk;
}

int cmd_fit(const CommandOptions& opts) {
    Context ctx = open(opts);
    const Prepared p = prepare(ctx);
    const ModelSpec spec = spec_from(ctx.config, p.train);
    const PriorConfig prior = prior_from(ctx, spec);
    const SamplerConfig scfg = sampler_from(opts, ctx.config);
    prepare_output(ctx.out, opts.force);

    const PosteriorSample post = sample_posterior(p.train, spec, prior, scfg);

    json echo = ctx.config;
    echo["resolved"] = {{"model", to_json(spec)}, {"priors", to_json(prior)}, {"sampler", to_json(scfg)}};
    write_json(ctx.out / "config.json", echo);
    write_inputs(ctx.out, p);
    write_posterior((ctx.out / "posterior").string(), post);
    const auto rows = summarize(post);
    write_text(ctx.out / "rhat.csv", summary_csv(rows));
    const double rhat = max_rhat(rows);
    write_json(ctx.out / "diagnostics.json", diagnostics_json(post, rhat));

    if (post.divergence_warning) std::cerr << "warning: divergent transitions after warmup\n";
    if (rhat > kRhatThreshold) {
        std::cerr << "max R-hat " << rhat << " exceeds " << kRhatThreshold << "\n";
        if (!opts.allow_nonconverged) return kExitConvergence;
    }
    return kExitOk;
}

int cmd_evaluate(const CommandOptions& opts) {
    Context ctx = open(opts);
    const json& cfg = ctx.config;
    if (!cfg.contains("fit")) throw config_error("evaluate needs 'fit' (a fit output directory)");
    const fs::path fit_dir = resolve(ctx.base, get_or<std::string>(cfg, "fit", ""));
    const PosteriorSample post = read_posterior((fit_dir / "posterior").string());
    const FeatureConfig fitted = feature_config_from_json(load_json_file(fit_dir / "features.json"));
    const fs::path test_path = cfg.contains("test") ? resolve(ctx.base, get_or<std::string>(cfg, "test", ""))
                                                    : fit_dir / "test.csv";
    const Table test_raw = load_csv(test_path.string(), std::vector<std::string>{fitted.response});
    if (test_raw.rows() == 0) throw data_error("test set '" + test_path.string() + "' is empty");
    const Dataset test = apply_features(test_raw, fitted);
    try {
        post.spec.check_dataset(test);
    } catch (const Error& e) {
        throw data_error(std::string("test data does not match the fitted model: ") + e.what());
    }
    const double level = get_or<double>(cfg, "level", 0.95);
    if (!(level > 0.0 && level < 1.0)) throw config_error("level must lie in (0, 1)");
    const std::uint64_t seed = command_seed(opts, cfg);
    const std::string label = get_or<std::string>(cfg, "label", fit_dir.filename().string());

    const PredictiveDraws pred = posterior_predict(post, test, seed);
    const MetricsReport report = evaluate(post, test, pred, level);

    prepare_output(ctx.out, opts.force);
    json doc = to_json(report);
    doc["label"] = label;
    write_json(ctx.out / "metrics.json", doc);
    write_text(ctx.out / "metrics.csv", metrics_csv_header() + "\n" + metrics_csv_row(label, report) + "\n");

    std::ostringstream rows;
    rows << "row,y," << band_header() << "\n";
    const Eigen::VectorXd mean = pred.predictive_mean();
    for (std::size_t q = 0; q < pred.queries(); ++q)
        rows << q << "," << format_double(test.y(static_cast<Eigen::Index>(q))) << ","
             << band_row(pred.column(q), mean(static_cast<Eigen::Index>(q))) << "\n";
    write_text(ctx.out / "predictive.csv", rows.str());

    const Table train_raw = load_csv((fit_dir / "train.csv").string());
    write_curves(ctx.out / "curves.csv", cfg.value("grid", json::object()), post, train_raw, fitted, seed + 1);
    return kExitOk;
}

int cmd_tune(const CommandOptions& opts) {
    Context ctx = open(opts);
    const Prepared p = prepare(ctx);
    const ModelSpec spec = spec_from(ctx.config, p.train);
    const PriorConfig initial = prior_from(ctx, spec);
    const EBConfig eb = eb_from(opts, ctx.config, initial);
    prepare_output(ctx.out, opts.force);

    const EBResult r = tune(p.train, spec, initial, eb);
    write_json(ctx.out / "prior.json", to_json(r.best));
    write_text(ctx.out / "trace.csv", r.trace.to_csv());
    json echo = ctx.config;
    echo["resolved"] = {{"model", to_json(spec)}, {"initial_priors", to_json(initial)}, {"best_iterate", r.trace.best}};
    write_json(ctx.out / "config.json", echo);
    write_json(ctx.out / "features.json", to_json(p.fitted));
    return kExitOk;
}

int cmd_select(const CommandOptions& opts) {
    Context ctx = open(opts);
    const json& cfg = ctx.config;
    if (!cfg.contains("trials")) throw config_error("select needs 'trials'");
    const json& t = cfg.at("trials");
    std::vector<Trial> trials;
    if (t.is_string()) {
        trials = load_trials(resolve(ctx.base, t.get<std::string>()).string());
    } else if (t.is_array()) {
        json plain = json::array();
        for (const auto& e : t) {
            if (e.is_object() && e.contains("fit")) {
                const std::string id = get_or<std::string>(e, "id", get_or<std::string>(e, "fit", ""));
                trials.push_back(trial_from_fit(id, resolve(ctx.base, get_or<std::string>(e, "fit", ""))));
            } else {
                plain.push_back(e);
            }
        }
        if (!plain.empty()) {
            const auto more = trials_from_json(plain);
            trials.insert(trials.end(), more.begin(), more.end());
        }
    } else {
        throw config_error("'trials' must be a manifest path or an array");
    }
    const double tau = get_or<double>(cfg, "tau", 0.5);
    const SelectionResult r = select(trials, tau);
    prepare_output(ctx.out, opts.force);
    write_json(ctx.out / "selection.json", to_json(r));
    std::cout << r.selected.id << "\n";
    return kExitOk;
}

}  // namespace cocoafuse
