#include "cocoafuse/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

Table::Table(std::vector<std::string> names) : names_(std::move(names)), columns_(names_.size()) {
    std::set<std::string> seen;
    for (const auto& n : names_)
        if (!seen.insert(n).second) throw data_error("duplicate column name '" + n + "'");
}

bool Table::has(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Table::index(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw data_error("missing column '" + name + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

const std::vector<double>& Table::column(const std::string& name) const { return columns_[index(name)]; }

void Table::add_column(const std::string& name, std::vector<double> values) {
    if (has(name)) throw data_error("duplicate column name '" + name + "'");
    if (!columns_.empty() && values.size() != rows()) throw data_error("column '" + name + "' has wrong length");
    names_.push_back(name);
    columns_.push_back(std::move(values));
}

void Table::set_column(const std::string& name, std::vector<double> values) {
    auto& col = columns_[index(name)];
    if (values.size() != col.size()) throw data_error("column '" + name + "' has wrong length");
    col = std::move(values);
}

void Table::append_row(std::span<const double> row) {
    if (row.size() != names_.size()) throw data_error("row width does not match header");
    for (std::size_t j = 0; j < row.size(); ++j) columns_[j].push_back(row[j]);
}

Table Table::select_rows(std::span<const std::size_t> rows) const {
    Table out(names_);
    out.derived_ = derived_;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        out.columns_[j].reserve(rows.size());
        for (std::size_t r : rows) {
            if (r >= this->rows()) throw usage_error("row index out of range");
            out.columns_[j].push_back(columns_[j][r]);
        }
    }
    return out;
}

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out(s.substr(b, e - b));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        std::size_t comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool parse_double(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    const char* first = cell.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace

Table load_csv(const std::string& path, std::span<const std::string> required) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        header = split_line(line);
        break;
    }
    if (header.empty()) throw data_error("'" + path + "': missing header row");
    Table table(header);
    for (const auto& r : required)
        if (!table.has(r)) throw data_error("'" + path + "': missing required column '" + r + "'");

    std::vector<double> row(header.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != header.size())
            throw data_error("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!parse_double(cells[j], row[j]))
                throw data_error("'" + path + "' line " + std::to_string(line_no) + ": column '" + header[j] +
                                 "' value '" + cells[j] + "' is not a finite number");
        }
        table.append_row(row);
    }
    return table;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

void write_csv(const std::string& path, const Table& table) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path + "'");
    const auto& names = table.names();
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
    out << '\n';
    for (std::size_t i = 0; i < table.rows(); ++i) {
        for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << format_double(table.column(j)[i]);
        out << '\n';
    }
}

std::size_t FeatureMapSpec::width() const {
    std::size_t w = 0;
    for (const auto& t : transforms) w += t.width();
    return w;
}

FeatureConfig FeatureConfig::single_covariate(const std::string& covariate, const std::string& response) {
    FeatureConfig c;
    c.response = response;
    FeatureTransform id{TransformKind::identity, covariate};
    FeatureTransform one{TransformKind::constant_one, ""};
    c.expert.transforms = {id};
    c.gate.transforms = {one, id};
    c.behavior.transforms = {one, id};
    return c;
}

double quadratic_decorrelated(double t) { return 64.0 / 9.0 * t * (0.75 - t); }

namespace {

struct Moments {
    double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0, max_abs = 0.0;
};

Moments moments(const std::vector<double>& v, std::span<const std::size_t> rows) {
    if (rows.empty()) throw data_error("cannot fit feature constants on zero training rows");
    Moments m;
    m.min = m.max = v[rows[0]];
    for (std::size_t r : rows) {
        m.mean += v[r];
        m.min = std::min(m.min, v[r]);
        m.max = std::max(m.max, v[r]);
        m.max_abs = std::max(m.max_abs, std::abs(v[r]));
    }
    m.mean /= static_cast<double>(rows.size());
    double ss = 0.0;
    for (std::size_t r : rows) ss += (v[r] - m.mean) * (v[r] - m.mean);
    m.sd = rows.size() > 1 ? std::sqrt(ss / static_cast<double>(rows.size() - 1)) : 0.0;
    return m;
}

void fit_scheme(NormalizationScheme scheme, const Moments& m, const std::string& what, double& offset,
                double& scale) {
    switch (scheme) {
        case NormalizationScheme::none:
            offset = 0.0;
            scale = 1.0;
            return;
        case NormalizationScheme::standardize:
            if (!(m.sd > 0.0)) throw data_error("constant column '" + what + "' cannot be standardized");
            offset = m.mean;
            scale = m.sd;
            return;
        case NormalizationScheme::max_abs:
            if (!(m.max_abs > 0.0)) throw data_error("column '" + what + "' is identically zero");
            offset = 0.0;
            scale = m.max_abs;
            return;
        case NormalizationScheme::min_max:
            if (!(m.max > m.min)) throw data_error("constant column '" + what + "' cannot be min-max scaled");
            offset = m.min;
            scale = m.max - m.min;
            return;
    }
}

Table normalized_table(const Table& raw, const std::vector<ColumnNormalization>& norms) {
    Table out = raw;
    for (const auto& n : norms) {
        auto col = raw.column(n.column);
        for (double& v : col) v = (v - n.offset) / n.scale;
        out.set_column(n.column, std::move(col));
    }
    out.mark_derived();
    return out;
}

void check_source_table(const Table& raw, const FeatureConfig& config) {
    if (config.schema_version != 1) throw config_error("unsupported feature schema version");
    if (raw.derived()) throw usage_error("table was already produced by a feature pipeline");
}

}  // namespace

FeatureConfig fit_features(const Table& raw, const FeatureConfig& config, std::span<const std::size_t> train_rows) {
    check_source_table(raw, config);
    if (config.fitted) throw usage_error("feature pipeline is already fitted; apply it instead of refitting");
    if (!raw.has(config.response)) throw data_error("missing response column '" + config.response + "'");
    FeatureConfig out = config;
    for (auto& n : out.normalizations) {
        const std::string& src = n.reference.empty() ? n.column : n.reference;
        raw.index(n.column);
        fit_scheme(n.scheme, moments(raw.column(src), train_rows), src, n.offset, n.scale);
        n.fitted = true;
    }
    const Table norm = normalized_table(raw, out.normalizations);
    auto fit_map = [&](FeatureMapSpec& map) {
        for (auto& t : map.transforms) {
            if (t.kind == TransformKind::constant_one) {
                t.fitted = true;
                continue;
            }
            const auto& col = norm.column(t.column);
            if (t.kind == TransformKind::standardize) {
                fit_scheme(NormalizationScheme::standardize, moments(col, train_rows), t.column, t.offset, t.scale);
            } else if (t.kind == TransformKind::max_abs_scale) {
                fit_scheme(NormalizationScheme::max_abs, moments(col, train_rows), t.column, t.offset, t.scale);
            } else if (t.kind == TransformKind::sin_cos && !(t.period > 0.0)) {
                throw config_error("sin_cos transform on '" + t.column + "' needs a positive period");
            }
            t.fitted = true;
        }
    };
    for (const auto& t : out.expert.transforms)
        if (t.kind == TransformKind::constant_one)
            throw config_error("expert feature maps must not contain constant_one (experts carry an intercept)");
    auto ensure_constant = [](FeatureMapSpec& map) {
        if (map.transforms.empty() || map.transforms.front().kind != TransformKind::constant_one)
            map.transforms.insert(map.transforms.begin(), FeatureTransform{TransformKind::constant_one, ""});
    };
    ensure_constant(out.gate);
    ensure_constant(out.behavior);
    fit_map(out.expert);
    fit_map(out.gate);
    fit_map(out.behavior);
    out.fitted = true;
    return out;
}

namespace {

void build_matrix(const Table& norm, const FeatureMapSpec& map, RowMatrix& mat, std::vector<std::string>& names) {
    const std::size_t n = norm.rows();
    mat.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(map.width()));
    names.clear();
    Eigen::Index c = 0;
    for (const auto& t : map.transforms) {
        if (t.kind == TransformKind::constant_one) {
            mat.col(c++).setOnes();
            names.push_back("bias");
            continue;
        }
        const auto& col = norm.column(t.column);
        switch (t.kind) {
            case TransformKind::identity:
                for (std::size_t i = 0; i < n; ++i) mat(i, c) = col[i];
                names.push_back(t.column);
                ++c;
                break;
            case TransformKind::standardize:
            case TransformKind::max_abs_scale:
                for (std::size_t i = 0; i < n; ++i) mat(i, c) = (col[i] - t.offset) / t.scale;
                names.push_back(t.column);
                ++c;
                break;
            case TransformKind::sin_cos: {
                const double w = 2.0 * std::numbers::pi / t.period;
                for (std::size_t i = 0; i < n; ++i) {
                    mat(i, c) = std::sin(w * col[i]);
                    mat(i, c + 1) = std::cos(w * col[i]);
                }
                names.push_back("sin_" + t.column);
                names.push_back("cos_" + t.column);
                c += 2;
                break;
            }
            case TransformKind::quadratic_decorrelated:
                for (std::size_t i = 0; i < n; ++i) mat(i, c) = quadratic_decorrelated(col[i]);
                names.push_back(t.column + "_quad");
                ++c;
                break;
            case TransformKind::constant_one:
                break;
        }
    }
    if (!mat.allFinite()) throw data_error("derived feature matrix contains non-finite values");
}

}  // namespace

Dataset apply_features(const Table& raw, const FeatureConfig& fitted) {
    if (!fitted.fitted) throw usage_error("feature pipeline must be fitted before it is applied");
    check_source_table(raw, fitted);
    Dataset ds;
    ds.raw = normalized_table(raw, fitted.normalizations);
    const auto& resp = ds.raw.column(fitted.response);
    ds.y = Eigen::Map<const Eigen::VectorXd>(resp.data(), static_cast<Eigen::Index>(resp.size()));
    build_matrix(ds.raw, fitted.expert, ds.expert_x, ds.expert_names);
    build_matrix(ds.raw, fitted.gate, ds.gate_x, ds.gate_names);
    build_matrix(ds.raw, fitted.behavior, ds.behavior_x, ds.behavior_names);
    ds.features = fitted;
    ds.derived = true;
    return ds;
}

std::pair<Dataset, Dataset> fit_apply_features(const Table& raw, const FeatureConfig& config, const Split& s) {
    const FeatureConfig fitted = fit_features(raw, config, s.train);
    return {apply_features(raw.select_rows(s.train), fitted), apply_features(raw.select_rows(s.test), fitted)};
}

Dataset Dataset::from_matrices(Eigen::VectorXd y, RowMatrix expert_x, const RowMatrix& gate_inputs,
                               const RowMatrix& behavior_inputs) {
    const Eigen::Index n = y.size();
    if (expert_x.rows() != n || gate_inputs.rows() != n || behavior_inputs.rows() != n)
        throw usage_error("from_matrices: row counts disagree");
    Dataset ds;
    ds.y = std::move(y);
    ds.expert_x = std::move(expert_x);
    ds.gate_x.resize(n, gate_inputs.cols() + 1);
    ds.gate_x.col(0).setOnes();
    ds.gate_x.rightCols(gate_inputs.cols()) = gate_inputs;
    ds.behavior_x.resize(n, behavior_inputs.cols() + 1);
    ds.behavior_x.col(0).setOnes();
    ds.behavior_x.rightCols(behavior_inputs.cols()) = behavior_inputs;
    for (Eigen::Index j = 0; j < ds.expert_x.cols(); ++j) ds.expert_names.push_back("x" + std::to_string(j + 1));
    ds.gate_names.push_back("bias");
    for (Eigen::Index j = 0; j < gate_inputs.cols(); ++j) ds.gate_names.push_back("x" + std::to_string(j + 1));
    ds.behavior_names.push_back("bias");
    for (Eigen::Index j = 0; j < behavior_inputs.cols(); ++j) ds.behavior_names.push_back("x" + std::to_string(j + 1));
    if (!ds.y.allFinite() || !ds.expert_x.allFinite() || !ds.gate_x.allFinite() || !ds.behavior_x.allFinite())
        throw data_error("dataset contains non-finite values");
    ds.derived = true;
    return ds;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
    Dataset out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.y.resize(n);
    out.expert_x.resize(n, expert_x.cols());
    out.gate_x.resize(n, gate_x.cols());
    out.behavior_x.resize(n, behavior_x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
        if (r >= y.size()) throw usage_error("row index out of range");
        out.y(i) = y(r);
        out.expert_x.row(i) = expert_x.row(r);
        out.gate_x.row(i) = gate_x.row(r);
        out.behavior_x.row(i) = behavior_x.row(r);
    }
    out.expert_names = expert_names;
    out.gate_names = gate_names;
    out.behavior_names = behavior_names;
    if (raw.rows() == size()) out.raw = raw.select_rows(rows);
    out.features = features;
    out.derived = derived;
    return out;
}

namespace {

void check_fraction(double p) {
    if (!(p > 0.0 && p < 1.0)) throw usage_error("split fraction must lie in (0, 1)");
}

}  // namespace

Split split(std::size_t n_rows, const RandomFraction& policy) {
    check_fraction(policy.train_fraction);
    if (n_rows == 0) throw usage_error("cannot split an empty table");
    std::vector<std::size_t> idx(n_rows);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(policy.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(policy.train_fraction * static_cast<double>(n_rows)));
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Split split(std::size_t n_rows, const HeadTail& policy) {
    check_fraction(policy.train_fraction);
    if (n_rows == 0) throw usage_error("cannot split an empty table");
    const auto head = static_cast<std::size_t>(std::floor(policy.train_fraction * static_cast<double>(n_rows)));
    Split s;
    for (std::size_t i = 0; i < n_rows; ++i) (i < head ? s.train : s.test).push_back(i);
    return s;
}

Split split(std::size_t n_rows, const IndexList& policy) {
    std::vector<char> seen(n_rows, 0);
    for (const auto* part : {&policy.train, &policy.test})
        for (std::size_t i : *part) {
            if (i >= n_rows) throw usage_error("split index out of range");
            if (seen[i]) throw usage_error("split index lists overlap or repeat");
            seen[i] = 1;
        }
    return {policy.train, policy.test};
}

Split split(std::size_t n_rows, const HeadRandomTailEquispaced& policy) {
    check_fraction(policy.head_fraction);
    const auto head = static_cast<std::size_t>(std::floor(policy.head_fraction * static_cast<double>(n_rows)));
    const std::size_t tail = n_rows - head;
    if (policy.n_train > head || policy.n_test > tail || policy.n_test == 0)
        throw usage_error("split sizes exceed the available head/tail rows");
    std::vector<std::size_t> idx(head);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(policy.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(policy.n_train));
    std::sort(s.train.begin(), s.train.end());
    for (std::size_t i = 0; i < policy.n_test; ++i) s.test.push_back(head + i * tail / policy.n_test);
    return s;
}

namespace {

const char* scheme_name(NormalizationScheme s) {
    switch (s) {
        case NormalizationScheme::none: return "none";
        case NormalizationScheme::standardize: return "standardize";
        case NormalizationScheme::max_abs: return "max_abs";
        case NormalizationScheme::min_max: return "min_max";
    }
    return "none";
}

NormalizationScheme scheme_from(const std::string& s) {
    if (s == "none") return NormalizationScheme::none;
    if (s == "standardize") return NormalizationScheme::standardize;
    if (s == "max_abs") return NormalizationScheme::max_abs;
    if (s == "min_max") return NormalizationScheme::min_max;
    throw config_error("unknown normalization scheme '" + s + "'");
}

const char* kind_name(TransformKind k) {
    switch (k) {
        case TransformKind::constant_one: return "constant_one";
        case TransformKind::identity: return "identity";
        case TransformKind::standardize: return "standardize";
        case TransformKind::max_abs_scale: return "max_abs_scale";
        case TransformKind::sin_cos: return "sin_cos";
        case TransformKind::quadratic_decorrelated: return "quadratic_decorrelated";
    }
    return "identity";
}

TransformKind kind_from(const std::string& s) {
    for (auto k : {TransformKind::constant_one, TransformKind::identity, TransformKind::standardize,
                   TransformKind::max_abs_scale, TransformKind::sin_cos, TransformKind::quadratic_decorrelated})
        if (s == kind_name(k)) return k;
    throw config_error("unknown feature transform '" + s + "'");
}

nlohmann::json map_to_json(const FeatureMapSpec& map) {
    auto arr = nlohmann::json::array();
    for (const auto& t : map.transforms) {
        nlohmann::json j{{"type", kind_name(t.kind)}};
        if (t.kind != TransformKind::constant_one) j["column"] = t.column;
        if (t.kind == TransformKind::sin_cos) j["period"] = t.period;
        if (t.fitted && (t.kind == TransformKind::standardize || t.kind == TransformKind::max_abs_scale)) {
            j["offset"] = t.offset;
            j["scale"] = t.scale;
        }
        arr.push_back(j);
    }
    return arr;
}

FeatureMapSpec map_from_json(const nlohmann::json& arr, bool fitted) {
    FeatureMapSpec map;
    if (arr.is_null()) return map;
    if (!arr.is_array()) throw config_error("feature map must be an array of transforms");
    for (const auto& j : arr) {
        FeatureTransform t;
        if (j.is_string()) {
            t.kind = TransformKind::identity;
            t.column = j.get<std::string>();
        } else {
            t.kind = kind_from(j.at("type").get<std::string>());
            if (t.kind != TransformKind::constant_one) t.column = j.at("column").get<std::string>();
            t.period = j.value("period", 0.0);
            t.offset = j.value("offset", 0.0);
            t.scale = j.value("scale", 1.0);
        }
        if (t.kind == TransformKind::sin_cos && !(t.period > 0.0))
            throw config_error("sin_cos transform needs a positive period");
        t.fitted = fitted;
        map.transforms.push_back(t);
    }
    return map;
}

}  // namespace

nlohmann::json to_json(const FeatureConfig& config) {
    nlohmann::json doc;
    doc["schema_version"] = config.schema_version;
    doc["response"] = config.response;
    doc["fitted"] = config.fitted;
    auto norms = nlohmann::json::array();
    for (const auto& n : config.normalizations) {
        nlohmann::json j{{"column", n.column}, {"scheme", scheme_name(n.scheme)}};
        if (!n.reference.empty()) j["reference"] = n.reference;
        if (n.fitted) {
            j["offset"] = n.offset;
            j["scale"] = n.scale;
        }
        norms.push_back(j);
    }
    doc["normalizations"] = norms;
    doc["expert"] = map_to_json(config.expert);
    doc["gate"] = map_to_json(config.gate);
    doc["behavior"] = map_to_json(config.behavior);
    return doc;
}

FeatureConfig feature_config_from_json(const nlohmann::json& doc) {
    try {
        FeatureConfig c;
        c.schema_version = doc.value("schema_version", 1);
        c.response = doc.value("response", std::string("y"));
        c.fitted = doc.value("fitted", false);
        if (doc.contains("normalizations")) {
            for (const auto& j : doc.at("normalizations")) {
                ColumnNormalization n;
                n.column = j.at("column").get<std::string>();
                n.scheme = scheme_from(j.value("scheme", std::string("none")));
                n.reference = j.value("reference", std::string());
                n.offset = j.value("offset", 0.0);
                n.scale = j.value("scale", 1.0);
                n.fitted = c.fitted;
                c.normalizations.push_back(n);
            }
        }
        c.expert = map_from_json(doc.value("expert", nlohmann::json()), c.fitted);
        c.gate = map_from_json(doc.value("gate", nlohmann::json()), c.fitted);
        c.behavior = map_from_json(doc.value("behavior", nlohmann::json()), c.fitted);
        if (c.schema_version != 1) throw config_error("unsupported feature schema version");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("feature config: ") + e.what());
    }
}

}  // namespace cocoafuse
