#pragma once

// Tabular data ingestion, feature engineering and train/test splitting.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cocoafuse {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Named numeric columns of equal length.
class Table {
public:
    Table() = default;
    explicit Table(std::vector<std::string> names);

    std::size_t rows() const { return columns_.empty() ? 0 : columns_.front().size(); }
    std::size_t cols() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    bool has(const std::string& name) const;
    std::size_t index(const std::string& name) const;
    const std::vector<double>& column(const std::string& name) const;
    const std::vector<double>& column(std::size_t i) const { return columns_[i]; }

    void add_column(const std::string& name, std::vector<double> values);
    void set_column(const std::string& name, std::vector<double> values);
    void append_row(std::span<const double> row);

    Table select_rows(std::span<const std::size_t> rows) const;

    /// Set on tables produced by a feature pipeline; such tables are not
    /// accepted as pipeline input again.
    bool derived() const { return derived_; }
    void mark_derived() { derived_ = true; }

private:
    bool derived_ = false;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> columns_;
};

/// Reads a comma-separated file with a header row. Every cell must parse as a
/// finite or NaN-free double; failures name the offending line.
/// `required` lists columns that must be present (e.g. the response).
Table load_csv(const std::string& path, std::span<const std::string> required = {});

/// Shortest round-trip formatting; re-reading reproduces the exact doubles.
void write_csv(const std::string& path, const Table& table);
std::string format_double(double v);

enum class NormalizationScheme { none, standardize, max_abs, min_max };

/// Column-level rescaling applied before feature maps. Constants are fitted on
/// training rows only. `reference`, when set, fits the constants on another
/// column (e.g. response scaled by the largest theoretical value).
struct ColumnNormalization {
    std::string column;
    NormalizationScheme scheme = NormalizationScheme::none;
    std::string reference;
    // fitted: value -> (value - offset) / scale
    double offset = 0.0;
    double scale = 1.0;
    bool fitted = false;
};

enum class TransformKind { constant_one, identity, standardize, max_abs_scale, sin_cos, quadratic_decorrelated };

struct FeatureTransform {
    TransformKind kind = TransformKind::identity;
    std::string column;
    double period = 0.0;  // sin_cos only
    // fitted constants for standardize / max_abs_scale
    double offset = 0.0;
    double scale = 1.0;
    bool fitted = false;

    std::size_t width() const { return kind == TransformKind::sin_cos ? 2 : 1; }
};

struct FeatureMapSpec {
    std::vector<FeatureTransform> transforms;

    std::size_t width() const;
};

/// Full declarative feature pipeline. Expert maps carry no constant column
/// (the intercept is part of each expert); gate and behaviour maps always start
/// with constant_one, which is prepended when omitted.
struct FeatureConfig {
    std::string response = "y";
    std::vector<ColumnNormalization> normalizations;
    FeatureMapSpec expert;
    FeatureMapSpec gate;
    FeatureMapSpec behavior;
    int schema_version = 1;
    bool fitted = false;

    /// Simple pipeline: identity of `covariate` for experts, constant + identity
    /// for gate and behaviour.
    static FeatureConfig single_covariate(const std::string& covariate, const std::string& response = "y");
};

/// Response plus derived feature matrices. Gate/behaviour matrices include the
/// leading constant column.
struct Dataset {
    Eigen::VectorXd y;
    RowMatrix expert_x;
    RowMatrix gate_x;
    RowMatrix behavior_x;
    std::vector<std::string> expert_names;
    std::vector<std::string> gate_names;
    std::vector<std::string> behavior_names;
    Table raw;               // normalized source columns for these rows
    FeatureConfig features;  // fitted pipeline that produced the matrices
    bool derived = false;

    std::size_t size() const { return static_cast<std::size_t>(y.size()); }
    std::size_t expert_dim() const { return static_cast<std::size_t>(expert_x.cols()); }
    std::size_t gate_dim() const { return static_cast<std::size_t>(gate_x.cols()); }
    std::size_t behavior_dim() const { return static_cast<std::size_t>(behavior_x.cols()); }

    /// Assemble directly from matrices (tests and synthetic use). A constant
    /// column is prepended to gate and behaviour inputs.
    static Dataset from_matrices(Eigen::VectorXd y, RowMatrix expert_x, const RowMatrix& gate_inputs,
                                 const RowMatrix& behavior_inputs);

    Dataset select_rows(std::span<const std::size_t> rows) const;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Split policies.
struct RandomFraction {
    double train_fraction = 0.5;
    std::uint64_t seed = 0;
};
struct HeadTail {
    double train_fraction = 0.8;
};
struct IndexList {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
/// Random training rows from the head fraction, equispaced test rows from the tail.
struct HeadRandomTailEquispaced {
    double head_fraction = 0.8;
    std::size_t n_train = 1000;
    std::size_t n_test = 250;
    std::uint64_t seed = 0;
};

Split split(std::size_t n_rows, const RandomFraction& policy);
Split split(std::size_t n_rows, const HeadTail& policy);
Split split(std::size_t n_rows, const IndexList& policy);
Split split(std::size_t n_rows, const HeadRandomTailEquispaced& policy);

/// Fits normalization and transform constants on the training rows of `raw`.
FeatureConfig fit_features(const Table& raw, const FeatureConfig& config, std::span<const std::size_t> train_rows);

/// Applies an already fitted pipeline to `raw` (all rows).
Dataset apply_features(const Table& raw, const FeatureConfig& fitted);

/// fit_features on split.train, then apply to both halves.
std::pair<Dataset, Dataset> fit_apply_features(const Table& raw, const FeatureConfig& config, const Split& split);

/// q(t) = (64/9) t (3/4 - t): uncorrelated with t when t ~ U[0, 1].
double quadratic_decorrelated(double t);

// JSON schema for FeatureConfig (and the fitted normalization record).
nlohmann::json to_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(const nlohmann::json& doc);

}  // namespace cocoafuse
