#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace selnet {

enum class ColumnKind { Numeric, Categorical };

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Categorical;
    std::vector<std::optional<std::string>> cells;  // nullopt = missing ("" or "NA")
    std::vector<double> numeric;                    // parsed values for numeric columns; NaN at missing
};

struct RawTable {
    std::vector<Column> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns[0].cells.size(); }
    bool has_column(const std::string& name) const;
    const Column& column(const std::string& name) const;  // throws on unknown name
};

// RFC-4180-style CSV: quoted fields, "" escapes, embedded separators and
// newlines inside quotes, optional CRLF. Every parse error names the line.
// A column is numeric when every non-missing cell parses as a double.
RawTable load_csv(const std::string& path);
RawTable parse_csv(const std::string& text, const std::string& origin);

struct SplitSpec {
    enum class Kind { Fractions, Counts };
    Kind kind = Kind::Fractions;
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;  // fractions must sum to 1 within 1e-9
    std::size_t train_count = 0;
    std::size_t val_count = 0;  // Counts: test gets the remainder
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Seeded shuffle of [0, m), then contiguous slices. Train/val sizes round to
// nearest; the test split takes the remainder and must be non-empty.
SplitIndices split(std::size_t m, const SplitSpec& spec);

struct PreprocessSpec {
    std::string target_column;
    std::vector<std::string> drop_columns;
    bool standardize_features = true;
    bool standardize_target = true;
};

// Per-source-column transform, fitted on the fit rows only.
struct FeatureBlock {
    std::string source;
    ColumnKind kind = ColumnKind::Numeric;
    double impute_value = 0.0;       // numeric: mean over non-missing fit rows
    std::string impute_token;        // categorical: most frequent fit value (ties -> smallest)
    std::vector<std::string> vocab;  // categorical: sorted fit values; +1 trailing bucket for unseen
};

struct Dataset {
    Tensor X;  // [m x d], every table row transformed
    Tensor y;  // [m x 1], standardized target
    std::vector<std::string> feature_names;
    std::vector<FeatureBlock> blocks;
    std::vector<double> feature_mu, feature_sigma;  // post-encoding, fitted on fit rows
    double target_mu = 0.0;
    double target_sigma = 1.0;

    double to_natural(double standardized_target) const { return standardized_target * target_sigma + target_mu; }
};

// Imputation, one-hot encoding (sorted vocabulary plus an explicit unseen
// bucket) and z-scoring, with all statistics fitted on `fit_rows` and applied
// to the whole table. Constant columns standardize to all zeros.
Dataset preprocess(const RawTable& table, const PreprocessSpec& spec, std::span<const std::size_t> fit_rows);

Tensor gather_rows(const Tensor& X, std::span<const std::size_t> idx);

}  // namespace selnet
