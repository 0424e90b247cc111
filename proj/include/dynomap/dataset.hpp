#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynomap/common.hpp"

namespace dynomap {

// Dense samples-by-features table with encoded labels. Values are stored
// row-major (n_samples x n_features), always double: parsing and column
// statistics stay in full precision regardless of the training scalar type.
struct FeatureMatrix {
    std::vector<double> values;            // n * g, row-major
    std::vector<std::string> feature_names;
    std::vector<std::string> sample_ids;
    std::vector<int> labels;               // in [0, C)
    std::vector<std::string> class_names;  // sorted; labels index into this
    bool standardized = false;

    int n() const { return (int)sample_ids.size(); }
    int g() const { return (int)feature_names.size(); }
    int classes() const { return (int)class_names.size(); }

    double at(int row, int col) const { return values[(size_t)row * g() + col]; }
    double& at(int row, int col) { return values[(size_t)row * g() + col]; }

    // Row subset (labels and ids follow; feature set unchanged).
    FeatureMatrix rows(const std::vector<int>& idx) const;
};

// Per-column standardization statistics fitted on a training split.
struct ColumnStats {
    std::vector<std::string> feature_names;
    std::vector<double> mu;
    std::vector<double> sigma; // population std

    std::string to_json() const;
    static ColumnStats from_json(const std::string& text);
};

struct FoldAssignment {
    std::vector<int> fold_of_sample; // in [0, K)
    int k = 0;
    uint64_t seed = 0;

    std::vector<int> test_indices(int fold) const;
    std::vector<int> train_indices(int fold) const;
};

// Parse a delimited text table with a mandatory header row. Every column
// except label_column must be numeric and finite. Labels are encoded by
// sorted class-name order; sample ids are the 0-based row numbers.
FeatureMatrix load_table(const std::string& path, const std::string& label_column,
                         char delimiter = ',');

// Keep the n columns with the largest population variance, computed on raw
// values. Zero-variance columns are dropped first; ties keep original column
// order; output columns are ordered by descending variance.
FeatureMatrix select_hvg(const FeatureMatrix& m, int n);

// Z-score every column. Without stats_from, statistics are fitted on m
// (population std; zero-std columns are an error). With stats_from, the
// supplied statistics are applied as-is (test folds reuse train statistics).
std::pair<FeatureMatrix, ColumnStats>
standardize(const FeatureMatrix& m, const std::optional<ColumnStats>& stats_from = std::nullopt);

// Deterministic stratified K-fold assignment: per-fold class counts differ
// from an exact split by at most one sample per class.
FoldAssignment stratified_folds(const std::vector<int>& labels, int k, uint64_t seed);

// Column subset/reorder by name (applies a trained feature selection to a
// freshly loaded table). Missing names are an error.
FeatureMatrix select_features(const FeatureMatrix& m, const std::vector<std::string>& names);

} // namespace dynomap
