#pragma once

#include "tabncd/common.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tabncd::data {

enum class ColumnKind { Numeric, Categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> categories;  // Categorical: fixed after fitting
    double mean = 0.0;                    // Numeric: fitted on train rows
    double std = 1.0;
};

// Typed rows as parsed from disk, before any fitting.
struct RawTable {
    std::vector<std::string> feature_names;
    std::vector<ColumnKind> feature_kinds;
    // per row, indexed by position among columns of the matching kind
    std::vector<std::vector<double>> numeric_values;
    std::vector<std::vector<std::string>> categorical_values;
    std::vector<std::string> labels;

    std::size_t n_rows() const { return labels.size(); }
};

struct SplitConfig {
    // raw label values branded unknown; empty -> unknown_fraction of the
    // highest-sorting classes
    std::vector<std::string> unknown_classes;
    double unknown_fraction = 0.5;
    double train_fraction = 0.70;
    std::uint64_t seed = 0;
};

struct TabularDataset {
    Matrix features;             // N x d, post-preprocessing
    std::vector<int> labels;     // remapped ids: known in [0, C^l), unknown in [C^l, C)
    std::vector<std::uint8_t> is_train;
    std::vector<std::uint8_t> is_labelled;  // true <=> class in the known set
    std::vector<int> known_classes;         // remapped ids
    std::vector<int> unknown_classes;
    std::vector<ColumnSpec> column_specs;   // fitted, one per original column
    std::vector<std::string> class_names;   // remapped id -> raw label value
    std::vector<std::string> warnings;

    std::size_t n_rows() const { return labels.size(); }
    int dim() const { return static_cast<int>(features.cols()); }
    int n_known() const { return static_cast<int>(known_classes.size()); }
    int n_unknown() const { return static_cast<int>(unknown_classes.size()); }

    std::vector<int> train_indices() const;
    std::vector<int> train_labelled_indices() const;
    std::vector<int> train_unlabelled_indices() const;
    std::vector<int> test_labelled_indices() const;
    std::vector<int> test_unlabelled_indices() const;

    Matrix rows(const std::vector<int>& indices) const;
    // truth ids for unknown-class rows, compressed to [0, C^u)
    std::vector<int> unknown_truth(const std::vector<int>& indices) const;
};

// Parses a comma-separated file with a header row. The schema must cover every
// non-label column; pre-declared categories make unseen values an error.
RawTable load_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
                  const std::string& label_column);

// Standardizes numeric columns with train-fitted statistics, one-hot encodes
// categoricals, remaps labels, and populates the train/labelled masks.
// test_raw, when given, carries pre-split test rows (no random re-split).
TabularDataset preprocess(const RawTable& raw, const SplitConfig& split,
                          const RawTable* test_raw = nullptr);

struct Batch {
    std::vector<int> rows;            // dataset row indices
    std::vector<int> labelled_pos;    // positions inside `rows`
    std::vector<int> unlabelled_pos;
};

// Seeded permutation of all training rows per epoch, sliced into batches.
class BatchSampler {
  public:
    BatchSampler(const TabularDataset& ds, int batch_size, std::uint64_t seed);

    std::vector<Batch> epoch(int epoch_index) const;
    int batch_size() const { return batch_size_; }
    std::size_t n_train() const { return train_rows_.size(); }

  private:
    std::vector<int> train_rows_;
    std::vector<std::uint8_t> labelled_;  // parallel to train_rows_
    int batch_size_;
    std::uint64_t seed_;
};

}  // namespace tabncd::data
