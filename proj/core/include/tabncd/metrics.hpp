#pragma once

#include "tabncd/data.hpp"

#include <string>
#include <utility>
#include <vector>

namespace tabncd::metrics {

// Exact min-cost bijection rows -> columns (augmenting-path algorithm, O(c^3)).
// Rectangular inputs are padded internally with zero-cost slots.
std::vector<int> hungarian_assignment(const Matrix& cost);

struct AccResult {
    double acc = 0.0;
    double bacc = 0.0;
    std::vector<std::pair<int, int>> mapping;  // (cluster id, matched truth id)
};

// Hungarian-matched clustering accuracy and balanced accuracy (macro recall
// under the same mapping).
AccResult clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// Normalized mutual information, arithmetic-mean normalizer. Conventions:
// both partitions single-cluster -> 1; exactly one constant -> 0.
double nmi(const std::vector<int>& pred, const std::vector<int>& truth);

// Adjusted Rand index from pair-counting contingency sums.
double ari(const std::vector<int>& pred, const std::vector<int>& truth);

struct EvalReport {
    double bacc = 0.0;
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    std::vector<std::pair<int, int>> mapping;  // (cluster id, unknown class id)
    int n_eval = 0;
    std::uint64_t seed = 0;
    std::string run_id;
    std::string nmi_variant = "arithmetic";
};

// Scores predictions over exactly the unlabelled test subset of ds.
// pred_clusters must be ordered like ds.test_unlabelled_indices().
EvalReport evaluate(const std::vector<int>& pred_clusters, const data::TabularDataset& ds,
                    std::uint64_t seed = 0, const std::string& run_id = "");

}  // namespace tabncd::metrics
