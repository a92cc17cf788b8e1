#pragma once

#include "tabncd/data.hpp"

#include <unordered_map>
#include <vector>

namespace tabncd::augment {

struct AugmentConfig {
    int k_neighbors = 5;
    std::uint64_t seed = 0;
};

// Exact brute-force k nearest rows of `pool` under Euclidean distance,
// excluding exclude_index; ties break toward the lower index. Returns fewer
// than k when the pool is too small.
std::vector<int> k_nearest_neighbors(const Matrix& pool, const RowVector& query, int k,
                                     int exclude_index = -1);

// SMOTE-style synthesis: x + lambda * (nn - x) with the neighbor picked
// uniformly among the k closest same-class pool rows, lambda ~ U(0,1).
// self_indices[i] (when given) is batch row i's own index inside the pool.
Matrix augment_labelled(const Matrix& batch_rows, const std::vector<int>& batch_labels,
                        const Matrix& pool, const std::vector<int>& pool_labels,
                        const AugmentConfig& cfg, Rng& rng,
                        const std::vector<int>* self_indices = nullptr,
                        int* fallback_count = nullptr);

// Same synthesis with neighbors drawn from the unlabelled pool only; no class
// constraint.
Matrix augment_unlabelled(const Matrix& batch_rows, const Matrix& pool,
                          const AugmentConfig& cfg, Rng& rng,
                          const std::vector<int>* self_indices = nullptr,
                          int* fallback_count = nullptr);

// Per-run neighbor cache over the static training pools. Batch rows are
// addressed by dataset row index, so self-exclusion is exact.
class Augmenter {
  public:
    Augmenter(const data::TabularDataset& ds, const AugmentConfig& cfg);

    Matrix augment_labelled(const std::vector<int>& row_ids, Rng& rng) const;
    Matrix augment_unlabelled(const std::vector<int>& row_ids, Rng& rng) const;

    const std::vector<int>& neighbors_of(int row_id) const;
    int fallback_count() const { return fallback_count_; }

  private:
    Matrix synthesize(const std::vector<int>& row_ids, Rng& rng) const;

    const data::TabularDataset* ds_;
    AugmentConfig cfg_;
    std::unordered_map<int, std::vector<int>> neighbors_;
    mutable int fallback_count_ = 0;
};

}  // namespace tabncd::augment
