#pragma once

#include "tabncd/common.hpp"

#include <optional>
#include <vector>

namespace tabncd::pseudo {

struct TopKConfig {
    enum class Mode { TopK, Threshold };

    double topk_percent = 10.0;  // in (0, 100]
    Mode mode = Mode::TopK;
    double lambda = 0.9;  // Threshold mode: minimum similarity for a positive
};

// S_ij = z_i.z_j / (|z_i||z_j|), norms guarded by 1e-12.
Matrix cosine_similarity_matrix(const Matrix& z);

struct PairwisePseudoLabels {
    std::vector<int> indices;  // caller-supplied row ids of the sub-batch
    Matrix y_hat;              // m x m binary, diagonal unused
    int k_effective = 0;       // TopK mode only
};

// Row-wise positives for the k_effective most similar other rows,
// k_effective = max(1, floor(topk_percent/100 * (m-1))); ties break toward the
// lower index. Returns nullopt when m < 2 (skip-batch signal).
std::optional<PairwisePseudoLabels> assign_pseudo_labels(
    const Matrix& z, const TopKConfig& cfg, std::vector<int> indices = {});

// P_ij = probs.row(i) . probs.row(j); symmetric, in (0, 1] for softmax rows.
Matrix pair_agreement_scores(const Matrix& probs);

}  // namespace tabncd::pseudo
