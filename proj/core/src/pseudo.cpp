#include "tabncd/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tabncd::pseudo {

Matrix cosine_similarity_matrix(const Matrix& z) {
    Vector norms = z.rowwise().norm().cwiseMax(1e-12);
    Matrix s = z * z.transpose();
    s.array().colwise() /= norms.array();
    s.array().rowwise() /= norms.transpose().array();
    return s;
}

std::optional<PairwisePseudoLabels> assign_pseudo_labels(const Matrix& z,
                                                         const TopKConfig& cfg,
                                                         std::vector<int> indices) {
    const int m = static_cast<int>(z.rows());
    if (m < 2) return std::nullopt;
    if (cfg.topk_percent <= 0.0 || cfg.topk_percent > 100.0)
        throw ConfigError("assign_pseudo_labels: topk_percent outside (0,100]");

    const Matrix sim = cosine_similarity_matrix(z);

    PairwisePseudoLabels out;
    if (indices.empty()) {
        out.indices.resize(m);
        std::iota(out.indices.begin(), out.indices.end(), 0);
    } else {
        out.indices = std::move(indices);
    }
    out.y_hat = Matrix::Zero(m, m);

    if (cfg.mode == TopKConfig::Mode::Threshold) {
        out.k_effective = -1;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                if (j != i && sim(i, j) >= cfg.lambda) out.y_hat(i, j) = 1.0;
        return out;
    }

    const int k = std::max(
        1, static_cast<int>(std::floor(cfg.topk_percent / 100.0 * (m - 1))));
    out.k_effective = k;

    std::vector<int> candidates;
    candidates.reserve(m - 1);
    for (int i = 0; i < m; ++i) {
        candidates.clear();
        for (int j = 0; j < m; ++j)
            if (j != i) candidates.push_back(j);
        std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                          [&](int a, int b) {
                              if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
                              return a < b;  // ties: lower index wins
                          });
        for (int t = 0; t < k; ++t) out.y_hat(i, candidates[t]) = 1.0;
    }
    return out;
}

Matrix pair_agreement_scores(const Matrix& probs) {
    return probs * probs.transpose();
}

}  // namespace tabncd::pseudo
