#pragma once

#include "tabncd/data.hpp"
#include "tabncd/nn.hpp"

#include <vector>

namespace tabncd::ssl {

struct CorruptionConfig {
    double p_m = 0.30;   // per-cell Bernoulli corruption probability
    double alpha = 2.0;  // mask-loss trade-off
    std::uint64_t seed = 0;
};

struct CorruptedBatch {
    Matrix x;
    Matrix mask;     // 1 where the cell was replaced
    Matrix x_tilde;  // (1-m).x + m.x_bar, x_bar drawn from column marginals
};

// Each masked cell is replaced by the same column of an independently drawn
// training row.
CorruptedBatch corrupt(const Matrix& batch, const Matrix& training_features,
                       const CorruptionConfig& cfg, Rng& rng);

struct VimeLoss {
    double total;
    double recon;
    double mask;
};

// total = mse(x, x_hat) + alpha * bce(m, m_hat)
VimeLoss vime_loss(const Matrix& x, const Matrix& m, const Matrix& x_hat,
                   const Matrix& m_hat, double alpha);

struct PretrainConfig {
    CorruptionConfig corruption;
    int epochs = 30;
    int batch_size = 128;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
};

struct EpochLoss {
    double total;
    double recon;
    double mask;
};

struct PretrainResult {
    nn::DenseNetwork encoder;
    std::vector<EpochLoss> history;  // mean per-batch losses per epoch
};

// Jointly trains encoder + mask/reconstruction heads on all training rows
// (labels ignored) with a single AdamW optimizer; the heads are discarded.
PretrainResult pretrain(nn::DenseNetwork encoder, nn::DenseNetwork mask_head,
                        nn::DenseNetwork recon_head, const data::TabularDataset& ds,
                        const PretrainConfig& cfg);

}  // namespace tabncd::ssl
