#include "tabncd/ssl.hpp"

#include <cmath>
#include <sstream>

namespace tabncd::ssl {

CorruptedBatch corrupt(const Matrix& batch, const Matrix& training_features,
                       const CorruptionConfig& cfg, Rng& rng) {
    if (training_features.rows() == 0)
        throw InputError("corrupt: empty training feature pool");
    if (training_features.cols() != batch.cols())
        throw DimensionError("corrupt: pool and batch dimensions differ");
    if (cfg.p_m < 0.0 || cfg.p_m > 1.0) throw ConfigError("corrupt: p_m outside [0,1]");

    CorruptedBatch out;
    out.x = batch;
    out.mask = Matrix::Zero(batch.rows(), batch.cols());
    out.x_tilde = batch;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<Eigen::Index> pick(0, training_features.rows() - 1);
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
        for (Eigen::Index j = 0; j < batch.cols(); ++j) {
            if (unit(rng) < cfg.p_m) {
                out.mask(i, j) = 1.0;
                out.x_tilde(i, j) = training_features(pick(rng), j);
            }
        }
    }
    return out;
}

VimeLoss vime_loss(const Matrix& x, const Matrix& m, const Matrix& x_hat,
                   const Matrix& m_hat, double alpha) {
    VimeLoss loss;
    loss.recon = nn::mse_loss(x_hat, x);
    loss.mask = nn::bce_loss(m_hat, m);
    loss.total = loss.recon + alpha * loss.mask;
    return loss;
}

PretrainResult pretrain(nn::DenseNetwork encoder, nn::DenseNetwork mask_head,
                        nn::DenseNetwork recon_head, const data::TabularDataset& ds,
                        const PretrainConfig& cfg) {
    const auto train_rows = ds.train_indices();
    if (train_rows.empty()) throw InputError("pretrain: no training rows");
    const Matrix pool = ds.rows(train_rows);

    nn::AdamWConfig opt_cfg;
    opt_cfg.learning_rate = cfg.learning_rate;
    nn::AdamW optimizer({&encoder, &mask_head, &recon_head}, opt_cfg);

    data::BatchSampler sampler(ds, cfg.batch_size, mix_seed(cfg.seed, 0x55B5));
    Rng corrupt_rng = make_rng(cfg.seed, 0xC0221);
    Rng dropout_rng = make_rng(cfg.seed, 0xD201);

    PretrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double sum_total = 0.0, sum_recon = 0.0, sum_mask = 0.0;
        int n_batches = 0;
        for (const auto& batch : sampler.epoch(epoch)) {
            const Matrix x = ds.rows(batch.rows);
            const auto corrupted = corrupt(x, pool, cfg.corruption, corrupt_rng);

            auto enc_trace = encoder.forward_trace(corrupted.x_tilde, dropout_rng);
            auto recon_trace = recon_head.forward_trace(enc_trace.output, dropout_rng);
            auto mask_trace = mask_head.forward_trace(enc_trace.output, dropout_rng);

            const auto loss = vime_loss(x, corrupted.mask, recon_trace.output,
                                        mask_trace.output, cfg.corruption.alpha);
            if (!std::isfinite(loss.total)) {
                std::ostringstream os;
                os << "pretrain: non-finite loss at epoch " << epoch << " (recon="
                   << loss.recon << ", mask=" << loss.mask << ")";
                throw NumericalError(os.str());
            }
            sum_total += loss.total;
            sum_recon += loss.recon;
            sum_mask += loss.mask;
            ++n_batches;

            const Matrix d_recon = nn::mse_loss_grad(recon_trace.output, x);
            Matrix d_mask = nn::bce_loss_grad(mask_trace.output, corrupted.mask);
            d_mask *= cfg.corruption.alpha;

            Matrix dz_recon, dz_mask;
            auto recon_grads = recon_head.backward(recon_trace, d_recon, &dz_recon);
            auto mask_grads = mask_head.backward(mask_trace, d_mask, &dz_mask);
            auto enc_grads = encoder.backward(enc_trace, dz_recon + dz_mask);

            optimizer.step({enc_grads, mask_grads, recon_grads});
        }
        result.history.push_back(
            {sum_total / n_batches, sum_recon / n_batches, sum_mask / n_batches});
    }
    result.encoder = std::move(encoder);
    return result;
}

}  // namespace tabncd::ssl
