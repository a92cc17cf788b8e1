#include "tabncd/joint.hpp"

#include <cmath>
#include <sstream>

namespace tabncd::joint {

namespace {

std::vector<int> argmax_rows(const Matrix& scores) {
    std::vector<int> out(scores.rows());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best;
        scores.row(i).maxCoeff(&best);
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace

std::vector<int> JointModel::predict_clusters(const Matrix& rows) const {
    return argmax_rows(nn::softmax(cluster_head.forward_eval(encoder.forward_eval(rows))));
}

std::vector<int> JointModel::predict_classes(const Matrix& rows) const {
    return argmax_rows(nn::softmax(classif_head.forward_eval(encoder.forward_eval(rows))));
}

JointModel make_joint_model(int dim, int n_known, int n_unknown, const JointConfig& cfg,
                            std::uint64_t seed, const nn::DenseNetwork* ssl_encoder) {
    JointModel model;
    model.n_known = n_known;
    model.n_unknown = n_unknown;
    if (ssl_encoder != nullptr) {
        if (ssl_encoder->input_dim() != dim)
            throw DimensionError("make_joint_model: encoder dimension does not match data");
        model.encoder = *ssl_encoder;
    } else {
        Rng rng = make_rng(seed, 0xE2C);
        model.encoder = nn::make_encoder(dim, cfg.activation, cfg.dropout, rng);
    }
    const int latent = model.encoder.output_dim();
    Rng rng_cls = make_rng(seed, 0xC1A55);
    Rng rng_clu = make_rng(seed, 0xC1057);
    model.classif_head =
        nn::make_linear_head(latent, n_known + 1, nn::Activation::Identity, rng_cls);
    model.cluster_head =
        nn::make_linear_head(latent, n_unknown, nn::Activation::Identity, rng_clu);
    return model;
}

double pairwise_bce(const Matrix& agreement, const Matrix& y_hat) {
    const auto m = agreement.rows();
    if (m < 2 || agreement.cols() != m || y_hat.rows() != m || y_hat.cols() != m)
        throw DimensionError("pairwise_bce: square matrices with m >= 2 required");
    auto a = agreement.array().min(1.0 - nn::kLogEps).max(nn::kLogEps);
    auto y = y_hat.array();
    Matrix term = (-(y * a.log() + (1.0 - y) * (1.0 - a).log())).matrix();
    term.diagonal().setZero();
    return term.sum() / static_cast<double>(m * (m - 1));
}

Matrix pairwise_bce_grad(const Matrix& probs, const Matrix& y_hat) {
    const auto m = probs.rows();
    const Matrix agreement = probs * probs.transpose();
    auto a = agreement.array().min(1.0 - nn::kLogEps).max(nn::kLogEps);
    Matrix g = (((a - y_hat.array()) / (a * (1.0 - a))).matrix() /
                static_cast<double>(m * (m - 1)));
    g.diagonal().setZero();
    return (g + g.transpose()) * probs;
}

LossBreakdown classification_loss(const Matrix& probs, const std::vector<int>& ce_targets,
                                  const Matrix& probs_labelled,
                                  const Matrix& probs_labelled_aug, double w1,
                                  const AblationFlags& flags) {
    LossBreakdown loss;
    loss.primary = nn::ce_loss(probs, nn::one_hot(ce_targets, static_cast<int>(probs.cols())));
    loss.consistency = probs_labelled.size() > 0
                           ? nn::mse_loss(probs_labelled, probs_labelled_aug)
                           : 0.0;
    loss.total = (flags.no_ce ? 0.0 : w1 * loss.primary) +
                 (flags.no_mse ? 0.0 : (1.0 - w1) * loss.consistency);
    return loss;
}

LossBreakdown clustering_loss(const Matrix& cluster_probs, const Matrix& y_hat,
                              const Matrix& cluster_probs_aug, double w2,
                              const AblationFlags& flags) {
    LossBreakdown loss;
    loss.primary = pairwise_bce(pseudo::pair_agreement_scores(cluster_probs), y_hat);
    loss.consistency = cluster_probs_aug.size() > 0
                           ? nn::mse_loss(cluster_probs, cluster_probs_aug)
                           : 0.0;
    loss.total = (flags.no_bce ? 0.0 : w2 * loss.primary) +
                 (flags.no_mse ? 0.0 : (1.0 - w2) * loss.consistency);
    return loss;
}

JointTrainer::JointTrainer(JointModel model, const data::TabularDataset& ds,
                           JointConfig cfg, AblationFlags flags, std::uint64_t seed)
    : model_(std::move(model)),
      ds_(&ds),
      cfg_(cfg),
      flags_(flags),
      augmenter_(ds, cfg.aug),
      sampler_(ds, cfg.batch_size, mix_seed(seed, 0x5A11)),
      opt_classif_({&model_.encoder, &model_.classif_head},
                   nn::AdamWConfig{.learning_rate = cfg.lr_classif}),
      opt_cluster_({&model_.encoder, &model_.cluster_head},
                   nn::AdamWConfig{.learning_rate = cfg.lr_cluster}),
      dropout_rng_(make_rng(seed, 0xD0)),
      aug_rng_(make_rng(seed, 0xA6)) {}

StepMetrics JointTrainer::train_step(const data::Batch& batch) {
    StepMetrics metrics;
    metrics.n_labelled = static_cast<int>(batch.labelled_pos.size());
    metrics.n_unlabelled = static_cast<int>(batch.unlabelled_pos.size());

    // (1) classification network + encoder
    if (batch.labelled_pos.empty()) {
        metrics.classification_skipped = true;
    } else {
        const Matrix x = ds_->rows(batch.rows);
        auto enc_trace = model_.encoder.forward_trace(x, dropout_rng_);
        auto head_trace = model_.classif_head.forward_trace(enc_trace.output, dropout_rng_);
        const Matrix probs = nn::softmax(head_trace.output);

        std::vector<int> targets(batch.rows.size());
        for (std::size_t i = 0; i < batch.rows.size(); ++i) {
            const int label = ds_->labels[batch.rows[i]];
            targets[i] = ds_->is_labelled[batch.rows[i]] ? label : model_.n_known;
        }
        const Matrix targets_one_hot = nn::one_hot(targets, model_.n_known + 1);

        Matrix d_probs = Matrix::Zero(probs.rows(), probs.cols());
        metrics.classif_ce = nn::ce_loss(probs, targets_one_hot);
        if (!flags_.no_ce)
            d_probs += cfg_.w1 * nn::ce_loss_grad(probs, targets_one_hot);

        bool has_aug = false;
        Matrix probs_aug, d_probs_aug;
        nn::ForwardTrace enc_trace_aug, head_trace_aug;
        if (!flags_.no_mse) {
            std::vector<int> labelled_ids;
            labelled_ids.reserve(batch.labelled_pos.size());
            for (int pos : batch.labelled_pos) labelled_ids.push_back(batch.rows[pos]);
            const Matrix x_aug = augmenter_.augment_labelled(labelled_ids, aug_rng_);
            enc_trace_aug = model_.encoder.forward_trace(x_aug, dropout_rng_);
            head_trace_aug =
                model_.classif_head.forward_trace(enc_trace_aug.output, dropout_rng_);
            probs_aug = nn::softmax(head_trace_aug.output);

            Matrix probs_labelled(batch.labelled_pos.size(), probs.cols());
            for (std::size_t i = 0; i < batch.labelled_pos.size(); ++i)
                probs_labelled.row(i) = probs.row(batch.labelled_pos[i]);
            metrics.classif_mse = nn::mse_loss(probs_labelled, probs_aug);

            const Matrix d_mse = nn::mse_loss_grad(probs_labelled, probs_aug);
            for (std::size_t i = 0; i < batch.labelled_pos.size(); ++i)
                d_probs.row(batch.labelled_pos[i]) += (1.0 - cfg_.w1) * d_mse.row(i);
            d_probs_aug = -(1.0 - cfg_.w1) * d_mse;
            has_aug = true;
        }

        metrics.classif_total = (flags_.no_ce ? 0.0 : cfg_.w1 * metrics.classif_ce) +
                                (flags_.no_mse ? 0.0 : (1.0 - cfg_.w1) * metrics.classif_mse);
        if (!std::isfinite(metrics.classif_total)) {
            std::ostringstream os;
            os << "train_step: non-finite classification loss (ce=" << metrics.classif_ce
               << ", mse=" << metrics.classif_mse << ")";
            throw NumericalError(os.str());
        }

        Matrix dz;
        auto head_grads = model_.classif_head.backward(
            head_trace, nn::softmax_backward(probs, d_probs), &dz);
        auto enc_grads = model_.encoder.backward(enc_trace, dz);
        if (has_aug) {
            Matrix dz_aug;
            auto head_grads_aug = model_.classif_head.backward(
                head_trace_aug, nn::softmax_backward(probs_aug, d_probs_aug), &dz_aug);
            head_grads += head_grads_aug;
            enc_grads += model_.encoder.backward(enc_trace_aug, dz_aug);
        }
        opt_classif_.step({enc_grads, head_grads});
    }

    // (2) clustering network + encoder, latent vectors recomputed after (1)
    if (batch.unlabelled_pos.size() < 2) {
        metrics.clustering_skipped = true;
        return metrics;
    }
    std::vector<int> unlabelled_ids;
    unlabelled_ids.reserve(batch.unlabelled_pos.size());
    for (int pos : batch.unlabelled_pos) unlabelled_ids.push_back(batch.rows[pos]);

    const Matrix xu = ds_->rows(unlabelled_ids);
    auto enc_trace = model_.encoder.forward_trace(xu, dropout_rng_);
    const auto plabels = pseudo::assign_pseudo_labels(enc_trace.output, cfg_.topk);
    if (!plabels) {
        metrics.clustering_skipped = true;
        return metrics;
    }
    auto head_trace = model_.cluster_head.forward_trace(enc_trace.output, dropout_rng_);
    const Matrix q = nn::softmax(head_trace.output);

    metrics.cluster_bce = pairwise_bce(pseudo::pair_agreement_scores(q), plabels->y_hat);
    Matrix dq = Matrix::Zero(q.rows(), q.cols());
    if (!flags_.no_bce) dq += cfg_.w2 * pairwise_bce_grad(q, plabels->y_hat);

    bool has_aug = false;
    Matrix q_aug, dq_aug;
    nn::ForwardTrace enc_trace_aug, head_trace_aug;
    if (!flags_.no_mse) {
        const Matrix xu_aug = augmenter_.augment_unlabelled(unlabelled_ids, aug_rng_);
        enc_trace_aug = model_.encoder.forward_trace(xu_aug, dropout_rng_);
        head_trace_aug =
            model_.cluster_head.forward_trace(enc_trace_aug.output, dropout_rng_);
        q_aug = nn::softmax(head_trace_aug.output);
        metrics.cluster_mse = nn::mse_loss(q, q_aug);

        const Matrix d_mse = nn::mse_loss_grad(q, q_aug);
        dq += (1.0 - cfg_.w2) * d_mse;
        dq_aug = -(1.0 - cfg_.w2) * d_mse;
        has_aug = true;
    }

    metrics.cluster_total = (flags_.no_bce ? 0.0 : cfg_.w2 * metrics.cluster_bce) +
                            (flags_.no_mse ? 0.0 : (1.0 - cfg_.w2) * metrics.cluster_mse);
    if (!std::isfinite(metrics.cluster_total)) {
        std::ostringstream os;
        os << "train_step: non-finite clustering loss (bce=" << metrics.cluster_bce
           << ", mse=" << metrics.cluster_mse << ")";
        throw NumericalError(os.str());
    }

    Matrix dz;
    auto head_grads =
        model_.cluster_head.backward(head_trace, nn::softmax_backward(q, dq), &dz);
    auto enc_grads = model_.encoder.backward(enc_trace, dz);
    if (has_aug) {
        Matrix dz_aug;
        auto head_grads_aug = model_.cluster_head.backward(
            head_trace_aug, nn::softmax_backward(q_aug, dq_aug), &dz_aug);
        head_grads += head_grads_aug;
        enc_grads += model_.encoder.backward(enc_trace_aug, dz_aug);
    }
    opt_cluster_.step({enc_grads, head_grads});

    // diagnostic only: precision of positive pseudo labels vs ground truth
    long positives = 0, correct = 0;
    const auto m = plabels->y_hat.rows();
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == j || plabels->y_hat(i, j) == 0.0) continue;
            ++positives;
            if (ds_->labels[unlabelled_ids[i]] == ds_->labels[unlabelled_ids[j]]) ++correct;
        }
    }
    if (positives > 0)
        metrics.pseudo_precision =
            static_cast<double>(correct) / static_cast<double>(positives);
    return metrics;
}

EpochLog JointTrainer::run_epoch(int epoch_index) {
    EpochLog log;
    log.epoch = epoch_index;
    int n_classif = 0, n_cluster = 0, n_precision = 0;
    for (const auto& batch : sampler_.epoch(epoch_index)) {
        const auto metrics = train_step(batch);
        if (!metrics.classification_skipped) {
            log.classif_loss += metrics.classif_total;
            log.classif_ce += metrics.classif_ce;
            log.classif_mse += metrics.classif_mse;
            ++n_classif;
        }
        if (!metrics.clustering_skipped) {
            log.cluster_loss += metrics.cluster_total;
            log.cluster_bce += metrics.cluster_bce;
            log.cluster_mse += metrics.cluster_mse;
            ++n_cluster;
        } else {
            ++log.skipped_batches;
        }
        if (metrics.pseudo_precision >= 0.0) {
            log.pseudo_precision += metrics.pseudo_precision;
            ++n_precision;
        }
    }
    if (n_classif > 0) {
        log.classif_loss /= n_classif;
        log.classif_ce /= n_classif;
        log.classif_mse /= n_classif;
    }
    if (n_cluster > 0) {
        log.cluster_loss /= n_cluster;
        log.cluster_bce /= n_cluster;
        log.cluster_mse /= n_cluster;
    }
    if (n_precision > 0) log.pseudo_precision /= n_precision;

    // train accuracy on the known classes, eval mode, chunked
    const auto labelled = ds_->train_labelled_indices();
    if (!labelled.empty()) {
        long hits = 0;
        constexpr std::size_t chunk = 4096;
        for (std::size_t start = 0; start < labelled.size(); start += chunk) {
            const std::size_t stop = std::min(labelled.size(), start + chunk);
            std::vector<int> ids(labelled.begin() + start, labelled.begin() + stop);
            const auto pred = model_.predict_classes(ds_->rows(ids));
            for (std::size_t i = 0; i < ids.size(); ++i)
                if (pred[i] == ds_->labels[ids[i]]) ++hits;
        }
        log.train_acc_known = static_cast<double>(hits) / static_cast<double>(labelled.size());
    }
    return log;
}

TrainResult run_training(const data::TabularDataset& ds, const JointConfig& cfg,
                         const AblationFlags& flags, std::uint64_t seed,
                         const nn::DenseNetwork* ssl_encoder) {
    const nn::DenseNetwork* init = flags.no_ssl ? nullptr : ssl_encoder;
    JointModel model = make_joint_model(ds.dim(), ds.n_known(), ds.n_unknown(), cfg, seed, init);
    JointTrainer trainer(std::move(model), ds, cfg, flags, seed);

    TrainResult result;
    JointModel last_good = trainer.model();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            result.history.push_back(trainer.run_epoch(epoch));
        } catch (const NumericalError& err) {
            std::ostringstream os;
            os << err.what() << " [aborted at epoch " << epoch
               << "; last-good model is from epoch " << epoch - 1 << "]";
            result.model = std::move(last_good);
            throw TrainingAborted(os.str(), std::move(result));
        }
        last_good = trainer.model();
    }
    result.model = trainer.model();
    return result;
}

}  // namespace tabncd::joint
