#pragma once

#include "tabncd/augment.hpp"
#include "tabncd/data.hpp"
#include "tabncd/nn.hpp"
#include "tabncd/pseudo.hpp"

#include <optional>
#include <vector>

namespace tabncd::joint {

struct JointConfig {
    double w1 = 0.8;  // classification: CE weight vs consistency
    double w2 = 0.8;  // clustering: pairwise BCE weight vs consistency
    double lr_classif = 5e-3;
    double lr_cluster = 5e-3;
    pseudo::TopKConfig topk;
    augment::AugmentConfig aug;
    int epochs = 30;
    int batch_size = 512;
    double dropout = 0.1;
    nn::Activation activation = nn::Activation::ReLU;
};

struct AblationFlags {
    bool no_ssl = false;  // random encoder init instead of the SSL checkpoint
    bool no_ce = false;   // drop the cross-entropy term of Eq-style loss 1
    bool no_bce = false;  // drop the pairwise BCE term of loss 2
    bool no_mse = false;  // drop both consistency terms
};

struct JointModel {
    nn::DenseNetwork encoder;
    nn::DenseNetwork classif_head;  // latent -> C^l + 1 logits
    nn::DenseNetwork cluster_head;  // latent -> C^u logits
    int n_known = 0;
    int n_unknown = 0;

    Matrix embed(const Matrix& rows) const { return encoder.forward_eval(rows); }
    std::vector<int> predict_clusters(const Matrix& rows) const;
    std::vector<int> predict_classes(const Matrix& rows) const;  // over C^l+1
};

JointModel make_joint_model(int dim, int n_known, int n_unknown, const JointConfig& cfg,
                            std::uint64_t seed, const nn::DenseNetwork* ssl_encoder);

struct LossBreakdown {
    double total = 0.0;
    double primary = 0.0;      // CE or pairwise BCE
    double consistency = 0.0;  // MSE between head outputs on x and x-tilde
};

// w1 * CE over all rows (unlabelled rows target the aggregate class, index
// n_known) + (1-w1) * MSE between the labelled rows' head outputs and the
// outputs on their augmented counterparts. Pure in its inputs.
LossBreakdown classification_loss(const Matrix& probs, const std::vector<int>& ce_targets,
                                  const Matrix& probs_labelled,
                                  const Matrix& probs_labelled_aug, double w1,
                                  const AblationFlags& flags = {});

// w2 * mean BCE over ordered pairs (i, j != i) of agreement scores vs pseudo
// labels + (1-w2) * consistency MSE.
LossBreakdown clustering_loss(const Matrix& cluster_probs, const Matrix& y_hat,
                              const Matrix& cluster_probs_aug, double w2,
                              const AblationFlags& flags = {});

// Mean BCE over the m(m-1) ordered off-diagonal pairs.
double pairwise_bce(const Matrix& agreement, const Matrix& y_hat);
// dLoss/dProbs for the pairwise BCE through agreement = probs * probs^T.
Matrix pairwise_bce_grad(const Matrix& probs, const Matrix& y_hat);

struct StepMetrics {
    double classif_total = 0.0, classif_ce = 0.0, classif_mse = 0.0;
    double cluster_total = 0.0, cluster_bce = 0.0, cluster_mse = 0.0;
    bool classification_skipped = false;
    bool clustering_skipped = false;
    int n_labelled = 0, n_unlabelled = 0;
    double pseudo_precision = -1.0;  // diagnostic; -1 when not computed
};

struct EpochLog {
    int epoch = 0;
    double classif_loss = 0.0, classif_ce = 0.0, classif_mse = 0.0;
    double cluster_loss = 0.0, cluster_bce = 0.0, cluster_mse = 0.0;
    double train_acc_known = 0.0;
    double pseudo_precision = 0.0;
    int skipped_batches = 0;
};

class JointTrainer {
  public:
    JointTrainer(JointModel model, const data::TabularDataset& ds, JointConfig cfg,
                 AblationFlags flags, std::uint64_t seed);

    StepMetrics train_step(const data::Batch& batch);
    EpochLog run_epoch(int epoch_index);

    JointModel& model() { return model_; }
    const JointModel& model() const { return model_; }
    const data::TabularDataset& dataset() const { return *ds_; }

  private:
    JointModel model_;
    const data::TabularDataset* ds_;
    JointConfig cfg_;
    AblationFlags flags_;
    augment::Augmenter augmenter_;
    data::BatchSampler sampler_;
    nn::AdamW opt_classif_;
    nn::AdamW opt_cluster_;
    Rng dropout_rng_, aug_rng_;
};

struct TrainResult {
    JointModel model;
    std::vector<EpochLog> history;
};

// Full stage-2 loop. ssl_encoder null (or flags.no_ssl) means random init.
// On a non-finite loss the run aborts with the last epoch's model preserved
// inside the thrown diagnostics path (see NumericalError message).
TrainResult run_training(const data::TabularDataset& ds, const JointConfig& cfg,
                         const AblationFlags& flags, std::uint64_t seed,
                         const nn::DenseNetwork* ssl_encoder);

}  // namespace tabncd::joint
