#pragma once

#include "tabncd/common.hpp"

#include <cstddef>
#include <vector>

namespace tabncd::nn {

enum class Activation { ReLU, Sigmoid, Identity };

enum class Mode { Train, Eval };

constexpr double kLogEps = 1e-7;

struct DenseLayer {
    Matrix weights;   // fan_in x fan_out
    RowVector bias;   // fan_out
    Activation activation = Activation::Identity;
    double dropout_rate = 0.0;

    int fan_in() const { return static_cast<int>(weights.rows()); }
    int fan_out() const { return static_cast<int>(weights.cols()); }
};

// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero bias.
DenseLayer make_dense_layer(int fan_in, int fan_out, Activation activation,
                            double dropout_rate, Rng& rng);

struct LayerGrad {
    Matrix weights;
    RowVector bias;
};

struct Gradients {
    std::vector<LayerGrad> layers;

    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double factor);
};

// Activations cached by one Train-mode forward pass. backward() consumes it;
// a trace is valid for exactly the parameters it was produced with.
struct ForwardTrace {
    std::vector<Matrix> inputs;         // input to each layer
    std::vector<Matrix> preacts;        // affine outputs
    std::vector<Matrix> postacts;       // activation outputs (pre-dropout)
    std::vector<Matrix> dropout_masks;  // inverted-dropout scale factors; empty when unused
    Matrix output;

    bool empty() const { return inputs.empty(); }
};

class DenseNetwork {
  public:
    DenseNetwork() = default;
    explicit DenseNetwork(std::vector<DenseLayer> layers, std::uint64_t dropout_seed = 0);

    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }
    void reseed_dropout(std::uint64_t seed) { dropout_rng_ = make_rng(seed); }

    int input_dim() const;
    int output_dim() const;
    std::size_t n_layers() const { return layers_.size(); }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    // Mode-dependent forward. Train samples fresh dropout masks and caches the
    // trace for the next backward(); Eval is pure in (parameters, input).
    Matrix forward(const Matrix& batch);

    // Deterministic no-dropout forward, usable in any mode.
    Matrix forward_eval(const Matrix& batch) const;

    // Train-mode forward with an explicit RNG; does not touch internal state.
    ForwardTrace forward_trace(const Matrix& batch, Rng& rng) const;

    // Train-mode forward replaying fixed dropout masks (finite-difference checks).
    ForwardTrace forward_trace_masked(const Matrix& batch,
                                      const std::vector<Matrix>& masks) const;

    // Chain-rule gradients for every weight and bias. Parameters are not
    // mutated. grad_input, when non-null, receives dLoss/dBatch.
    Gradients backward(const ForwardTrace& trace, const Matrix& grad_output,
                       Matrix* grad_input = nullptr) const;

    // Stateful flavor: consumes the trace cached by the last Train-mode
    // forward(). Throws StateError when no trace is cached.
    Gradients backward(const Matrix& grad_output, Matrix* grad_input = nullptr);

    Gradients zero_gradients() const;

  private:
    std::vector<DenseLayer> layers_;
    Mode mode_ = Mode::Train;
    Rng dropout_rng_{make_rng(0)};
    ForwardTrace last_trace_;
};

// Encoder used across the whole pipeline: two hidden layers that keep the
// input dimension, each with the configured activation and dropout.
DenseNetwork make_encoder(int dim, Activation activation, double dropout_rate, Rng& rng);

// Single linear layer head (no dropout).
DenseNetwork make_linear_head(int fan_in, int fan_out, Activation activation, Rng& rng);

// Row-wise softmax with max-subtraction.
Matrix softmax(const Matrix& logits);

// Applies the softmax Jacobian: given probs = softmax(logits) and dL/dprobs,
// returns dL/dlogits.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

double mse_loss(const Matrix& pred, const Matrix& target);
Matrix mse_loss_grad(const Matrix& pred, const Matrix& target);

double bce_loss(const Matrix& pred, const Matrix& target);
Matrix bce_loss_grad(const Matrix& pred, const Matrix& target);

double ce_loss(const Matrix& probs, const Matrix& one_hot);
Matrix ce_loss_grad(const Matrix& probs, const Matrix& one_hot);

Matrix one_hot(const std::vector<int>& ids, int n_classes);

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam step on a single tensor. t is the 1-based step
// count after increment.
void adamw_update(Matrix& param, const Matrix& grad, Matrix& first_moment,
                  Matrix& second_moment, long t, const AdamWConfig& cfg);
void adamw_update(RowVector& param, const RowVector& grad, RowVector& first_moment,
                  RowVector& second_moment, long t, const AdamWConfig& cfg);

// One optimizer instance per task: binds a fixed set of networks whose
// parameters are updated together, with moments mirroring every tensor.
class AdamW {
  public:
    AdamW(std::vector<DenseNetwork*> networks, AdamWConfig cfg);

    // grads[i] must be shaped like networks[i]. Increments step_count by 1.
    void step(const std::vector<Gradients>& grads);

    long step_count() const { return step_count_; }
    const AdamWConfig& config() const { return cfg_; }

  private:
    struct Moments {
        std::vector<LayerGrad> first, second;
    };
    std::vector<DenseNetwork*> networks_;
    std::vector<Moments> moments_;
    AdamWConfig cfg_;
    long step_count_ = 0;
};

}  // namespace tabncd::nn
