#include "tabncd/nn.hpp"

#include <cmath>
#include <sstream>

namespace tabncd::nn {

namespace {

Matrix apply_activation(Activation a, const Matrix& pre) {
    switch (a) {
        case Activation::ReLU:
            return pre.cwiseMax(0.0);
        case Activation::Sigmoid:
            return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
        case Activation::Identity:
            return pre;
    }
    return pre;
}

// d(activation)/d(pre), elementwise, from the cached pre/post activations.
Matrix activation_derivative(Activation a, const Matrix& pre, const Matrix& post) {
    switch (a) {
        case Activation::ReLU:
            return (pre.array() > 0.0).cast<double>().matrix();
        case Activation::Sigmoid:
            return (post.array() * (1.0 - post.array())).matrix();
        case Activation::Identity:
            return Matrix::Ones(pre.rows(), pre.cols());
    }
    return Matrix::Ones(pre.rows(), pre.cols());
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* where) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream os;
        os << where << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs "
           << b.rows() << "x" << b.cols();
        throw DimensionError(os.str());
    }
}

}  // namespace

DenseLayer make_dense_layer(int fan_in, int fan_out, Activation activation,
                            double dropout_rate, Rng& rng) {
    if (fan_in <= 0 || fan_out <= 0) throw DimensionError("make_dense_layer: non-positive dims");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw InputError("make_dense_layer: dropout_rate outside [0,1)");
    DenseLayer layer;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(fan_in, fan_out);
    for (int j = 0; j < fan_out; ++j)
        for (int i = 0; i < fan_in; ++i) layer.weights(i, j) = dist(rng);
    layer.bias = RowVector::Zero(fan_out);
    layer.activation = activation;
    layer.dropout_rate = dropout_rate;
    return layer;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (layers.size() != other.layers.size())
        throw DimensionError("Gradients::+=: layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weights += other.layers[i].weights;
        layers[i].bias += other.layers[i].bias;
    }
    return *this;
}

Gradients& Gradients::operator*=(double factor) {
    for (auto& g : layers) {
        g.weights *= factor;
        g.bias *= factor;
    }
    return *this;
}

DenseNetwork::DenseNetwork(std::vector<DenseLayer> layers, std::uint64_t dropout_seed)
    : layers_(std::move(layers)), dropout_rng_(make_rng(dropout_seed)) {
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        if (layers_[i - 1].fan_out() != layers_[i].fan_in())
            throw DimensionError("DenseNetwork: adjacent layer dims do not match");
    }
}

int DenseNetwork::input_dim() const {
    return layers_.empty() ? 0 : layers_.front().fan_in();
}

int DenseNetwork::output_dim() const {
    return layers_.empty() ? 0 : layers_.back().fan_out();
}

Matrix DenseNetwork::forward(const Matrix& batch) {
    if (mode_ == Mode::Eval) return forward_eval(batch);
    last_trace_ = forward_trace(batch, dropout_rng_);
    return last_trace_.output;
}

Matrix DenseNetwork::forward_eval(const Matrix& batch) const {
    if (!layers_.empty() && batch.cols() != input_dim())
        throw DimensionError("forward: batch width does not match first-layer fan_in");
    Matrix x = batch;
    for (const auto& layer : layers_) {
        Matrix pre = (x * layer.weights).rowwise() + layer.bias;
        x = apply_activation(layer.activation, pre);
    }
    return x;
}

ForwardTrace DenseNetwork::forward_trace(const Matrix& batch, Rng& rng) const {
    if (!layers_.empty() && batch.cols() != input_dim())
        throw DimensionError("forward: batch width does not match first-layer fan_in");
    ForwardTrace trace;
    Matrix x = batch;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& layer : layers_) {
        trace.inputs.push_back(x);
        Matrix pre = (x * layer.weights).rowwise() + layer.bias;
        Matrix post = apply_activation(layer.activation, pre);
        trace.preacts.push_back(pre);
        trace.postacts.push_back(post);
        if (layer.dropout_rate > 0.0) {
            const double keep = 1.0 - layer.dropout_rate;
            Matrix mask(post.rows(), post.cols());
            for (Eigen::Index j = 0; j < mask.cols(); ++j)
                for (Eigen::Index i = 0; i < mask.rows(); ++i)
                    mask(i, j) = unit(rng) < keep ? 1.0 / keep : 0.0;
            trace.dropout_masks.push_back(mask);
            x = post.cwiseProduct(mask);
        } else {
            trace.dropout_masks.emplace_back();
            x = post;
        }
    }
    trace.output = x;
    return trace;
}

ForwardTrace DenseNetwork::forward_trace_masked(const Matrix& batch,
                                                const std::vector<Matrix>& masks) const {
    if (masks.size() != layers_.size())
        throw DimensionError("forward_trace_masked: one mask slot per layer required");
    ForwardTrace trace;
    Matrix x = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& layer = layers_[i];
        trace.inputs.push_back(x);
        Matrix pre = (x * layer.weights).rowwise() + layer.bias;
        Matrix post = apply_activation(layer.activation, pre);
        trace.preacts.push_back(pre);
        trace.postacts.push_back(post);
        if (masks[i].size() > 0) {
            trace.dropout_masks.push_back(masks[i]);
            x = post.cwiseProduct(masks[i]);
        } else {
            trace.dropout_masks.emplace_back();
            x = post;
        }
    }
    trace.output = x;
    return trace;
}

Gradients DenseNetwork::backward(const ForwardTrace& trace, const Matrix& grad_output,
                                 Matrix* grad_input) const {
    if (trace.empty()) throw StateError("backward: no cached forward state");
    if (trace.inputs.size() != layers_.size())
        throw StateError("backward: trace does not match network depth");
    Gradients grads = zero_gradients();
    Matrix g = grad_output;
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
        const auto& layer = layers_[l];
        if (trace.dropout_masks[l].size() > 0) g = g.cwiseProduct(trace.dropout_masks[l]);
        Matrix g_pre =
            g.cwiseProduct(activation_derivative(layer.activation, trace.preacts[l],
                                                 trace.postacts[l]));
        grads.layers[l].weights = trace.inputs[l].transpose() * g_pre;
        grads.layers[l].bias = g_pre.colwise().sum();
        if (l > 0 || grad_input != nullptr) g = g_pre * layer.weights.transpose();
    }
    if (grad_input != nullptr) *grad_input = g;
    return grads;
}

Gradients DenseNetwork::backward(const Matrix& grad_output, Matrix* grad_input) {
    if (last_trace_.empty())
        throw StateError("backward: call Train-mode forward() before backward()");
    Gradients grads = backward(last_trace_, grad_output, grad_input);
    last_trace_ = ForwardTrace{};
    return grads;
}

Gradients DenseNetwork::zero_gradients() const {
    Gradients grads;
    grads.layers.reserve(layers_.size());
    for (const auto& layer : layers_) {
        grads.layers.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                                RowVector::Zero(layer.bias.size())});
    }
    return grads;
}

DenseNetwork make_encoder(int dim, Activation activation, double dropout_rate, Rng& rng) {
    std::vector<DenseLayer> layers;
    layers.push_back(make_dense_layer(dim, dim, activation, dropout_rate, rng));
    layers.push_back(make_dense_layer(dim, dim, activation, dropout_rate, rng));
    return DenseNetwork(std::move(layers), rng());
}

DenseNetwork make_linear_head(int fan_in, int fan_out, Activation activation, Rng& rng) {
    std::vector<DenseLayer> layers;
    layers.push_back(make_dense_layer(fan_in, fan_out, activation, 0.0, rng));
    return DenseNetwork(std::move(layers), rng());
}

Matrix softmax(const Matrix& logits) {
    Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
    Matrix expd = shifted.array().exp();
    return expd.array().colwise() / expd.rowwise().sum().array();
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
    check_same_shape(probs, grad_probs, "softmax_backward");
    // row-wise: dlogits = p .* (g - <g,p>)
    Vector dot = (probs.array() * grad_probs.array()).rowwise().sum();
    return (probs.array() * (grad_probs.array().colwise() - dot.array())).matrix();
}

double mse_loss(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "mse_loss");
    return (pred - target).array().square().sum() / static_cast<double>(pred.size());
}

Matrix mse_loss_grad(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "mse_loss_grad");
    return 2.0 * (pred - target) / static_cast<double>(pred.size());
}

double bce_loss(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "bce_loss");
    auto p = pred.array().min(1.0 - kLogEps).max(kLogEps);
    auto t = target.array();
    return -(t * p.log() + (1.0 - t) * (1.0 - p).log()).sum() /
           static_cast<double>(pred.size());
}

Matrix bce_loss_grad(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "bce_loss_grad");
    auto p = pred.array().min(1.0 - kLogEps).max(kLogEps);
    auto t = target.array();
    return ((p - t) / (p * (1.0 - p)) / static_cast<double>(pred.size())).matrix();
}

double ce_loss(const Matrix& probs, const Matrix& one_hot) {
    check_same_shape(probs, one_hot, "ce_loss");
    for (Eigen::Index i = 0; i < one_hot.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < one_hot.cols(); ++j) {
            const double v = one_hot(i, j);
            if (v != 0.0 && v != 1.0) throw InputError("ce_loss: row is not one-hot");
            sum += v;
        }
        if (sum != 1.0) throw InputError("ce_loss: row is not one-hot");
    }
    auto p = probs.array().min(1.0 - kLogEps).max(kLogEps);
    return -(one_hot.array() * p.log()).sum() / static_cast<double>(probs.rows());
}

Matrix ce_loss_grad(const Matrix& probs, const Matrix& one_hot) {
    check_same_shape(probs, one_hot, "ce_loss_grad");
    auto p = probs.array().min(1.0 - kLogEps).max(kLogEps);
    return (-(one_hot.array() / p) / static_cast<double>(probs.rows())).matrix();
}

Matrix one_hot(const std::vector<int>& ids, int n_classes) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), n_classes);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= n_classes) throw InputError("one_hot: id out of range");
        out(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
    }
    return out;
}

namespace {

template <class T>
void adamw_update_impl(T& param, const T& grad, T& m, T& v, long t,
                       const AdamWConfig& c) {
    // decoupled decay first, then the bias-corrected Adam step
    param *= (1.0 - c.learning_rate * c.weight_decay);
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = (c.beta2 * v.array() + (1.0 - c.beta2) * grad.array().square()).matrix();
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    param.array() -=
        c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace

void adamw_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, long t,
                  const AdamWConfig& cfg) {
    adamw_update_impl(param, grad, m, v, t, cfg);
}

void adamw_update(RowVector& param, const RowVector& grad, RowVector& m, RowVector& v,
                  long t, const AdamWConfig& cfg) {
    adamw_update_impl(param, grad, m, v, t, cfg);
}

AdamW::AdamW(std::vector<DenseNetwork*> networks, AdamWConfig cfg)
    : networks_(std::move(networks)), cfg_(cfg) {
    moments_.reserve(networks_.size());
    for (auto* net : networks_) {
        Moments mom;
        for (const auto& layer : net->layers()) {
            mom.first.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                                 RowVector::Zero(layer.bias.size())});
            mom.second.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                                  RowVector::Zero(layer.bias.size())});
        }
        moments_.push_back(std::move(mom));
    }
}

void AdamW::step(const std::vector<Gradients>& grads) {
    if (grads.size() != networks_.size())
        throw DimensionError("AdamW::step: one Gradients per bound network required");
    ++step_count_;
    for (std::size_t n = 0; n < networks_.size(); ++n) {
        auto& layers = networks_[n]->layers();
        if (grads[n].layers.size() != layers.size())
            throw DimensionError("AdamW::step: gradient depth mismatch");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            adamw_update(layers[l].weights, grads[n].layers[l].weights,
                         moments_[n].first[l].weights, moments_[n].second[l].weights,
                         step_count_, cfg_);
            adamw_update(layers[l].bias, grads[n].layers[l].bias,
                         moments_[n].first[l].bias, moments_[n].second[l].bias,
                         step_count_, cfg_);
        }
    }
}

}  // namespace tabncd::nn
