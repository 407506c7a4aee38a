#pragma once

// Learnable components: a stacked LSTM with a softmax read-out, a stacked
// auto-encoder with a softmax head, and the RMSProp optimizer. Everything
// runs in double precision with hand-written gradients.

#include <cstdint>
#include <span>
#include <vector>

#include "cardio/rng.hpp"

namespace cardio::neural {

// Row-major dense matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    bool operator==(const Matrix&) const = default;
};

// y = W x
void matvec(const Matrix& w, std::span<const double> x, std::span<double> y);
// y += W^T x
void matvec_transpose_acc(const Matrix& w, std::span<const double> x, std::span<double> y);
// W += a b^T
void outer_acc(Matrix& w, std::span<const double> a, std::span<const double> b);

double sigmoid(double x);
// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);
std::size_t argmax(std::span<const double> values);

// Fills with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_uniform(std::span<double> values, int fan_in, Rng& rng);

// ---------------------------------------------------------------- RMSProp

struct RmsPropConfig {
    double learning_rate = 1e-3;
    double rho = 0.9;
    double epsilon = 1e-8;

    void validate() const;
};

// One accumulator per parameter block; shapes are fixed by the first update.
struct RmsPropState {
    RmsPropConfig config;
    std::vector<std::vector<double>> accumulators;

    RmsPropState() = default;
    explicit RmsPropState(RmsPropConfig c) : config(c) { config.validate(); }
};

// acc <- rho acc + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(acc) + eps)
void rmsprop_update(RmsPropState& state, std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads);

// ---------------------------------------------------------------- LSTM

// Gate rows of W and b are ordered (i, f, o, g).
struct LstmLayer {
    int input_dim = 0;
    int hidden_dim = 0;
    Matrix w;               // 4H x (I + H)
    std::vector<double> b;  // 4H
    double dropout_rate = 0.0;

    LstmLayer() = default;
    LstmLayer(int input, int hidden, double dropout);
};

struct LstmStack {
    std::vector<LstmLayer> layers;
    Matrix w_hy;  // output_dim x H_top, no bias
    int output_dim = 0;

    int input_dim() const { return layers.empty() ? 0 : layers.front().input_dim; }
    int hidden_dim() const { return layers.empty() ? 0 : layers.back().hidden_dim; }
};

struct LstmStackConfig {
    int input_dim = 121;
    int hidden_dim = 128;
    int layers = 4;
    int output_dim = 2;
    double dropout = 0.5;  // applied to the inputs of every layer but the first
};

// Uniform fan-in init with forget-gate bias 1.
LstmStack make_lstm_stack(const LstmStackConfig& config, Rng& rng);

// Everything the backward pass needs from one step.
struct LstmStepCache {
    std::vector<double> z;       // [D(x), h_prev]
    std::vector<double> mask;    // scaled dropout mask, empty at inference
    std::vector<double> gates;   // activated (i, f, o, g)
    std::vector<double> c_prev;
    std::vector<double> c;
    std::vector<double> tanh_c;
    std::vector<double> h;
};

// `mask` holds keep/(1 - rate) per input entry; pass an empty span for
// inference.
LstmStepCache lstm_step(const LstmLayer& layer, std::span<const double> x, std::span<const double> h_prev,
                        std::span<const double> c_prev, std::span<const double> mask = {});

struct LstmLayerGrads {
    Matrix dw;
    std::vector<double> db;
};

struct LstmStepInputGrads {
    std::vector<double> dx;
    std::vector<double> dh_prev;
    std::vector<double> dc_prev;
};

// Backpropagates dh (total gradient on h_t) and dc (gradient on c_t from
// step t + 1) through one step, accumulating into `grads`.
LstmStepInputGrads lstm_step_backward(const LstmLayer& layer, const LstmStepCache& cache, std::span<const double> dh,
                                      std::span<const double> dc, LstmLayerGrads& grads);

// Draws a scaled dropout mask; empty when rate == 0.
std::vector<double> dropout_mask(int size, double rate, Rng& rng);

using Sequence = std::vector<std::vector<double>>;

struct LstmOutput {
    std::vector<std::vector<double>> probs;  // p_t per step
    std::vector<int> labels;                 // argmax p_t
    std::vector<double> h_last;              // top-layer h_T
};

// Inference-mode forward pass.
LstmOutput lstm_forward(const LstmStack& stack, const Sequence& x);
// Top-layer h_T only; skips the read-out.
std::vector<double> lstm_final_hidden(const LstmStack& stack, const Sequence& x);

struct LstmGrads {
    std::vector<LstmLayerGrads> layers;
    Matrix dw_hy;

    explicit LstmGrads(const LstmStack& stack);
    void zero();
    std::vector<std::span<const double>> spans() const;
};

std::vector<std::span<double>> parameter_spans(LstmStack& stack);

struct SequenceSample {
    Sequence steps;
    int label = 0;
};

// Cross-entropy on the final-step prediction; gradients are accumulated into
// `grads`. With `dropout_rng` null the pass runs in inference mode.
double lstm_loss_and_grad(const LstmStack& stack, const SequenceSample& sample, LstmGrads& grads,
                          Rng* dropout_rng = nullptr);

struct TrainSchedule {
    int epochs = 10;
    int batch_size = 16;
    std::uint64_t seed = 0;
};

// Minibatch RMSProp on the final-step cross-entropy. Returns the mean loss of
// each epoch. Throws NumericalDivergence when the loss stops being finite.
std::vector<double> lstm_train(LstmStack& stack, std::span<const SequenceSample> data, const RmsPropConfig& optimizer,
                               const TrainSchedule& schedule);

// ---------------------------------------------------------------- SAE

struct Dense {
    Matrix w;
    std::vector<double> b;
    bool operator==(const Dense&) const = default;
};

// Sigmoid encoders and linear decoders. With `tied` set, decoder k uses the
// transpose of encoder k and only owns its bias.
struct Autoencoder {
    std::vector<int> layer_dims;
    bool tied = false;
    std::vector<Dense> encoders;
    std::vector<Dense> decoders;

    int input_dim() const { return layer_dims.empty() ? 0 : layer_dims.front(); }
    int code_dim() const { return layer_dims.empty() ? 0 : layer_dims.back(); }
    int depth() const { return static_cast<int>(encoders.size()); }
};

Autoencoder make_autoencoder(const std::vector<int>& layer_dims, bool tied, Rng& rng);

// Sigmoid code of encoder `layer` for input x.
std::vector<double> encode_layer(const Autoencoder& ae, int layer, std::span<const double> x);
// Codes of every encoder; the last entry is the final code.
std::vector<std::vector<double>> encode_all(const Autoencoder& ae, std::span<const double> x);
std::vector<double> reconstruct_layer(const Autoencoder& ae, int layer, std::span<const double> code);

struct DenseGrads {
    Matrix dw;
    std::vector<double> db;
};

struct AeLayerGrads {
    DenseGrads encoder;
    DenseGrads decoder;  // dw unused when tied

    AeLayerGrads(const Autoencoder& ae, int layer);
    void zero();
};

// Mean squared reconstruction error (1/d)|x_hat - x|^2 of one layer.
double reconstruction_loss_and_grad(const Autoencoder& ae, int layer, std::span<const double> x, AeLayerGrads& grads);

// Greedy layer-wise training. Layer k learns to reconstruct the codes of the
// trained layers below it; those layers stay frozen. Returns each layer's
// per-epoch mean loss.
std::vector<std::vector<double>> sae_pretrain(Autoencoder& ae, const Matrix& data, const RmsPropConfig& optimizer,
                                              const TrainSchedule& schedule);

struct SoftmaxHead {
    Matrix w;  // classes x feature_dim
    std::vector<double> b;
    bool operator==(const SoftmaxHead&) const = default;
};

SoftmaxHead make_softmax_head(int classes, int feature_dim, Rng& rng);

struct Classification {
    std::vector<double> probs;
    int label = 0;
};

Classification classify(const Autoencoder& ae, const SoftmaxHead& head, std::span<const double> x);

struct FineTuneGrads {
    std::vector<DenseGrads> encoders;
    DenseGrads head;

    FineTuneGrads(const Autoencoder& ae, const SoftmaxHead& head);
    void zero();
    std::vector<std::span<const double>> spans() const;
};

std::vector<std::span<double>> parameter_spans(Autoencoder& ae, SoftmaxHead& head);

// Cross-entropy through encoders and head for one labeled sample.
double fine_tune_loss_and_grad(const Autoencoder& ae, const SoftmaxHead& head, std::span<const double> x, int label,
                               FineTuneGrads& grads);

// End-to-end supervised training. Returns the per-epoch mean loss.
std::vector<double> fine_tune(Autoencoder& ae, SoftmaxHead& head, const Matrix& data, std::span<const int> labels,
                              const RmsPropConfig& optimizer, const TrainSchedule& schedule);

}  // namespace cardio::neural
