#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cardio/error.hpp"
#include "cardio/neural.hpp"
#include "cardio/simd.hpp"

namespace cardio::neural {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw InvalidParameter(what);
}

DenseGrads zero_like(const Matrix& w, std::size_t bias) {
    return {Matrix(w.rows, w.cols), std::vector<double>(bias, 0.0)};
}

void clear(DenseGrads& g) {
    std::fill(g.dw.data.begin(), g.dw.data.end(), 0.0);
    std::fill(g.db.begin(), g.db.end(), 0.0);
}

void scale(DenseGrads& g, double s) {
    for (double& v : g.dw.data) v *= s;
    for (double& v : g.db) v *= s;
}

void check_layer(const Autoencoder& ae, int layer) {
    require(layer >= 0 && layer < ae.depth(), "autoencoder: layer index out of range");
}

}  // namespace

Autoencoder make_autoencoder(const std::vector<int>& layer_dims, bool tied, Rng& rng) {
    require(layer_dims.size() >= 2, "autoencoder: need at least input and one code dimension");
    for (int d : layer_dims) require(d > 0, "autoencoder: dimensions must be positive");
    Autoencoder ae;
    ae.layer_dims = layer_dims;
    ae.tied = tied;
    for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
        const int in = layer_dims[k];
        const int out = layer_dims[k + 1];
        Dense enc{Matrix(out, in), std::vector<double>(out, 0.0)};
        init_uniform(enc.w.data, in, rng);
        Dense dec{tied ? Matrix() : Matrix(in, out), std::vector<double>(in, 0.0)};
        if (!tied) init_uniform(dec.w.data, out, rng);
        ae.encoders.push_back(std::move(enc));
        ae.decoders.push_back(std::move(dec));
    }
    return ae;
}

std::vector<double> encode_layer(const Autoencoder& ae, int layer, std::span<const double> x) {
    check_layer(ae, layer);
    const Dense& enc = ae.encoders[layer];
    require(static_cast<int>(x.size()) == enc.w.cols, "autoencoder: input dimension mismatch");
    std::vector<double> code(enc.w.rows);
    matvec(enc.w, x, code);
    for (int k = 0; k < enc.w.rows; ++k) code[k] = sigmoid(code[k] + enc.b[k]);
    return code;
}

std::vector<std::vector<double>> encode_all(const Autoencoder& ae, std::span<const double> x) {
    std::vector<std::vector<double>> codes;
    for (int k = 0; k < ae.depth(); ++k) {
        codes.push_back(encode_layer(ae, k, k == 0 ? x : std::span<const double>(codes.back())));
    }
    return codes;
}

std::vector<double> reconstruct_layer(const Autoencoder& ae, int layer, std::span<const double> code) {
    check_layer(ae, layer);
    const Dense& dec = ae.decoders[layer];
    std::vector<double> out(dec.b);
    if (ae.tied) {
        matvec_transpose_acc(ae.encoders[layer].w, code, out);
    } else {
        std::vector<double> tmp(dec.w.rows);
        matvec(dec.w, code, tmp);
        simd::axpy(1.0, tmp, out);
    }
    return out;
}

AeLayerGrads::AeLayerGrads(const Autoencoder& ae, int layer)
    : encoder(zero_like(ae.encoders.at(layer).w, ae.encoders.at(layer).b.size())),
      decoder(zero_like(ae.decoders.at(layer).w, ae.decoders.at(layer).b.size())) {}

void AeLayerGrads::zero() {
    clear(encoder);
    clear(decoder);
}

double reconstruction_loss_and_grad(const Autoencoder& ae, int layer, std::span<const double> x, AeLayerGrads& grads) {
    const std::vector<double> code = encode_layer(ae, layer, x);
    const std::vector<double> recon = reconstruct_layer(ae, layer, code);
    const double inv_d = 1.0 / static_cast<double>(x.size());
    std::vector<double> d_recon(x.size());
    double loss = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double r = recon[k] - x[k];
        loss += r * r;
        d_recon[k] = 2.0 * r * inv_d;
    }
    loss *= inv_d;

    const Matrix& w = ae.encoders[layer].w;
    simd::axpy(1.0, d_recon, grads.decoder.db);
    std::vector<double> d_code(code.size(), 0.0);
    if (ae.tied) {
        outer_acc(grads.encoder.dw, code, d_recon);
        matvec(w, d_recon, d_code);
    } else {
        const Matrix& dec = ae.decoders[layer].w;
        outer_acc(grads.decoder.dw, d_recon, code);
        matvec_transpose_acc(dec, d_recon, d_code);
    }
    for (std::size_t k = 0; k < code.size(); ++k) d_code[k] *= code[k] * (1.0 - code[k]);
    outer_acc(grads.encoder.dw, d_code, x);
    simd::axpy(1.0, d_code, grads.encoder.db);
    return loss;
}

std::vector<std::vector<double>> sae_pretrain(Autoencoder& ae, const Matrix& data, const RmsPropConfig& optimizer,
                                              const TrainSchedule& schedule) {
    require(data.cols == ae.input_dim(), "sae_pretrain: feature dimension mismatch");
    require(data.rows > 0, "sae_pretrain: empty dataset");
    require(schedule.epochs >= 0 && schedule.batch_size >= 1, "sae_pretrain: bad schedule");
    Rng rng(schedule.seed);
    std::vector<std::vector<double>> traces;
    Matrix inputs = data;
    std::vector<std::size_t> order(static_cast<std::size_t>(data.rows));
    for (int layer = 0; layer < ae.depth(); ++layer) {
        RmsPropState state(optimizer);
        AeLayerGrads grads(ae, layer);
        std::vector<double> trace;
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
            rng.shuffle(std::span<std::size_t>(order));
            double total = 0.0;
            for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
                const std::size_t end = std::min(order.size(), start + schedule.batch_size);
                grads.zero();
                for (std::size_t k = start; k < end; ++k) {
                    total += reconstruction_loss_and_grad(ae, layer, inputs.row(static_cast<int>(order[k])), grads);
                }
                const double s = 1.0 / static_cast<double>(end - start);
                scale(grads.encoder, s);
                scale(grads.decoder, s);
                Dense& enc = ae.encoders[layer];
                Dense& dec = ae.decoders[layer];
                std::vector<std::span<double>> params{enc.w.data, enc.b, dec.b};
                std::vector<std::span<const double>> g{grads.encoder.dw.data, grads.encoder.db, grads.decoder.db};
                if (!ae.tied) {
                    params.emplace_back(dec.w.data);
                    g.emplace_back(grads.decoder.dw.data);
                }
                rmsprop_update(state, params, g);
            }
            const double mean = total / static_cast<double>(order.size());
            if (!std::isfinite(mean)) {
                throw NumericalDivergence("sae_pretrain: non-finite loss in layer " + std::to_string(layer) + " epoch " +
                                          std::to_string(epoch));
            }
            trace.push_back(mean);
        }
        traces.push_back(std::move(trace));
        if (layer + 1 < ae.depth()) {
            Matrix next(inputs.rows, ae.layer_dims[layer + 1]);
            for (int r = 0; r < inputs.rows; ++r) {
                const auto code = encode_layer(ae, layer, inputs.row(r));
                std::copy(code.begin(), code.end(), next.row(r).begin());
            }
            inputs = std::move(next);
        }
    }
    return traces;
}

SoftmaxHead make_softmax_head(int classes, int feature_dim, Rng& rng) {
    require(classes >= 2 && feature_dim > 0, "softmax head: bad dimensions");
    SoftmaxHead head{Matrix(classes, feature_dim), std::vector<double>(classes, 0.0)};
    init_uniform(head.w.data, feature_dim, rng);
    return head;
}

namespace {

std::vector<double> head_probs(const SoftmaxHead& head, std::span<const double> code) {
    require(static_cast<int>(code.size()) == head.w.cols, "classify: head dimension mismatch");
    std::vector<double> logits(head.w.rows);
    matvec(head.w, code, logits);
    simd::axpy(1.0, head.b, logits);
    return softmax(logits);
}

}  // namespace

Classification classify(const Autoencoder& ae, const SoftmaxHead& head, std::span<const double> x) {
    require(static_cast<int>(x.size()) == ae.input_dim(), "classify: feature dimension mismatch");
    const auto codes = encode_all(ae, x);
    Classification out;
    out.probs = head_probs(head, codes.back());
    out.label = static_cast<int>(argmax(out.probs));
    return out;
}

FineTuneGrads::FineTuneGrads(const Autoencoder& ae, const SoftmaxHead& h) : head(zero_like(h.w, h.b.size())) {
    for (const Dense& enc : ae.encoders) encoders.push_back(zero_like(enc.w, enc.b.size()));
}

void FineTuneGrads::zero() {
    for (auto& g : encoders) clear(g);
    clear(head);
}

std::vector<std::span<const double>> FineTuneGrads::spans() const {
    std::vector<std::span<const double>> out;
    for (const auto& g : encoders) {
        out.emplace_back(g.dw.data);
        out.emplace_back(g.db);
    }
    out.emplace_back(head.dw.data);
    out.emplace_back(head.db);
    return out;
}

std::vector<std::span<double>> parameter_spans(Autoencoder& ae, SoftmaxHead& head) {
    std::vector<std::span<double>> out;
    for (auto& enc : ae.encoders) {
        out.emplace_back(enc.w.data);
        out.emplace_back(enc.b);
    }
    out.emplace_back(head.w.data);
    out.emplace_back(head.b);
    return out;
}

double fine_tune_loss_and_grad(const Autoencoder& ae, const SoftmaxHead& head, std::span<const double> x, int label,
                               FineTuneGrads& grads) {
    require(static_cast<int>(x.size()) == ae.input_dim(), "fine_tune: feature dimension mismatch");
    require(label >= 0 && label < head.w.rows, "fine_tune: label out of range");
    const auto codes = encode_all(ae, x);
    std::vector<double> d = head_probs(head, codes.back());
    const double loss = -std::log(std::max(d[label], 1e-300));
    d[label] -= 1.0;
    outer_acc(grads.head.dw, d, codes.back());
    simd::axpy(1.0, d, grads.head.db);

    std::vector<double> d_code(codes.back().size(), 0.0);
    matvec_transpose_acc(head.w, d, d_code);
    for (int k = ae.depth(); k-- > 0;) {
        const auto& h = codes[k];
        for (std::size_t i = 0; i < h.size(); ++i) d_code[i] *= h[i] * (1.0 - h[i]);
        const std::span<const double> input = k == 0 ? x : std::span<const double>(codes[k - 1]);
        outer_acc(grads.encoders[k].dw, d_code, input);
        simd::axpy(1.0, d_code, grads.encoders[k].db);
        if (k > 0) {
            std::vector<double> below(input.size(), 0.0);
            matvec_transpose_acc(ae.encoders[k].w, d_code, below);
            d_code = std::move(below);
        }
    }
    return loss;
}

std::vector<double> fine_tune(Autoencoder& ae, SoftmaxHead& head, const Matrix& data, std::span<const int> labels,
                              const RmsPropConfig& optimizer, const TrainSchedule& schedule) {
    require(data.cols == ae.input_dim(), "fine_tune: feature dimension mismatch");
    require(static_cast<int>(labels.size()) == data.rows, "fine_tune: label count mismatch");
    require(schedule.epochs >= 0 && schedule.batch_size >= 1, "fine_tune: bad schedule");
    for (int y : labels) require(y >= 0 && y < head.w.rows, "fine_tune: label out of range");
    if (schedule.epochs == 0) return {};
    require(data.rows > 0, "fine_tune: empty dataset");

    RmsPropState state(optimizer);
    Rng rng(schedule.seed);
    FineTuneGrads grads(ae, head);
    std::vector<std::size_t> order(static_cast<std::size_t>(data.rows));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> trace;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const std::size_t end = std::min(order.size(), start + schedule.batch_size);
            grads.zero();
            for (std::size_t k = start; k < end; ++k) {
                const int r = static_cast<int>(order[k]);
                total += fine_tune_loss_and_grad(ae, head, data.row(r), labels[r], grads);
            }
            const double s = 1.0 / static_cast<double>(end - start);
            for (auto& g : grads.encoders) scale(g, s);
            scale(grads.head, s);
            auto params = parameter_spans(ae, head);
            auto g = grads.spans();
            rmsprop_update(state, params, g);
        }
        const double mean = total / static_cast<double>(order.size());
        if (!std::isfinite(mean)) {
            throw NumericalDivergence("fine_tune: non-finite loss in epoch " + std::to_string(epoch));
        }
        trace.push_back(mean);
    }
    return trace;
}

}  // namespace cardio::neural
