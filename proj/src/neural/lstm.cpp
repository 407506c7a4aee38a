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

}  // namespace

LstmLayer::LstmLayer(int input, int hidden, double dropout)
    : input_dim(input), hidden_dim(hidden), w(4 * hidden, input + hidden), b(4 * static_cast<std::size_t>(hidden), 0.0),
      dropout_rate(dropout) {
    require(input > 0 && hidden > 0, "lstm: dimensions must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "lstm: dropout rate must lie in [0, 1)");
}

LstmStack make_lstm_stack(const LstmStackConfig& config, Rng& rng) {
    require(config.layers >= 1, "lstm: at least one layer required");
    require(config.output_dim >= 2, "lstm: output_dim must be >= 2");
    LstmStack stack;
    stack.output_dim = config.output_dim;
    for (int l = 0; l < config.layers; ++l) {
        const int in = l == 0 ? config.input_dim : config.hidden_dim;
        LstmLayer layer(in, config.hidden_dim, l == 0 ? 0.0 : config.dropout);
        init_uniform(layer.w.data, in + config.hidden_dim, rng);
        for (int k = 0; k < config.hidden_dim; ++k) layer.b[config.hidden_dim + k] = 1.0;
        stack.layers.push_back(std::move(layer));
    }
    stack.w_hy = Matrix(config.output_dim, config.hidden_dim);
    init_uniform(stack.w_hy.data, config.hidden_dim, rng);
    return stack;
}

std::vector<double> dropout_mask(int size, double rate, Rng& rng) {
    if (rate <= 0.0) return {};
    std::vector<double> mask(static_cast<std::size_t>(size));
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
    return mask;
}

LstmStepCache lstm_step(const LstmLayer& layer, std::span<const double> x, std::span<const double> h_prev,
                        std::span<const double> c_prev, std::span<const double> mask) {
    const int in = layer.input_dim;
    const int hd = layer.hidden_dim;
    require(static_cast<int>(x.size()) == in, "lstm_step: input dimension mismatch");
    require(static_cast<int>(h_prev.size()) == hd && static_cast<int>(c_prev.size()) == hd,
            "lstm_step: state dimension mismatch");
    require(mask.empty() || static_cast<int>(mask.size()) == in, "lstm_step: mask dimension mismatch");

    LstmStepCache cache;
    cache.z.resize(static_cast<std::size_t>(in + hd));
    for (int k = 0; k < in; ++k) cache.z[k] = mask.empty() ? x[k] : x[k] * mask[k];
    std::copy(h_prev.begin(), h_prev.end(), cache.z.begin() + in);
    cache.mask.assign(mask.begin(), mask.end());

    cache.gates.resize(4 * static_cast<std::size_t>(hd));
    matvec(layer.w, cache.z, cache.gates);
    for (int k = 0; k < 4 * hd; ++k) {
        const double a = cache.gates[k] + layer.b[k];
        cache.gates[k] = k < 3 * hd ? sigmoid(a) : std::tanh(a);
    }
    cache.c_prev.assign(c_prev.begin(), c_prev.end());
    cache.c.resize(hd);
    cache.tanh_c.resize(hd);
    cache.h.resize(hd);
    for (int k = 0; k < hd; ++k) {
        const double i = cache.gates[k];
        const double f = cache.gates[hd + k];
        const double o = cache.gates[2 * hd + k];
        const double g = cache.gates[3 * hd + k];
        cache.c[k] = f * c_prev[k] + i * g;
        cache.tanh_c[k] = std::tanh(cache.c[k]);
        cache.h[k] = o * cache.tanh_c[k];
    }
    return cache;
}

LstmStepInputGrads lstm_step_backward(const LstmLayer& layer, const LstmStepCache& cache, std::span<const double> dh,
                                      std::span<const double> dc, LstmLayerGrads& grads) {
    const int in = layer.input_dim;
    const int hd = layer.hidden_dim;
    require(static_cast<int>(dh.size()) == hd && static_cast<int>(dc.size()) == hd,
            "lstm_step_backward: gradient dimension mismatch");

    std::vector<double> da(4 * static_cast<std::size_t>(hd));
    LstmStepInputGrads out;
    out.dc_prev.resize(hd);
    for (int k = 0; k < hd; ++k) {
        const double i = cache.gates[k];
        const double f = cache.gates[hd + k];
        const double o = cache.gates[2 * hd + k];
        const double g = cache.gates[3 * hd + k];
        const double t = cache.tanh_c[k];
        const double d_o = dh[k] * t;
        const double d_c = dh[k] * o * (1.0 - t * t) + dc[k];
        da[k] = d_c * g * i * (1.0 - i);
        da[hd + k] = d_c * cache.c_prev[k] * f * (1.0 - f);
        da[2 * hd + k] = d_o * o * (1.0 - o);
        da[3 * hd + k] = d_c * i * (1.0 - g * g);
        out.dc_prev[k] = d_c * f;
    }
    outer_acc(grads.dw, da, cache.z);
    simd::axpy(1.0, da, grads.db);

    std::vector<double> dz(static_cast<std::size_t>(in + hd), 0.0);
    matvec_transpose_acc(layer.w, da, dz);
    out.dx.assign(dz.begin(), dz.begin() + in);
    if (!cache.mask.empty()) {
        for (int k = 0; k < in; ++k) out.dx[k] *= cache.mask[k];
    }
    out.dh_prev.assign(dz.begin() + in, dz.end());
    return out;
}

namespace {

void check_sequence(const LstmStack& stack, const Sequence& x) {
    require(!stack.layers.empty(), "lstm: empty stack");
    if (x.empty()) throw InvalidParameter("lstm: empty input sequence");
    for (const auto& step : x) {
        require(static_cast<int>(step.size()) == stack.input_dim(), "lstm: input dimension mismatch");
    }
}

// Runs all layers; caches[l][t]. Dropout masks are drawn only when rng is set.
std::vector<std::vector<LstmStepCache>> run_stack(const LstmStack& stack, const Sequence& x, Rng* rng) {
    check_sequence(stack, x);
    const std::size_t steps = x.size();
    std::vector<std::vector<LstmStepCache>> caches(stack.layers.size());
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        const LstmLayer& layer = stack.layers[l];
        std::vector<double> h(layer.hidden_dim, 0.0);
        std::vector<double> c(layer.hidden_dim, 0.0);
        caches[l].reserve(steps);
        for (std::size_t t = 0; t < steps; ++t) {
            const std::vector<double>& input = l == 0 ? x[t] : caches[l - 1][t].h;
            std::vector<double> mask;
            if (rng != nullptr) mask = dropout_mask(layer.input_dim, layer.dropout_rate, *rng);
            caches[l].push_back(lstm_step(layer, input, h, c, mask));
            h = caches[l].back().h;
            c = caches[l].back().c;
        }
    }
    return caches;
}

}  // namespace

LstmOutput lstm_forward(const LstmStack& stack, const Sequence& x) {
    const auto caches = run_stack(stack, x, nullptr);
    LstmOutput out;
    std::vector<double> logits(stack.output_dim);
    for (const auto& step : caches.back()) {
        matvec(stack.w_hy, step.h, logits);
        out.probs.push_back(softmax(logits));
        out.labels.push_back(static_cast<int>(argmax(out.probs.back())));
    }
    out.h_last = caches.back().back().h;
    return out;
}

std::vector<double> lstm_final_hidden(const LstmStack& stack, const Sequence& x) {
    check_sequence(stack, x);
    std::vector<std::vector<double>> inputs = x;
    for (const LstmLayer& layer : stack.layers) {
        std::vector<double> h(layer.hidden_dim, 0.0);
        std::vector<double> c(layer.hidden_dim, 0.0);
        for (auto& step : inputs) {
            LstmStepCache cache = lstm_step(layer, step, h, c);
            h = std::move(cache.h);
            c = std::move(cache.c);
            step = h;
        }
    }
    return inputs.back();
}

LstmGrads::LstmGrads(const LstmStack& stack) : dw_hy(stack.w_hy.rows, stack.w_hy.cols) {
    for (const LstmLayer& layer : stack.layers) {
        layers.push_back({Matrix(layer.w.rows, layer.w.cols), std::vector<double>(layer.b.size(), 0.0)});
    }
}

void LstmGrads::zero() {
    for (auto& g : layers) {
        std::fill(g.dw.data.begin(), g.dw.data.end(), 0.0);
        std::fill(g.db.begin(), g.db.end(), 0.0);
    }
    std::fill(dw_hy.data.begin(), dw_hy.data.end(), 0.0);
}

std::vector<std::span<const double>> LstmGrads::spans() const {
    std::vector<std::span<const double>> out;
    for (const auto& g : layers) {
        out.emplace_back(g.dw.data);
        out.emplace_back(g.db);
    }
    out.emplace_back(dw_hy.data);
    return out;
}

std::vector<std::span<double>> parameter_spans(LstmStack& stack) {
    std::vector<std::span<double>> out;
    for (auto& layer : stack.layers) {
        out.emplace_back(layer.w.data);
        out.emplace_back(layer.b);
    }
    out.emplace_back(stack.w_hy.data);
    return out;
}

double lstm_loss_and_grad(const LstmStack& stack, const SequenceSample& sample, LstmGrads& grads, Rng* dropout_rng) {
    require(sample.label >= 0 && sample.label < stack.output_dim, "lstm: label out of range");
    const auto caches = run_stack(stack, sample.steps, dropout_rng);
    const std::size_t steps = sample.steps.size();
    const std::vector<double>& h_top = caches.back().back().h;

    std::vector<double> logits(stack.output_dim);
    matvec(stack.w_hy, h_top, logits);
    std::vector<double> dlogits = softmax(logits);
    const double loss = -std::log(std::max(dlogits[sample.label], 1e-300));
    dlogits[sample.label] -= 1.0;
    outer_acc(grads.dw_hy, dlogits, h_top);

    // Gradient arriving at each layer's h_t from the layer above.
    std::vector<std::vector<double>> dh_above(steps, std::vector<double>(stack.hidden_dim(), 0.0));
    matvec_transpose_acc(stack.w_hy, dlogits, dh_above.back());

    for (std::size_t l = stack.layers.size(); l-- > 0;) {
        const LstmLayer& layer = stack.layers[l];
        std::vector<double> dh_next(layer.hidden_dim, 0.0);
        std::vector<double> dc_next(layer.hidden_dim, 0.0);
        std::vector<std::vector<double>> dx(steps);
        for (std::size_t t = steps; t-- > 0;) {
            std::vector<double> dh = dh_above[t];
            simd::axpy(1.0, dh_next, dh);
            LstmStepInputGrads step = lstm_step_backward(layer, caches[l][t], dh, dc_next, grads.layers[l]);
            dh_next = std::move(step.dh_prev);
            dc_next = std::move(step.dc_prev);
            dx[t] = std::move(step.dx);
        }
        dh_above = std::move(dx);
    }
    return loss;
}

std::vector<double> lstm_train(LstmStack& stack, std::span<const SequenceSample> data, const RmsPropConfig& optimizer,
                               const TrainSchedule& schedule) {
    if (data.empty()) throw InvalidParameter("lstm_train: empty dataset");
    require(schedule.epochs >= 0 && schedule.batch_size >= 1, "lstm_train: bad schedule");
    RmsPropState state(optimizer);
    Rng rng(schedule.seed);
    LstmGrads grads(stack);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> trace;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const std::size_t end = std::min(order.size(), start + schedule.batch_size);
            grads.zero();
            for (std::size_t k = start; k < end; ++k) {
                const double loss = lstm_loss_and_grad(stack, data[order[k]], grads, &rng);
                if (!std::isfinite(loss)) {
                    throw NumericalDivergence("lstm_train: non-finite loss in epoch " + std::to_string(epoch));
                }
                total += loss;
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            auto g = grads.spans();
            for (auto& block : grads.layers) {
                for (double& v : block.dw.data) v *= scale;
                for (double& v : block.db) v *= scale;
            }
            for (double& v : grads.dw_hy.data) v *= scale;
            auto params = parameter_spans(stack);
            rmsprop_update(state, params, g);
        }
        trace.push_back(total / static_cast<double>(data.size()));
    }
    return trace;
}

}  // namespace cardio::neural
