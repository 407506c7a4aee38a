#include <algorithm>
#include <cmath>
#include <string>

#include "cardio/error.hpp"
#include "cardio/neural.hpp"
#include "cardio/simd.hpp"

namespace cardio::neural {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
    if (static_cast<int>(x.size()) != w.cols || static_cast<int>(y.size()) != w.rows) {
        throw InvalidParameter("matvec: dimension mismatch");
    }
    for (int r = 0; r < w.rows; ++r) y[r] = simd::dot(w.row(r), x);
}

void matvec_transpose_acc(const Matrix& w, std::span<const double> x, std::span<double> y) {
    if (static_cast<int>(x.size()) != w.rows || static_cast<int>(y.size()) != w.cols) {
        throw InvalidParameter("matvec_transpose_acc: dimension mismatch");
    }
    for (int r = 0; r < w.rows; ++r) {
        if (x[r] != 0.0) simd::axpy(x[r], w.row(r), y);
    }
}

void outer_acc(Matrix& w, std::span<const double> a, std::span<const double> b) {
    if (static_cast<int>(a.size()) != w.rows || static_cast<int>(b.size()) != w.cols) {
        throw InvalidParameter("outer_acc: dimension mismatch");
    }
    for (int r = 0; r < w.rows; ++r) {
        if (a[r] != 0.0) simd::axpy(a[r], b, w.row(r));
    }
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw InvalidParameter("softmax: empty input");
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

void init_uniform(std::span<double> values, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    for (double& v : values) v = rng.uniform(-bound, bound);
}

void RmsPropConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidParameter("rmsprop: learning_rate must be finite and >= 0");
    }
    if (!(rho > 0.0 && rho < 1.0)) throw InvalidParameter("rmsprop: rho must lie in (0, 1)");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("rmsprop: epsilon must be positive");
}

void rmsprop_update(RmsPropState& state, std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size()) throw InvalidParameter("rmsprop: parameter/gradient block count mismatch");
    if (state.accumulators.empty()) {
        state.accumulators.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) state.accumulators[k].assign(params[k].size(), 0.0);
    }
    if (state.accumulators.size() != params.size()) throw InvalidParameter("rmsprop: block count changed");
    const double lr = state.config.learning_rate;
    const double rho = state.config.rho;
    const double eps = state.config.epsilon;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& acc = state.accumulators[k];
        if (params[k].size() != grads[k].size() || acc.size() != params[k].size()) {
            throw InvalidParameter("rmsprop: shape mismatch in block " + std::to_string(k));
        }
        for (std::size_t i = 0; i < acc.size(); ++i) {
            const double g = grads[k][i];
            acc[i] = rho * acc[i] + (1.0 - rho) * g * g;
            params[k][i] -= lr * g / (std::sqrt(acc[i]) + eps);
        }
    }
}

}  // namespace cardio::neural
