#include "doctest.h"

#include <cmath>
#include <numbers>

#include "cardio/error.hpp"
#include "cardio/neural.hpp"
#include "gradcheck.hpp"

using namespace cardio;
using namespace cardio::neural;
using cardio::testing::max_gradient_error;

namespace {

std::vector<double> random_vector(int n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.uniform(-scale, scale);
    return v;
}

LstmLayer random_layer(int in, int hidden, Rng& rng, double dropout = 0.0) {
    LstmLayer layer(in, hidden, dropout);
    for (double& w : layer.w.data) w = rng.uniform(-0.6, 0.6);
    for (double& b : layer.b) b = rng.uniform(-0.4, 0.4);
    return layer;
}

LstmStack random_stack(int in, int hidden, int depth, int classes, Rng& rng, double dropout = 0.0) {
    LstmStack stack;
    stack.output_dim = classes;
    for (int l = 0; l < depth; ++l) stack.layers.push_back(random_layer(l == 0 ? in : hidden, hidden, rng, l == 0 ? 0.0 : dropout));
    stack.w_hy = Matrix(classes, hidden);
    for (double& w : stack.w_hy.data) w = rng.uniform(-0.8, 0.8);
    return stack;
}

Sequence random_sequence(int steps, int dim, Rng& rng) {
    Sequence s;
    for (int t = 0; t < steps; ++t) s.push_back(random_vector(dim, rng));
    return s;
}

// Constant-velocity ramps (label 0) versus sinusoids (label 1).
std::vector<SequenceSample> motion_toy_set(int count, int steps, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SequenceSample> out;
    for (int k = 0; k < count; ++k) {
        SequenceSample s;
        s.label = k % 2;
        const double x0 = rng.uniform(-0.5, 0.5);
        const double v = rng.uniform(-0.15, 0.15);
        const double amp = rng.uniform(0.4, 0.8);
        const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
        for (int t = 0; t < steps; ++t) {
            const double x = s.label == 0 ? x0 + v * t : x0 + amp * std::sin(1.3 * t + phase);
            s.steps.push_back({x});
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("lstm_step closed form at zero weights") {
    LstmLayer layer(3, 4, 0.0);
    const std::vector<double> x{0.3, -1.0, 2.0}, h(4, 0.7), c(4, 1.0);
    const auto out = lstm_step(layer, x, h, c);
    for (int k = 0; k < 4; ++k) {
        CHECK(out.gates[k] == 0.5);
        CHECK(out.gates[4 + k] == 0.5);
        CHECK(out.gates[8 + k] == 0.5);
        CHECK(out.gates[12 + k] == 0.0);
        CHECK(out.c[k] == 0.5);
        CHECK(out.h[k] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
    }
    CHECK(out.h[0] == doctest::Approx(0.2311).epsilon(1e-4));
}

TEST_CASE("inference ignores the dropout rate") {
    Rng rng(1);
    LstmStack a = random_stack(3, 5, 3, 2, rng, 0.0);
    LstmStack b = a;
    for (std::size_t l = 1; l < b.layers.size(); ++l) b.layers[l].dropout_rate = 0.7;
    const Sequence x = random_sequence(4, 3, rng);
    CHECK(lstm_forward(a, x).probs == lstm_forward(b, x).probs);
}

TEST_CASE("lstm_step rejects mismatched dimensions") {
    LstmLayer layer(3, 4, 0.0);
    const std::vector<double> h(4, 0.0), c(4, 0.0);
    CHECK_THROWS_AS(lstm_step(layer, std::vector<double>(2, 0.0), h, c), InvalidParameter);
    CHECK_THROWS_AS(lstm_step(layer, std::vector<double>(3, 0.0), std::vector<double>(3, 0.0), c), InvalidParameter);
    CHECK_THROWS_AS(LstmLayer(3, 4, 1.0), InvalidParameter);
}

TEST_CASE("lstm_step gradients match finite differences") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int in = 1 + static_cast<int>(rng.below(6)), hd = 1 + static_cast<int>(rng.below(6));
        LstmLayer layer = random_layer(in, hd, rng, trial % 2 ? 0.5 : 0.0);
        std::vector<double> x = random_vector(in, rng), h = random_vector(hd, rng), c = random_vector(hd, rng);
        Rng mask_rng(100 + trial);
        const std::vector<double> mask = dropout_mask(in, layer.dropout_rate, mask_rng);
        // Scalar objective a.h_t + b.c_t gives dh = a, dc = b.
        const std::vector<double> a = random_vector(hd, rng), bvec = random_vector(hd, rng);
        auto loss = [&] {
            const auto s = lstm_step(layer, x, h, c, mask);
            double v = 0.0;
            for (int k = 0; k < hd; ++k) v += a[k] * s.h[k] + bvec[k] * s.c[k];
            return v;
        };
        LstmLayerGrads grads{Matrix(layer.w.rows, layer.w.cols), std::vector<double>(layer.b.size(), 0.0)};
        const auto in_grads = lstm_step_backward(layer, lstm_step(layer, x, h, c, mask), a, bvec, grads);
        CHECK(max_gradient_error(layer.w.data, grads.dw.data, loss, rng) < 1e-5);
        CHECK(max_gradient_error(layer.b, grads.db, loss, rng) < 1e-5);
        CHECK(max_gradient_error(x, in_grads.dx, loss, rng) < 1e-5);
        CHECK(max_gradient_error(h, in_grads.dh_prev, loss, rng) < 1e-5);
        CHECK(max_gradient_error(c, in_grads.dc_prev, loss, rng) < 1e-5);
    }
}

TEST_CASE("stack BPTT gradients match finite differences") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int in = 1 + static_cast<int>(rng.below(5)), hd = 2 + static_cast<int>(rng.below(6));
        const int depth = 1 + static_cast<int>(rng.below(3)), steps = 1 + static_cast<int>(rng.below(5));
        LstmStack stack = random_stack(in, hd, depth, 2 + static_cast<int>(rng.below(2)), rng, 0.4);
        SequenceSample sample{random_sequence(steps, in, rng), static_cast<int>(rng.below(2))};
        const std::uint64_t mask_seed = 500 + trial;
        auto loss = [&] {
            LstmGrads scratch(stack);
            Rng r(mask_seed);
            return lstm_loss_and_grad(stack, sample, scratch, &r);
        };
        LstmGrads grads(stack);
        Rng r(mask_seed);
        lstm_loss_and_grad(stack, sample, grads, &r);
        for (std::size_t l = 0; l < stack.layers.size(); ++l) {
            CHECK(max_gradient_error(stack.layers[l].w.data, grads.layers[l].dw.data, loss, rng, 25) < 1e-5);
            CHECK(max_gradient_error(stack.layers[l].b, grads.layers[l].db, loss, rng, 25) < 1e-5);
        }
        CHECK(max_gradient_error(stack.w_hy.data, grads.dw_hy.data, loss, rng) < 1e-5);
    }
}

TEST_CASE("lstm_forward matches a straight-line recurrence") {
    // Two layers, input 2, hidden 2, three steps, hand-set weights.
    LstmStack stack;
    stack.output_dim = 2;
    Rng rng(4);
    stack.layers = {random_layer(2, 2, rng), random_layer(2, 2, rng)};
    stack.w_hy = Matrix(2, 2);
    stack.w_hy.data = {0.9, -0.4, -0.3, 0.7};
    const Sequence x{{0.2, -0.5}, {1.0, 0.1}, {-0.7, 0.3}};

    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<std::vector<double>> expected;
    double h[2][2] = {{0, 0}, {0, 0}}, c[2][2] = {{0, 0}, {0, 0}};
    for (int t = 0; t < 3; ++t) {
        double in[2] = {x[t][0], x[t][1]};
        for (int l = 0; l < 2; ++l) {
            const LstmLayer& L = stack.layers[l];
            double z[4] = {in[0], in[1], h[l][0], h[l][1]};
            double a[8];
            for (int r = 0; r < 8; ++r) {
                a[r] = L.b[r];
                for (int j = 0; j < 4; ++j) a[r] += L.w.at(r, j) * z[j];
            }
            for (int k = 0; k < 2; ++k) {
                const double i = sig(a[k]), f = sig(a[2 + k]), o = sig(a[4 + k]), g = std::tanh(a[6 + k]);
                c[l][k] = f * c[l][k] + i * g;
                h[l][k] = o * std::tanh(c[l][k]);
            }
            in[0] = h[l][0];
            in[1] = h[l][1];
        }
        const double l0 = 0.9 * h[1][0] - 0.4 * h[1][1], l1 = -0.3 * h[1][0] + 0.7 * h[1][1];
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        expected.push_back({e0 / (e0 + e1), e1 / (e0 + e1)});
    }
    const auto out = lstm_forward(stack, x);
    REQUIRE(out.probs.size() == 3);
    for (int t = 0; t < 3; ++t) {
        for (int k = 0; k < 2; ++k) CHECK(std::abs(out.probs[t][k] - expected[t][k]) < 1e-12);
    }
    CHECK(out.h_last == lstm_final_hidden(stack, x));
}

TEST_CASE("lstm_forward outputs are distributions and labels are their argmax") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        LstmStack stack = random_stack(3, 4, 2, 3, rng);
        const auto out = lstm_forward(stack, random_sequence(5, 3, rng));
        for (std::size_t t = 0; t < out.probs.size(); ++t) {
            double total = 0.0;
            for (double p : out.probs[t]) {
                CHECK(p > 0.0);
                total += p;
            }
            CHECK(std::abs(total - 1.0) < 1e-12);
            CHECK(out.labels[t] == static_cast<int>(argmax(out.probs[t])));
        }
    }
    CHECK_THROWS_AS(lstm_forward(random_stack(3, 4, 1, 2, rng), Sequence{}), InvalidParameter);
}

TEST_CASE("softmax is shift invariant and argmax ignores positive scaling of the read-out") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits = random_vector(4, rng, 5.0);
        auto shifted = logits;
        for (double& v : shifted) v += 37.5;
        const auto p = softmax(logits), q = softmax(shifted);
        for (std::size_t k = 0; k < p.size(); ++k) CHECK(std::abs(p[k] - q[k]) < 1e-12);
    }
    LstmStack stack = random_stack(2, 3, 2, 3, rng);
    const Sequence x = random_sequence(4, 2, rng);
    const auto before = lstm_forward(stack, x).labels;
    for (double& w : stack.w_hy.data) w *= 3.7;
    CHECK(lstm_forward(stack, x).labels == before);
}

TEST_CASE("saturated forget gate preserves the cell") {
    Rng rng(7);
    LstmLayer layer(3, 3, 0.0);
    for (double& w : layer.w.data) w = rng.uniform(-0.05, 0.05);
    for (int k = 0; k < 3; ++k) {
        layer.b[k] = -20.0;     // input gate
        layer.b[3 + k] = 20.0;  // forget gate
    }
    const std::vector<double> x = random_vector(3, rng), h = random_vector(3, rng), c = random_vector(3, rng);
    const auto out = lstm_step(layer, x, h, c);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(out.c[k] - c[k]) < 1e-8);
}

TEST_CASE("dropout is unbiased in expectation") {
    Rng rng(8);
    LstmLayer layer = random_layer(6, 3, rng, 0.5);
    const std::vector<double> x = random_vector(6, rng), h = random_vector(3, rng), c(3, 0.0);
    // Gate pre-activations are linear in D(x), so their mean over masks must
    // approach the inference value.
    std::vector<double> reference(12);
    {
        std::vector<double> z(x);
        z.insert(z.end(), h.begin(), h.end());
        matvec(layer.w, z, reference);
    }
    const int passes = 10000;
    std::vector<double> mean(12, 0.0), sq(12, 0.0), mean_x(6, 0.0), sq_x(6, 0.0);
    Rng mask_rng(9);
    for (int n = 0; n < passes; ++n) {
        const auto mask = dropout_mask(6, 0.5, mask_rng);
        std::vector<double> z(9);
        for (int k = 0; k < 6; ++k) {
            z[k] = x[k] * mask[k];
            mean_x[k] += z[k];
            sq_x[k] += z[k] * z[k];
        }
        std::copy(h.begin(), h.end(), z.begin() + 6);
        std::vector<double> pre(12);
        matvec(layer.w, z, pre);
        for (int k = 0; k < 12; ++k) {
            mean[k] += pre[k];
            sq[k] += pre[k] * pre[k];
        }
    }
    auto within = [&](double sum, double sum_sq, double target) {
        const double m = sum / passes;
        const double var = sum_sq / passes - m * m;
        const double se = std::sqrt(std::max(var, 0.0) / passes);
        return std::abs(m - target) <= 3.0 * se + 1e-12;
    };
    for (int k = 0; k < 6; ++k) CHECK(within(mean_x[k], sq_x[k], x[k]));
    for (int k = 0; k < 12; ++k) CHECK(within(mean[k], sq[k], reference[k]));
}

TEST_CASE("rmsprop update rule") {
    RmsPropState state({0.01, 0.9, 1e-8});
    std::vector<double> theta{1.0, -2.0, 0.5};
    std::vector<double> g{1.0, -3.0, 0.0};
    std::vector<std::span<double>> p{theta};
    std::vector<std::span<const double>> gs{g};
    rmsprop_update(state, p, gs);
    CHECK(theta[0] - 1.0 == doctest::Approx(-0.01 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-12));
    CHECK(theta[0] - 1.0 == doctest::Approx(-0.031623).epsilon(1e-4));
    CHECK(theta[1] > -2.0);
    CHECK(theta[2] == 0.5);

    // Zero gradient: parameters unchanged, accumulator decays by rho.
    const auto acc = state.accumulators[0];
    const auto before = theta;
    std::vector<double> zero(3, 0.0);
    std::vector<std::span<const double>> zs{zero};
    rmsprop_update(state, p, zs);
    CHECK(theta == before);
    for (int k = 0; k < 3; ++k) CHECK(state.accumulators[0][k] == doctest::Approx(0.9 * acc[k]).epsilon(1e-15));

    std::vector<double> wrong(2, 1.0);
    std::vector<std::span<const double>> ws{wrong};
    CHECK_THROWS_AS(rmsprop_update(state, p, ws), InvalidParameter);
    CHECK_THROWS_AS(RmsPropState({0.01, 1.0, 1e-8}), InvalidParameter);
}

TEST_CASE("rmsprop steps oppose the gradient sign") {
    Rng rng(10);
    RmsPropState state({0.05, 0.9, 1e-8});
    std::vector<double> theta = random_vector(50, rng);
    for (int it = 0; it < 5; ++it) {
        const auto before = theta;
        const auto g = random_vector(50, rng);
        std::vector<std::span<double>> p{theta};
        std::vector<std::span<const double>> gs{g};
        rmsprop_update(state, p, gs);
        for (int k = 0; k < 50; ++k) {
            const double step = theta[k] - before[k];
            CHECK((g[k] > 0 ? step < 0 : step > 0));
        }
    }
}

TEST_CASE("lstm_train: zero learning rate leaves parameters untouched") {
    Rng rng(11);
    LstmStack stack = make_lstm_stack({1, 6, 2, 2, 0.5}, rng);
    const LstmStack before = stack;
    const auto data = motion_toy_set(8, 6, 12);
    lstm_train(stack, data, {0.0, 0.9, 1e-8}, {3, 4, 1});
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        CHECK(stack.layers[l].w == before.layers[l].w);
        CHECK(stack.layers[l].b == before.layers[l].b);
    }
    CHECK(stack.w_hy == before.w_hy);
}

TEST_CASE("lstm_train separates constant-velocity from oscillating sequences") {
    const auto data = motion_toy_set(20, 12, 13);
    Rng rng(14);
    LstmStack stack = make_lstm_stack({1, 8, 1, 2, 0.0}, rng);
    const auto trace = lstm_train(stack, data, {0.02, 0.9, 1e-8}, {60, 20, 15});
    for (int e = 1; e < 10; ++e) CHECK(trace[e] < trace[e - 1]);
    int correct = 0;
    for (const auto& s : data) correct += lstm_forward(stack, s.steps).labels.back() == s.label;
    CHECK(correct == 20);

    Rng rng2(14);
    LstmStack again = make_lstm_stack({1, 8, 1, 2, 0.0}, rng2);
    CHECK(lstm_train(again, data, {0.02, 0.9, 1e-8}, {60, 20, 15}) == trace);
}

TEST_CASE("lstm_train is deterministic with dropout") {
    const auto data = motion_toy_set(10, 5, 16);
    Rng a_rng(17), b_rng(17);
    LstmStack a = make_lstm_stack({1, 5, 3, 2, 0.5}, a_rng);
    LstmStack b = make_lstm_stack({1, 5, 3, 2, 0.5}, b_rng);
    CHECK(lstm_train(a, data, {}, {4, 3, 18}) == lstm_train(b, data, {}, {4, 3, 18}));
    CHECK(a.w_hy == b.w_hy);
    CHECK_THROWS_AS(lstm_train(a, std::span<const SequenceSample>{}, {}, {}), InvalidParameter);
}

TEST_CASE("make_lstm_stack initialisation") {
    Rng rng(19);
    const LstmStack s = make_lstm_stack({}, rng);
    REQUIRE(s.layers.size() == 4);
    CHECK(s.input_dim() == 121);
    CHECK(s.hidden_dim() == 128);
    CHECK(s.layers[0].dropout_rate == 0.0);
    CHECK(s.layers[1].dropout_rate == 0.5);
    const double bound0 = 1.0 / std::sqrt(121.0 + 128.0);
    for (double w : s.layers[0].w.data) CHECK(std::abs(w) <= bound0);
    for (int k = 0; k < 128; ++k) {
        CHECK(s.layers[2].b[128 + k] == 1.0);
        CHECK(s.layers[2].b[k] == 0.0);
    }
}

TEST_CASE("autoencoder reconstruction gradients match finite differences") {
    Rng rng(20);
    for (int trial = 0; trial < 20; ++trial) {
        const bool tied = trial % 2 == 1;
        std::vector<int> dims{2 + static_cast<int>(rng.below(7)), 2 + static_cast<int>(rng.below(7)),
                              1 + static_cast<int>(rng.below(8))};
        Autoencoder ae = make_autoencoder(dims, tied, rng);
        for (auto& d : ae.decoders) {
            for (double& b : d.b) b = rng.uniform(-0.3, 0.3);
        }
        const int layer = static_cast<int>(rng.below(2));
        const std::vector<double> x = random_vector(dims[layer], rng);
        AeLayerGrads grads(ae, layer);
        reconstruction_loss_and_grad(ae, layer, x, grads);
        auto loss = [&] {
            AeLayerGrads scratch(ae, layer);
            return reconstruction_loss_and_grad(ae, layer, x, scratch);
        };
        CHECK(max_gradient_error(ae.encoders[layer].w.data, grads.encoder.dw.data, loss, rng) < 1e-5);
        CHECK(max_gradient_error(ae.encoders[layer].b, grads.encoder.db, loss, rng) < 1e-5);
        CHECK(max_gradient_error(ae.decoders[layer].b, grads.decoder.db, loss, rng) < 1e-5);
        if (!tied) CHECK(max_gradient_error(ae.decoders[layer].w.data, grads.decoder.dw.data, loss, rng) < 1e-5);
    }
}

TEST_CASE("fine-tune gradients match finite differences") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> dims{2 + static_cast<int>(rng.below(7)), 2 + static_cast<int>(rng.below(6)),
                              2 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(4))};
        Autoencoder ae = make_autoencoder(dims, false, rng);
        SoftmaxHead head = make_softmax_head(2, dims.back(), rng);
        for (double& b : head.b) b = rng.uniform(-0.5, 0.5);
        const std::vector<double> x = random_vector(dims[0], rng, 2.0);
        const int label = static_cast<int>(rng.below(2));
        FineTuneGrads grads(ae, head);
        fine_tune_loss_and_grad(ae, head, x, label, grads);
        auto loss = [&] {
            FineTuneGrads scratch(ae, head);
            return fine_tune_loss_and_grad(ae, head, x, label, scratch);
        };
        for (int k = 0; k < ae.depth(); ++k) {
            CHECK(max_gradient_error(ae.encoders[k].w.data, grads.encoders[k].dw.data, loss, rng) < 1e-5);
            CHECK(max_gradient_error(ae.encoders[k].b, grads.encoders[k].db, loss, rng) < 1e-5);
        }
        CHECK(max_gradient_error(head.w.data, grads.head.dw.data, loss, rng) < 1e-5);
        CHECK(max_gradient_error(head.b, grads.head.db, loss, rng) < 1e-5);
    }
}

namespace {

Matrix blob_data(int n, int dim, std::uint64_t seed, std::vector<int>* labels) {
    Rng rng(seed);
    Matrix data(n, dim);
    for (int r = 0; r < n; ++r) {
        const int y = r % 2;
        if (labels) labels->push_back(y);
        for (int c = 0; c < dim; ++c) data.at(r, c) = (y ? 0.8 : -0.8) * (c % 3 == 0 ? 1.0 : 0.3) + rng.uniform(-0.3, 0.3);
    }
    return data;
}

}  // namespace

TEST_CASE("sae_pretrain loss is essentially non-increasing per layer") {
    std::vector<int> labels;
    const Matrix data = blob_data(200, 12, 22, &labels);
    Rng rng(23);
    Autoencoder ae = make_autoencoder({12, 16, 8, 4}, false, rng);
    const auto traces = sae_pretrain(ae, data, {0.002, 0.9, 1e-8}, {15, 10, 24});
    REQUIRE(traces.size() == 3);
    for (const auto& t : traces) {
        REQUIRE(t.size() == 15);
        for (std::size_t e = 1; e < t.size(); ++e) CHECK(t[e] <= t[e - 1] * 1.05);
        CHECK(t.back() < t.front());
    }
    CHECK_THROWS_AS(sae_pretrain(ae, Matrix(3, 5), {}, {}), InvalidParameter);
}

TEST_CASE("sae_pretrain on zero input drives the loss toward zero") {
    Rng rng(25);
    Autoencoder ae = make_autoencoder({6, 4, 3}, false, rng);
    for (auto& d : ae.decoders) {
        for (double& b : d.b) b = 0.5;
    }
    const auto traces = sae_pretrain(ae, Matrix(20, 6), {0.001, 0.9, 1e-8}, {300, 5, 26});
    CHECK(traces[0].back() < 1e-3 * traces[0].front());
    CHECK(traces[0].back() < 1e-4);
}

TEST_CASE("classify outputs a distribution; zero head is uniform") {
    Rng rng(27);
    Autoencoder ae = make_autoencoder({5, 4, 3}, false, rng);
    SoftmaxHead head = make_softmax_head(2, 3, rng);
    const auto c = classify(ae, head, random_vector(5, rng));
    CHECK(std::abs(c.probs[0] + c.probs[1] - 1.0) < 1e-12);
    CHECK(c.probs[0] > 0.0);
    CHECK(c.probs[1] > 0.0);
    SoftmaxHead zero{Matrix(2, 3), {0.0, 0.0}};
    const auto u = classify(ae, zero, random_vector(5, rng));
    CHECK(u.probs[0] == 0.5);
    CHECK(u.probs[1] == 0.5);
    CHECK_THROWS_AS(classify(ae, head, random_vector(4, rng)), InvalidParameter);
}

TEST_CASE("fine_tune fits a separable 40-point set") {
    std::vector<int> labels;
    const Matrix data = blob_data(40, 6, 28, &labels);
    Rng rng(29);
    Autoencoder ae = make_autoencoder({6, 8, 6, 4}, false, rng);
    SoftmaxHead head = make_softmax_head(2, 4, rng);
    sae_pretrain(ae, data, {0.01, 0.9, 1e-8}, {10, 8, 30});
    const Autoencoder ae0 = ae;
    const SoftmaxHead head0 = head;

    CHECK(fine_tune(ae, head, data, labels, {}, {0, 8, 31}).empty());
    CHECK(ae.encoders == ae0.encoders);
    CHECK(head == head0);

    const auto trace = fine_tune(ae, head, data, labels, {0.01, 0.9, 1e-8}, {40, 40, 31});
    for (int e = 1; e < 10; ++e) CHECK(trace[e] < trace[e - 1]);
    int correct = 0;
    for (int r = 0; r < data.rows; ++r) correct += classify(ae, head, data.row(r)).label == labels[r];
    CHECK(correct == 40);

    Autoencoder ae2 = ae0;
    SoftmaxHead head2 = head0;
    fine_tune(ae2, head2, data, labels, {0.01, 0.9, 1e-8}, {40, 40, 31});
    CHECK(ae2.encoders == ae.encoders);
    CHECK(head2 == head);
}
