#include "doctest.h"

#include <cmath>
#include <numbers>

#include "cardio/error.hpp"
#include "cardio/varflow.hpp"
#include "test_util.hpp"

using namespace cardio;
using namespace cardio::varflow;
using cardio::testing::random_texture;
using cardio::testing::shift_image;

namespace {

double max_magnitude(const FlowField& f) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) m = std::max(m, std::hypot(f.u[i], f.v[i]));
    return m;
}

PixelMask interior(int w, int h, int margin) {
    PixelMask m(w, h);
    for (int y = margin; y < h - margin; ++y) {
        for (int x = margin; x < w - margin; ++x) m.at(x, y) = 1;
    }
    return m;
}

// Textured disc of radius r rotated by `angle` about the image centre; the
// background is a separate static texture.
Image rotated_disc(const Image& disc_tex, const Image& bg, double angle, double radius) {
    Image out(bg.width, bg.height);
    const double cx = (bg.width - 1) / 2.0, cy = (bg.height - 1) / 2.0;
    for (int y = 0; y < bg.height; ++y) {
        for (int x = 0; x < bg.width; ++x) {
            const double rx = x - cx, ry = y - cy;
            if (std::hypot(rx, ry) > radius) {
                out.at(x, y) = bg.at(x, y);
                continue;
            }
            const double c = std::cos(-angle), s = std::sin(-angle);
            out.at(x, y) = sample_bilinear(disc_tex, cx + c * rx - s * ry, cy + s * rx + c * ry);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("penalizer closed forms and finite-difference derivative") {
    CHECK(penalize(0.0, 1e-3) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(penalize(1.0, 1e-3) == doctest::Approx(std::sqrt(1.0 + 1e-6)).epsilon(1e-15));
    CHECK(penalize(1.0, 1e-3) == doctest::Approx(1.0000005).epsilon(1e-9));
    for (double s2 : {0.01, 1.0, 100.0}) {
        const double h = 1e-6 * s2;
        const double fd = (penalize(s2 + h, 1e-3) - penalize(s2 - h, 1e-3)) / (2 * h);
        CHECK(std::abs(fd - penalize_derivative(s2, 1e-3)) / penalize_derivative(s2, 1e-3) < 1e-6);
    }
    CHECK_THROWS_AS(penalize(-1.0, 1e-3), InvalidParameter);
    CHECK_THROWS_AS(penalize_derivative(-1.0, 1e-3), InvalidParameter);
}

TEST_CASE("FlowParams validation") {
    FlowParams p;
    CHECK_NOTHROW(p.validate());
    p.omega = 2.0;
    CHECK_THROWS_AS(p.validate(), InvalidParameter);
    p = {};
    p.alpha = -1.0;
    CHECK_THROWS_AS(p.validate(), InvalidParameter);
    p = {};
    p.epsilon = 0.0;
    CHECK_THROWS_AS(p.validate(), InvalidParameter);
    p = {};
    p.outer_iters = 0;
    CHECK_THROWS_AS(p.validate(), InvalidParameter);
}

TEST_CASE("motion tensor: identical frames, PSD, ramp pair") {
    const Image tex = random_texture(12, 10, 31);
    const auto t = build_motion_tensor(tex, tex, FlowField(12, 10));
    Rng rng(5);
    for (std::size_t i = 0; i < t.brightness.size(); ++i) {
        CHECK(t.brightness[i][5] == 0.0);
        CHECK(t.brightness[i][2] == 0.0);
        CHECK(t.brightness[i][4] == 0.0);
        for (int k = 0; k < 3; ++k) {
            const double du = rng.uniform(-3, 3), dv = rng.uniform(-3, 3), s = rng.uniform(-2, 2);
            // z^T J z with z = (du, dv, s), scaled form of the homogeneous quadratic.
            for (const auto* tt : {&t.brightness[i], &t.gradient[i]}) {
                const auto& a = *tt;
                const double q = a[0] * du * du + 2 * a[1] * du * dv + 2 * a[2] * du * s + a[3] * dv * dv +
                                 2 * a[4] * dv * s + a[5] * s * s;
                CHECK(q >= -1e-12);
            }
        }
    }
    CHECK_THROWS_AS(build_motion_tensor(tex, Image(5, 5), FlowField(12, 10)), InvalidParameter);

    // I = 0.05 x + 0.02 y + 0.1; dst is src moved right by one pixel.
    Image ramp(8, 8), moved(8, 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            ramp.at(x, y) = 0.05 * x + 0.02 * y + 0.1;
            moved.at(x, y) = 0.05 * (x - 1) + 0.02 * y + 0.1;
        }
    }
    const auto r = build_motion_tensor(ramp, moved, FlowField(8, 8));
    for (int y = 1; y < 7; ++y) {
        for (int x = 1; x < 7; ++x) CHECK(quadratic_form(r.brightness[y * 8 + x], 1.0, 0.0) <= 1e-6);
    }
}

TEST_CASE("energy closed forms") {
    const Image tex = random_texture(16, 16, 32);
    FlowParams p;
    const double area = 256.0;
    const double e0 = energy(tex, tex, FlowField(16, 16), {}, p);
    CHECK(e0 == doctest::Approx(area * (p.delta + p.gamma + p.alpha) * p.epsilon).epsilon(1e-12));
    CHECK(energy(tex, tex, FlowField(16, 16, 1.0, 0.0), {}, p) > e0);
}

TEST_CASE("energy gradient matches central finite differences") {
    const Image src = random_texture(16, 16, 33);
    const Image dst = random_texture(16, 16, 34);
    Rng rng(35);
    FlowField w(16, 16);
    for (std::size_t i = 0; i < w.size(); ++i) {
        w.u[i] = rng.uniform(-0.8, 0.8);
        w.v[i] = rng.uniform(-0.8, 0.8);
    }
    matching::MatchSet ms;
    for (int k = 0; k < 30; ++k) {
        const int x = static_cast<int>(rng.below(16)), y = static_cast<int>(rng.below(16));
        ms.entries.push_back({x, y, x + static_cast<int>(rng.below(3)) - 1, y + 1, rng.uniform(0.5, 1.0)});
    }
    FlowParams p;
    const FlowField g = energy_gradient(src, dst, w, ms, p);
    const double h = 1e-6;
    for (int k = 0; k < 20; ++k) {
        const int x = 1 + static_cast<int>(rng.below(14)), y = 1 + static_cast<int>(rng.below(14));
        const std::size_t i = w.index(x, y);
        for (int comp = 0; comp < 2; ++comp) {
            FlowField plus = w, minus = w;
            (comp == 0 ? plus.u : plus.v)[i] += h;
            (comp == 0 ? minus.u : minus.v)[i] -= h;
            const double fd = (energy(src, dst, plus, ms, p) - energy(src, dst, minus, ms, p)) / (2 * h);
            const double an = (comp == 0 ? g.u : g.v)[i];
            CHECK(std::abs(fd - an) / std::max(std::abs(fd), 1e-3) < 1e-4);
        }
    }
}

TEST_CASE("compute_flow: identical frames give zero flow") {
    const Image tex = random_texture(32, 32, 36);
    const auto f = compute_flow(tex, tex, {}, {});
    CHECK(max_magnitude(f) < 1e-3);
    CHECK_THROWS_AS(compute_flow(Image(8, 8), Image(8, 8), {}, {}), InvalidParameter);
}

TEST_CASE("compute_flow recovers a one-pixel shift") {
    const Image src = random_texture(64, 64, 37);
    const Image dst = shift_image(src, 1, 0);
    const auto matches = matching::match_images(src, dst, {});
    const auto result = compute_flow_traced(src, dst, matches, {});
    const PixelMask inner = interior(64, 64, 4);
    CHECK(endpoint_error(result.flow, FlowField(64, 64, 1.0, 0.0), &inner) < 0.2);
    for (std::size_t k = 1; k < result.finest_energy.size(); ++k) {
        CHECK(result.finest_energy[k] <= result.finest_energy[k - 1] * (1 + 1e-8));
    }
}

TEST_CASE("beta = 0 makes the flow independent of the matches") {
    const Image src = random_texture(32, 32, 38);
    const Image dst = shift_image(src, 1, 1);
    FlowParams p;
    p.beta = 0.0;
    matching::MatchSet some;
    some.entries.push_back({3, 3, 8, 9, 0.9});
    some.entries.push_back({10, 12, 10, 12, 0.7});
    const auto a = compute_flow(src, dst, {}, p);
    const auto b = compute_flow(src, dst, some, p);
    CHECK(a == b);
}

TEST_CASE("flow rotates with the images") {
    const Image src = random_texture(48, 48, 39, 1.5);
    const Image dst = shift_image(src, 1, 0);
    auto rot = [](const Image& in) {  // 90 degrees: (x, y) -> (H-1-y, x)
        Image out(in.height, in.width);
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) out.at(in.height - 1 - y, x) = in.at(x, y);
        }
        return out;
    };
    FlowParams p;
    p.beta = 0.0;
    p.outer_iters = 10;
    p.solver_iters = 200;
    const auto f = compute_flow(src, dst, {}, p);
    const auto fr = compute_flow(rot(src), rot(dst), {}, p);
    double worst = 0.0;
    for (int y = 8; y < 40; ++y) {
        for (int x = 8; x < 40; ++x) {
            const std::size_t i = f.index(x, y);
            const std::size_t j = fr.index(47 - y, x);
            worst = std::max({worst, std::abs(fr.u[j] + f.v[i]), std::abs(fr.v[j] - f.u[i])});
        }
    }
    MESSAGE("max equivariance deviation ", worst);
    CHECK(worst < 1e-3);
}

TEST_CASE("flow_sequence lengths and identical frames") {
    ImageSequence seq;
    const Image tex = random_texture(16, 16, 40);
    for (int j = 0; j < 25; ++j) seq.frames.push_back(tex);
    FlowParams p;
    const auto flows = flow_sequence(seq, p);
    CHECK(flows.size() == 24);
    for (const auto& f : flows) CHECK(max_magnitude(f) < 1e-3);
    ImageSequence one;
    one.frames.push_back(tex);
    CHECK_THROWS_AS(flow_sequence(one, p), InvalidParameter);
}

TEST_CASE("rotating disc: per-pair AAE against the analytic rotation field") {
    const int size = 64;
    const double radius = 26.0;
    const double step = std::numbers::pi / 180.0;
    const Image disc_tex = random_texture(size, size, 41, 1.2);
    const Image bg = random_texture(size, size, 42, 1.2);
    ImageSequence seq;
    for (int j = 0; j < 4; ++j) seq.frames.push_back(rotated_disc(disc_tex, bg, j * step, radius));
    const auto flows = flow_sequence(seq, {});
    const double c = (size - 1) / 2.0;
    FlowField gt(size, size);
    PixelMask inside(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double rx = x - c, ry = y - c;
            const std::size_t i = gt.index(x, y);
            gt.u[i] = std::cos(step) * rx - std::sin(step) * ry - rx;
            gt.v[i] = std::sin(step) * rx + std::cos(step) * ry - ry;
            inside.labels[i] = std::hypot(rx, ry) < radius - 3 ? 1 : 0;
        }
    }
    for (const auto& f : flows) {
        const auto e = average_angular_error(f, gt, &inside);
        MESSAGE("AAE ", format_angular_error(e));
        CHECK(e.mean_deg < 10.0);
    }
}

TEST_CASE("angular error closed forms and symmetry") {
    FlowField a(4, 3, 1.0, 0.0), b(4, 3, 0.0, 1.0);
    CHECK(average_angular_error(a, a).mean_deg == 0.0);
    const auto e = average_angular_error(a, b);
    CHECK(std::abs(e.mean_deg - 60.0) < 1e-9);
    CHECK(e.std_deg < 1e-9);
    CHECK(format_angular_error({5.71, 2.34, 1}) == "5.7°±2.3°");
    Rng rng(43);
    for (int t = 0; t < 20; ++t) {
        FlowField x(5, 5), y(5, 5);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x.u[i] = rng.uniform(-2, 2);
            x.v[i] = rng.uniform(-2, 2);
            y.u[i] = rng.uniform(-2, 2);
            y.v[i] = rng.uniform(-2, 2);
        }
        CHECK(std::abs(average_angular_error(x, y).mean_deg - average_angular_error(y, x).mean_deg) < 1e-12);
    }
}

TEST_CASE("flow density") {
    FlowField f(4, 4);
    CHECK(flow_density(f) == 1.0);
    for (int i = 0; i < 4; ++i) f.u[i] = kUnknownFlowValue;
    CHECK(flow_density(f) == 0.75);
    PixelMask m(4, 4);
    m.at(0, 3) = 1;
    CHECK(flow_density(f, &m) == 1.0);
}
