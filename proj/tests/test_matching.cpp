#include "doctest.h"

#include <algorithm>
#include <map>
#include <sstream>

#include "cardio/error.hpp"
#include "cardio/matching.hpp"
#include "test_util.hpp"

using namespace cardio;
using namespace cardio::matching;
using cardio::testing::random_texture;
using cardio::testing::shift_image;

namespace {

std::vector<double> patch(const Image& img, int cx, int cy, int n) {
    std::vector<double> p;
    for (int dy = 0; dy < n; ++dy) {
        for (int dx = 0; dx < n; ++dx) p.push_back(img.clamped(cx - n / 2 + dx, cy - n / 2 + dy));
    }
    return p;
}

// Argmax displacement of one map, relative to its anchor, in pixels.
std::pair<int, int> map_argmax(const CorrelationMapStack& s, int ax, int ay) {
    const auto m = s.map(ax, ay);
    const auto idx = static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
    const int kx = s.origin_x(ax) + idx % s.window();
    const int ky = s.origin_y(ay) + idx / s.window();
    return {kx * s.candidate_spacing - ax * s.anchor_stride, ky * s.candidate_spacing - ay * s.anchor_stride};
}

// Brute-force search of the best target position with patch_similarity.
std::pair<int, int> brute_force_best(const Image& src, const Image& dst, int px, int py, int n, int radius) {
    const auto a = patch(src, px, py, n);
    double best = -1.0;
    std::pair<int, int> arg{0, 0};
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const int qx = px + dx, qy = py + dy;
            if (qx < 0 || qy < 0 || qx >= dst.width || qy >= dst.height) continue;
            const double s = patch_similarity(a, patch(dst, qx, qy, n));
            if (s > best) {
                best = s;
                arg = {dx, dy};
            }
        }
    }
    return arg;
}

}  // namespace

TEST_CASE("patch_similarity closed-form cases") {
    const Image tex = random_texture(8, 8, 4);
    const auto a = patch(tex, 4, 4, 4);
    CHECK(patch_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> flat(16, 0.3);
    CHECK(patch_similarity(flat, a) == 0.0);
    CHECK(patch_similarity(a, flat) == 0.0);
    std::vector<double> neg(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i];
    CHECK(std::abs(patch_similarity(a, neg)) < 1e-12);
    CHECK_THROWS_AS(patch_similarity(a, std::vector<double>(9, 0.1)), InvalidParameter);
}

TEST_CASE("patch_similarity is symmetric and invariant to affine intensity changes") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(16), b(16);
        for (double& v : a) v = rng.uniform();
        for (double& v : b) v = rng.uniform();
        const double s = patch_similarity(a, b);
        CHECK(std::abs(s - patch_similarity(b, a)) < 1e-12);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        const double gain = rng.uniform(0.1, 5.0), bias = rng.uniform(-2.0, 2.0);
        std::vector<double> c(16);
        for (int i = 0; i < 16; ++i) c[i] = gain * b[i] + bias;
        CHECK(std::abs(s - patch_similarity(a, c)) < 1e-10);
    }
}

TEST_CASE("bottom_correlation self match peaks at zero displacement") {
    const Image tex = random_texture(16, 16, 21);
    const auto s = bottom_correlation(tex, tex, 4);
    CHECK(s.anchors_x == 8);
    for (int ay = 0; ay < s.anchors_y; ++ay) {
        for (int ax = 0; ax < s.anchors_x; ++ax) CHECK(map_argmax(s, ax, ay) == std::pair{0, 0});
    }
}

TEST_CASE("bottom_correlation on a (2,0) shift agrees with brute-force NCC search") {
    const Image src = random_texture(16, 16, 22);
    const Image dst = shift_image(src, 2, 0);
    const auto s = bottom_correlation(src, dst, 4);
    for (int ay = 1; ay < s.anchors_y - 1; ++ay) {
        for (int ax = 1; ax < s.anchors_x - 2; ++ax) {
            const auto got = map_argmax(s, ax, ay);
            CHECK(got == std::pair{2, 0});
            CHECK(got == brute_force_best(src, dst, ax * 2, ay * 2, 4, s.window_radius));
        }
    }
}

TEST_CASE("bottom_correlation on constant images is all zero; bad inputs throw") {
    const Image c(16, 16, 0.4);
    const auto s = bottom_correlation(c, c, 4);
    CHECK(std::all_of(s.scores.begin(), s.scores.end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(bottom_correlation(Image(3, 3), Image(3, 3), 4), InvalidParameter);
    CHECK_THROWS_AS(bottom_correlation(Image(8, 8), Image(8, 9), 4), InvalidParameter);
    CHECK_THROWS_AS(bottom_correlation(Image(8, 8), Image(8, 8), 6), InvalidParameter);
}

TEST_CASE("aggregation keeps self match and the shift, coarsens the grid") {
    const Image src = random_texture(16, 16, 23);
    const auto self0 = bottom_correlation(src, src, 4);
    const auto self1 = aggregate_level(self0);
    CHECK(self1.patch_size == 8);
    CHECK(self1.anchors_x == (self0.anchors_x + 1) / 2);
    CHECK(self1.anchors_y == (self0.anchors_y + 1) / 2);
    CHECK(self1.candidate_spacing == 2);
    for (int ay = 0; ay < self1.anchors_y; ++ay) {
        for (int ax = 0; ax < self1.anchors_x; ++ax) CHECK(map_argmax(self1, ax, ay) == std::pair{0, 0});
    }

    const Image dst = shift_image(src, 2, 0);
    const auto lvl1 = aggregate_level(bottom_correlation(src, dst, 4));
    for (int ay = 1; ay < lvl1.anchors_y - 1; ++ay) {
        for (int ax = 1; ax < lvl1.anchors_x - 1; ++ax) {
            CHECK(map_argmax(lvl1, ax, ay) == std::pair{2, 0});
            CHECK(brute_force_best(src, dst, ax * 4, ay * 4, 8, 8) == std::pair{2, 0});
        }
    }
    for (double v : lvl1.scores) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(aggregate_level(aggregate_level(aggregate_level(self0))), CannotAggregate);
}

TEST_CASE("pyramid depth stops once patch size reaches half the image") {
    const Image tex = random_texture(64, 64, 24);
    const auto pyr = build_pyramid(tex, tex, {});
    REQUIRE(pyr.size() == 4);
    CHECK(pyr.back().patch_size == 32);
    for (std::size_t l = 1; l < pyr.size(); ++l) {
        CHECK(pyr[l].candidate_spacing > pyr[l - 1].candidate_spacing);
        for (double v : pyr[l].scores) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
}

TEST_CASE("extract_matches on identical, shifted, and flat pairs") {
    const Image src = random_texture(32, 32, 25);
    const auto same = match_images(src, src, {});
    CHECK(same.size() > 100);
    for (const auto& m : same.entries) {
        CHECK(m.dx() == 0);
        CHECK(m.dy() == 0);
        CHECK(m.confidence > 0.0);
        CHECK(m.confidence <= 1.0);
    }

    const Image dst = shift_image(src, 2, 0);
    const auto shifted = match_images(src, dst, {});
    CHECK(shifted.size() > 100);
    for (const auto& m : shifted.entries) {
        CHECK(m.dx() == 2);
        CHECK(m.dy() == 0);
        CHECK(m.x_prime >= 0);
        CHECK(m.x_prime < 32);
    }

    const Image flat(32, 32, 0.5);
    CHECK(match_images(flat, flat, {}).empty());

    CHECK_THROWS_AS(extract_matches({}, {}, 0.5), InvalidParameter);
    const auto pyr = build_pyramid(src, src, {});
    CHECK_THROWS_AS(extract_matches(pyr, pyr, 1.5), InvalidParameter);
}

TEST_CASE("displacement histogram mode equals the true integer shift") {
    for (auto [dx, dy] : std::vector<std::pair<int, int>>{{1, 0}, {0, -2}, {3, 1}, {-1, -1}}) {
        const Image src = random_texture(32, 32, 100 + dx * 7 + dy);
        const Image dst = shift_image(src, dx, dy);
        const auto matches = match_images(src, dst, {});
        REQUIRE_FALSE(matches.empty());
        std::map<std::pair<int, int>, int> histogram;
        for (const auto& m : matches.entries) ++histogram[{m.dx(), m.dy()}];
        const auto mode = std::max_element(histogram.begin(), histogram.end(),
                                           [](auto& a, auto& b) { return a.second < b.second; });
        CHECK(mode->first == std::pair{dx, dy});
    }
}

TEST_CASE("matches serialize as CSV") {
    MatchSet ms;
    ms.entries.push_back({1, 2, 3, 4, 0.75});
    std::ostringstream out;
    write_matches_csv(ms, out);
    CHECK(out.str() == "x,y,x',y',confidence\n1,2,3,4,0.75\n");
}
