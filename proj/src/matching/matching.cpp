#include "cardio/matching.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "cardio/error.hpp"
#include "cardio/simd.hpp"

namespace cardio::matching {
namespace {

constexpr double kMinCenteredEnergy = 1e-12;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Replicate-padded N x N patch whose top-left is (cx - N/2, cy - N/2).
void gather_patch(const Image& img, int cx, int cy, int n, double* out) {
    const int half = n / 2;
    for (int dy = 0; dy < n; ++dy) {
        for (int dx = 0; dx < n; ++dx) *out++ = img.clamped(cx - half + dx, cy - half + dy);
    }
}

// Mean-removes in place and scales to unit norm; returns false for flat patches.
bool center_and_normalize(std::span<double> patch) {
    const double mean = simd::sum(patch) / static_cast<double>(patch.size());
    for (double& v : patch) v -= mean;
    const double energy = simd::sum_sq(patch);
    if (energy < kMinCenteredEnergy) return false;
    const double inv = 1.0 / std::sqrt(energy);
    for (double& v : patch) v *= inv;
    return true;
}

void check_stack(const CorrelationMapStack& s) {
    if (s.anchors_x <= 0 || s.anchors_y <= 0 || s.scores.size() != s.anchor_count() * s.map_size()) {
        throw InvalidParameter("empty or inconsistent correlation stack");
    }
}

}  // namespace

std::span<const double> CorrelationMapStack::map(int ax, int ay) const {
    const std::size_t idx = static_cast<std::size_t>(ay) * anchors_x + ax;
    return {scores.data() + idx * map_size(), map_size()};
}

std::span<double> CorrelationMapStack::map(int ax, int ay) {
    const std::size_t idx = static_cast<std::size_t>(ay) * anchors_x + ax;
    return {scores.data() + idx * map_size(), map_size()};
}

double patch_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw InvalidParameter("patch sizes differ");
    const double n = static_cast<double>(a.size());
    const double ma = simd::sum(a) / n;
    const double mb = simd::sum(b) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa < kMinCenteredEnergy || sbb < kMinCenteredEnergy) return 0.0;
    const double ncc = std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
    return 0.5 * (ncc + 1.0);
}

CorrelationMapStack bottom_correlation(const Image& src, const Image& dst, int patch_size, int search_radius) {
    if (!src.same_shape(dst)) throw InvalidParameter("bottom_correlation: image dimensions differ");
    if (!is_power_of_two(patch_size) || patch_size < 4) {
        throw InvalidParameter("patch size must be a power of two >= 4");
    }
    if (std::min(src.width, src.height) < patch_size) throw InvalidParameter("image smaller than patch");
    const int radius = search_radius > 0 ? search_radius : std::max(1, std::min(src.width, src.height) / 2);

    CorrelationMapStack s;
    s.level = 0;
    s.patch_size = patch_size;
    s.image_width = src.width;
    s.image_height = src.height;
    s.anchor_stride = patch_size / 2;
    s.anchors_x = (src.width + s.anchor_stride - 1) / s.anchor_stride;
    s.anchors_y = (src.height + s.anchor_stride - 1) / s.anchor_stride;
    s.candidate_spacing = 1;
    s.window_radius = radius;
    s.scores.assign(s.anchor_count() * s.map_size(), 0.0);

    const std::size_t pn = static_cast<std::size_t>(patch_size) * patch_size;

    // Target patches, mean-removed and unit-normalized, one per pixel.
    std::vector<double> targets(static_cast<std::size_t>(dst.width) * dst.height * pn);
    std::vector<char> target_ok(static_cast<std::size_t>(dst.width) * dst.height);
    for (int y = 0; y < dst.height; ++y) {
        for (int x = 0; x < dst.width; ++x) {
            const std::size_t q = static_cast<std::size_t>(y) * dst.width + x;
            double* p = targets.data() + q * pn;
            gather_patch(dst, x, y, patch_size, p);
            target_ok[q] = center_and_normalize({p, pn});
        }
    }

    std::vector<double> anchor(pn);
    const int win = s.window();
    for (int ay = 0; ay < s.anchors_y; ++ay) {
        for (int ax = 0; ax < s.anchors_x; ++ax) {
            const int px = ax * s.anchor_stride;
            const int py = ay * s.anchor_stride;
            gather_patch(src, px, py, patch_size, anchor.data());
            if (!center_and_normalize(anchor)) continue;
            auto m = s.map(ax, ay);
            const int ox = s.origin_x(ax);
            const int oy = s.origin_y(ay);
            for (int wy = 0; wy < win; ++wy) {
                const int qy = oy + wy;
                if (qy < 0 || qy >= dst.height) continue;
                for (int wx = 0; wx < win; ++wx) {
                    const int qx = ox + wx;
                    if (qx < 0 || qx >= dst.width) continue;
                    const std::size_t q = static_cast<std::size_t>(qy) * dst.width + qx;
                    if (!target_ok[q]) continue;
                    const double ncc = simd::dot(anchor, {targets.data() + q * pn, pn});
                    m[static_cast<std::size_t>(wy) * win + wx] = 0.5 * (std::clamp(ncc, -1.0, 1.0) + 1.0);
                }
            }
        }
    }
    return s;
}

CorrelationMapStack aggregate_level(const CorrelationMapStack& lower, double nu) {
    check_stack(lower);
    if (2 * lower.patch_size > std::min(lower.image_width, lower.image_height)) {
        throw CannotAggregate("correlation level already spans the image");
    }
    if (!(nu > 0.0) || !std::isfinite(nu)) throw InvalidParameter("rectification exponent must be positive");

    CorrelationMapStack up;
    up.level = lower.level + 1;
    up.patch_size = lower.patch_size * 2;
    up.image_width = lower.image_width;
    up.image_height = lower.image_height;
    up.anchor_stride = lower.anchor_stride * 2;
    up.anchors_x = (lower.anchors_x + 1) / 2;
    up.anchors_y = (lower.anchors_y + 1) / 2;
    up.candidate_spacing = lower.candidate_spacing * 2;
    up.window_radius = (lower.window_radius + 1) / 2;
    up.scores.assign(up.anchor_count() * up.map_size(), 0.0);

    const int lw = lower.window();
    const int uw = up.window();
    // Child quadrant offset expressed in parent candidate units.
    const int shift = lower.patch_size / (4 * lower.candidate_spacing);

    // Max-pooled child maps (3x3 in child candidate space, clipped to the window).
    std::vector<double> pooled(lower.scores.size());
    for (std::size_t a = 0; a < lower.anchor_count(); ++a) {
        const double* m = lower.scores.data() + a * lower.map_size();
        double* out = pooled.data() + a * lower.map_size();
        for (int y = 0; y < lw; ++y) {
            for (int x = 0; x < lw; ++x) {
                double best = 0.0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= lw) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= lw) continue;
                        best = std::max(best, m[static_cast<std::size_t>(yy) * lw + xx]);
                    }
                }
                out[static_cast<std::size_t>(y) * lw + x] = best;
            }
        }
    }

    for (int jy = 0; jy < up.anchors_y; ++jy) {
        for (int jx = 0; jx < up.anchors_x; ++jx) {
            auto parent = up.map(jx, jy);
            const int pox = up.origin_x(jx);
            const int poy = up.origin_y(jy);
            int children = 0;
            for (int qy = -1; qy <= 1; qy += 2) {
                const int cy = 2 * jy + qy;
                if (cy < 0 || cy >= lower.anchors_y) continue;
                for (int qx = -1; qx <= 1; qx += 2) {
                    const int cx = 2 * jx + qx;
                    if (cx < 0 || cx >= lower.anchors_x) continue;
                    ++children;
                    const double* child = pooled.data() +
                                          (static_cast<std::size_t>(cy) * lower.anchors_x + cx) * lower.map_size();
                    const int cox = lower.origin_x(cx);
                    const int coy = lower.origin_y(cy);
                    for (int wy = 0; wy < uw; ++wy) {
                        const int ky = 2 * (poy + wy + qy * shift) - coy;
                        if (ky < 0 || ky >= lw) continue;
                        for (int wx = 0; wx < uw; ++wx) {
                            const int kx = 2 * (pox + wx + qx * shift) - cox;
                            if (kx < 0 || kx >= lw) continue;
                            parent[static_cast<std::size_t>(wy) * uw + wx] +=
                                child[static_cast<std::size_t>(ky) * lw + kx];
                        }
                    }
                }
            }
            if (children == 0) continue;
            const double inv = 1.0 / children;
            for (double& v : parent) v = std::pow(std::clamp(v * inv, 0.0, 1.0), nu);
        }
    }
    return up;
}

CorrelationPyramid build_pyramid(const Image& src, const Image& dst, const MatcherConfig& config) {
    CorrelationPyramid levels;
    levels.push_back(bottom_correlation(src, dst, config.patch_size, config.search_radius));
    const int min_dim = std::min(src.width, src.height);
    while (2 * levels.back().patch_size <= min_dim && levels.back().patch_size < min_dim / 2) {
        levels.push_back(aggregate_level(levels.back(), config.nu));
    }
    return levels;
}

namespace {

struct Leaf {
    int target_x = 0;
    int target_y = 0;
    double score = -1.0;
};

// Follows one (anchor, candidate) entry at `level` down to level 0.
void descend(const CorrelationPyramid& pyr, int level, int ax, int ay, int kx, int ky, double root_score,
             std::vector<Leaf>& leaves) {
    const CorrelationMapStack& s = pyr[level];
    if (level == 0) {
        if (kx < 0 || ky < 0 || kx >= s.image_width || ky >= s.image_height) return;
        Leaf& leaf = leaves[static_cast<std::size_t>(ay) * s.anchors_x + ax];
        if (root_score > leaf.score) leaf = {kx, ky, root_score};
        return;
    }
    const CorrelationMapStack& lower = pyr[level - 1];
    const int shift = lower.patch_size / (4 * lower.candidate_spacing);
    const int lw = lower.window();
    // The four quadrant children carry the aggregated evidence; the children
    // sharing the parent centre or an edge midpoint are followed as well so
    // that every bottom anchor is reachable.
    for (int qy = -1; qy <= 1; ++qy) {
        const int cy = 2 * ay + qy;
        if (cy < 0 || cy >= lower.anchors_y) continue;
        for (int qx = -1; qx <= 1; ++qx) {
            const int cx = 2 * ax + qx;
            if (cx < 0 || cx >= lower.anchors_x) continue;
            const auto m = lower.map(cx, cy);
            const int cox = lower.origin_x(cx);
            const int coy = lower.origin_y(cy);
            const int centre_x = 2 * (kx + qx * shift);
            const int centre_y = 2 * (ky + qy * shift);
            int best_x = -1, best_y = -1;
            double best = -1.0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int wy = centre_y + dy - coy;
                if (wy < 0 || wy >= lw) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int wx = centre_x + dx - cox;
                    if (wx < 0 || wx >= lw) continue;
                    const double v = m[static_cast<std::size_t>(wy) * lw + wx];
                    if (v > best) {
                        best = v;
                        best_x = centre_x + dx;
                        best_y = centre_y + dy;
                    }
                }
            }
            if (best < 0.0) continue;
            descend(pyr, level - 1, cx, cy, best_x, best_y, root_score, leaves);
        }
    }
}

}  // namespace

MatchSet backtrack(const CorrelationPyramid& pyramid) {
    if (pyramid.empty()) throw InvalidParameter("empty correlation pyramid");
    for (const auto& s : pyramid) check_stack(s);
    const CorrelationMapStack& top = pyramid.back();
    const CorrelationMapStack& bottom = pyramid.front();
    std::vector<Leaf> leaves(bottom.anchor_count());
    const int tw = top.window();
    for (int ay = 0; ay < top.anchors_y; ++ay) {
        for (int ax = 0; ax < top.anchors_x; ++ax) {
            const auto m = top.map(ax, ay);
            const auto it = std::max_element(m.begin(), m.end());
            if (*it <= 0.0) continue;
            const auto idx = static_cast<int>(it - m.begin());
            const int kx = top.origin_x(ax) + idx % tw;
            const int ky = top.origin_y(ay) + idx / tw;
            descend(pyramid, static_cast<int>(pyramid.size()) - 1, ax, ay, kx, ky, *it, leaves);
        }
    }
    MatchSet out;
    for (int ay = 0; ay < bottom.anchors_y; ++ay) {
        for (int ax = 0; ax < bottom.anchors_x; ++ax) {
            const Leaf& leaf = leaves[static_cast<std::size_t>(ay) * bottom.anchors_x + ax];
            if (leaf.score <= 0.0) continue;
            out.entries.push_back({ax * bottom.anchor_stride, ay * bottom.anchor_stride, leaf.target_x,
                                   leaf.target_y, leaf.score});
        }
    }
    return out;
}

MatchSet extract_matches(const CorrelationPyramid& forward, const CorrelationPyramid& reverse, double threshold,
                         int reciprocal_tolerance) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidParameter("threshold must lie in (0,1)");
    const MatchSet fwd = backtrack(forward);
    const MatchSet rev = backtrack(reverse);
    const CorrelationMapStack& rb = reverse.front();

    // Reverse displacement per reverse anchor.
    std::vector<const Match*> by_anchor(rb.anchor_count(), nullptr);
    for (const Match& m : rev.entries) {
        by_anchor[static_cast<std::size_t>(m.y / rb.anchor_stride) * rb.anchors_x + m.x / rb.anchor_stride] = &m;
    }

    MatchSet out;
    for (const Match& m : fwd.entries) {
        if (m.confidence < threshold) continue;
        // Reverse anchors within one pixel of the target, per axis.
        bool agreed = false;
        for (int ty = m.y_prime - 1; ty <= m.y_prime + 1 && !agreed; ++ty) {
            if (ty < 0 || ty % rb.anchor_stride != 0 || ty / rb.anchor_stride >= rb.anchors_y) continue;
            for (int tx = m.x_prime - 1; tx <= m.x_prime + 1 && !agreed; ++tx) {
                if (tx < 0 || tx % rb.anchor_stride != 0 || tx / rb.anchor_stride >= rb.anchors_x) continue;
                const Match* back =
                    by_anchor[static_cast<std::size_t>(ty / rb.anchor_stride) * rb.anchors_x + tx / rb.anchor_stride];
                agreed = back != nullptr && std::abs(m.dx() + back->dx()) <= reciprocal_tolerance &&
                         std::abs(m.dy() + back->dy()) <= reciprocal_tolerance;
            }
        }
        if (!agreed) continue;
        out.entries.push_back(m);
    }
    return out;
}

MatchSet match_images(const Image& src, const Image& dst, const MatcherConfig& config) {
    const auto fwd = build_pyramid(src, dst, config);
    const auto rev = build_pyramid(dst, src, config);
    return extract_matches(fwd, rev, config.threshold, config.reciprocal_tolerance);
}

void write_matches_csv(const MatchSet& matches, std::ostream& out) {
    out << "x,y,x',y',confidence\n";
    for (const Match& m : matches.entries) {
        out << m.x << ',' << m.y << ',' << m.x_prime << ',' << m.y_prime << ',' << m.confidence << '\n';
    }
}

}  // namespace cardio::matching
