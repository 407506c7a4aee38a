#include "cardio/varflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cardio/error.hpp"

namespace cardio::varflow {
namespace {

struct Sample {
    double value;
    double dx;
    double dy;
};

// Bilinear interpolant and its exact partial derivatives.
Sample sample_with_gradient(const Image& img, double x, double y) {
    const double cx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const int x0 = img.width > 1 ? std::min(static_cast<int>(cx), img.width - 2) : 0;
    const int y0 = img.height > 1 ? std::min(static_cast<int>(cy), img.height - 2) : 0;
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = cx - x0;
    const double fy = cy - y0;
    const double a = img.at(x0, y0), b = img.at(x1, y0), c = img.at(x0, y1), d = img.at(x1, y1);
    Sample s;
    s.value = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
    const bool free_x = x >= 0.0 && x <= img.width - 1 && img.width > 1;
    const bool free_y = y >= 0.0 && y <= img.height - 1 && img.height > 1;
    s.dx = free_x ? (1.0 - fy) * (b - a) + fy * (d - c) : 0.0;
    s.dy = free_y ? (1.0 - fx) * (c - a) + fx * (d - b) : 0.0;
    return s;
}

struct PairImages {
    Image i1, i1x, i1y;
    Image i2, i2x, i2y, i2xx, i2xy, i2yy;

    PairImages(const Image& src, const Image& dst)
        : i1(src),
          i1x(derivative_x(src)),
          i1y(derivative_y(src)),
          i2(dst),
          i2x(derivative_x(dst)),
          i2y(derivative_y(dst)),
          i2xx(derivative_x(i2x)),
          i2xy(derivative_y(i2x)),
          i2yy(derivative_y(i2y)) {}
};

bool warped_inside(const Image& img, double x, double y) {
    return x >= 0.0 && y >= 0.0 && x <= img.width - 1 && y <= img.height - 1;
}

// Per-pixel match support at one resolution.
struct MatchField {
    std::vector<double> confidence;
    std::vector<double> u;
    std::vector<double> v;
};

MatchField rasterize_matches(const matching::MatchSet& matches, int width, int height, int scale_pow) {
    MatchField f;
    const std::size_t n = static_cast<std::size_t>(width) * height;
    f.confidence.assign(n, 0.0);
    f.u.assign(n, 0.0);
    f.v.assign(n, 0.0);
    const int scale = 1 << scale_pow;
    for (const auto& m : matches.entries) {
        const int x = m.x / scale;
        const int y = m.y / scale;
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        if (m.confidence <= f.confidence[i]) continue;
        f.confidence[i] = m.confidence;
        f.u[i] = static_cast<double>(m.dx()) / scale;
        f.v[i] = static_cast<double>(m.dy()) / scale;
    }
    return f;
}

void check_flow_shape(const Image& src, const Image& dst, const FlowField& w) {
    if (!src.same_shape(dst)) throw InvalidParameter("flow: image dimensions differ");
    if (w.width != src.width || w.height != src.height) throw InvalidParameter("flow: field dimensions differ");
}

// Smoothness argument at pixel i using forward differences (zero past the border).
double smooth_arg(const FlowField& w, int x, int y) {
    const std::size_t i = w.index(x, y);
    double s = 0.0;
    if (x + 1 < w.width) {
        const std::size_t r = i + 1;
        s += (w.u[r] - w.u[i]) * (w.u[r] - w.u[i]) + (w.v[r] - w.v[i]) * (w.v[r] - w.v[i]);
    }
    if (y + 1 < w.height) {
        const std::size_t d = i + w.width;
        s += (w.u[d] - w.u[i]) * (w.u[d] - w.u[i]) + (w.v[d] - w.v[i]) * (w.v[d] - w.v[i]);
    }
    return s;
}

double energy_impl(const PairImages& im, const FlowField& w, const MatchField& mf, const FlowParams& p) {
    double e = 0.0;
    for (int y = 0; y < w.height; ++y) {
        for (int x = 0; x < w.width; ++x) {
            const std::size_t i = w.index(x, y);
            const double wx = x + w.u[i];
            const double wy = y + w.v[i];
            if (warped_inside(im.i2, wx, wy)) {
                const double r0 = sample_bilinear(im.i2, wx, wy) - im.i1.data[i];
                const double rx = sample_bilinear(im.i2x, wx, wy) - im.i1x.data[i];
                const double ry = sample_bilinear(im.i2y, wx, wy) - im.i1y.data[i];
                e += p.delta * penalize(r0 * r0, p.epsilon) + p.gamma * penalize(rx * rx + ry * ry, p.epsilon);
            }
            e += p.alpha * penalize(smooth_arg(w, x, y), p.epsilon);
            if (mf.confidence[i] > 0.0) {
                const double du = w.u[i] - mf.u[i];
                const double dv = w.v[i] - mf.v[i];
                e += p.beta * mf.confidence[i] * penalize(du * du + dv * dv, p.epsilon);
            }
        }
    }
    return e;
}

MotionTensor tensor_impl(const PairImages& im, const FlowField& w) {
    MotionTensor t;
    t.width = w.width;
    t.height = w.height;
    t.brightness.resize(w.size());
    t.gradient.resize(w.size());
    t.inside.resize(w.size());
    for (int y = 0; y < w.height; ++y) {
        for (int x = 0; x < w.width; ++x) {
            const std::size_t i = w.index(x, y);
            const double wx = x + w.u[i];
            const double wy = y + w.v[i];
            t.inside[i] = warped_inside(im.i2, wx, wy) ? 1 : 0;
            const double ix = sample_bilinear(im.i2x, wx, wy);
            const double iy = sample_bilinear(im.i2y, wx, wy);
            const double it = sample_bilinear(im.i2, wx, wy) - im.i1.data[i];
            t.brightness[i] = {ix * ix, ix * iy, ix * it, iy * iy, iy * it, it * it};

            const double ixx = sample_bilinear(im.i2xx, wx, wy);
            const double ixy = sample_bilinear(im.i2xy, wx, wy);
            const double iyy = sample_bilinear(im.i2yy, wx, wy);
            const double ixt = ix - im.i1x.data[i];
            const double iyt = iy - im.i1y.data[i];
            t.gradient[i] = {ixx * ixx + ixy * ixy, ixx * ixy + ixy * iyy, ixx * ixt + ixy * iyt,
                             ixy * ixy + iyy * iyy, ixy * ixt + iyy * iyt, ixt * ixt + iyt * iyt};
        }
    }
    return t;
}

bool all_finite(const FlowField& w) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w.u[i]) || !std::isfinite(w.v[i])) return false;
    }
    return true;
}

// One lazy-linearization step: IRLS weights frozen at the current flow,
// increment solved by SOR, then a backtracking line search that only
// accepts steps which do not raise the energy.
double outer_step(const PairImages& im, FlowField& w, const MatchField& mf, const FlowParams& p, double e_current) {
    const int W = w.width;
    const int H = w.height;
    const std::size_t n = w.size();
    const MotionTensor t = tensor_impl(im, w);

    std::vector<double> psi_data0(n), psi_data1(n), psi_smooth(n), psi_match(n);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t i = w.index(x, y);
            psi_data0[i] = t.inside[i] ? p.delta * penalize_derivative(t.brightness[i][5], p.epsilon) : 0.0;
            psi_data1[i] = t.inside[i] ? p.gamma * penalize_derivative(t.gradient[i][5], p.epsilon) : 0.0;
            psi_smooth[i] = p.alpha * penalize_derivative(smooth_arg(w, x, y), p.epsilon);
            if (mf.confidence[i] > 0.0) {
                const double du = w.u[i] - mf.u[i];
                const double dv = w.v[i] - mf.v[i];
                psi_match[i] = p.beta * mf.confidence[i] * penalize_derivative(du * du + dv * dv, p.epsilon);
            } else {
                psi_match[i] = 0.0;
            }
        }
    }

    FlowField dw(W, H);
    for (int sweep = 0; sweep < p.solver_iters; ++sweep) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const std::size_t i = w.index(x, y);
                const Tensor3& a = t.brightness[i];
                const Tensor3& b = t.gradient[i];
                const double d11 = psi_data0[i] * a[0] + psi_data1[i] * b[0];
                const double d12 = psi_data0[i] * a[1] + psi_data1[i] * b[1];
                const double d13 = psi_data0[i] * a[2] + psi_data1[i] * b[2];
                const double d22 = psi_data0[i] * a[3] + psi_data1[i] * b[3];
                const double d23 = psi_data0[i] * a[4] + psi_data1[i] * b[4];

                double wsum = 0.0, su = 0.0, sv = 0.0;
                auto edge = [&](std::size_t j, double weight) {
                    wsum += weight;
                    su += weight * (w.u[j] + dw.u[j] - w.u[i]);
                    sv += weight * (w.v[j] + dw.v[j] - w.v[i]);
                };
                if (x + 1 < W) edge(i + 1, psi_smooth[i]);
                if (y + 1 < H) edge(i + W, psi_smooth[i]);
                if (x > 0) edge(i - 1, psi_smooth[i - 1]);
                if (y > 0) edge(i - W, psi_smooth[i - W]);

                const double pm = psi_match[i];
                const double a11 = d11 + wsum + pm;
                const double a22 = d22 + wsum + pm;
                if (a11 > 1e-300) {
                    const double rhs = -d13 - d12 * dw.v[i] + su + pm * (mf.u[i] - w.u[i]);
                    dw.u[i] = (1.0 - p.omega) * dw.u[i] + p.omega * rhs / a11;
                }
                if (a22 > 1e-300) {
                    const double rhs = -d23 - d12 * dw.u[i] + sv + pm * (mf.v[i] - w.v[i]);
                    dw.v[i] = (1.0 - p.omega) * dw.v[i] + p.omega * rhs / a22;
                }
            }
        }
    }
    if (!all_finite(dw)) throw NumericalDivergence("flow increment became non-finite");

    double step = 1.0;
    FlowField trial(W, H);
    for (int attempt = 0; attempt < 12; ++attempt, step *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) {
            trial.u[i] = w.u[i] + step * dw.u[i];
            trial.v[i] = w.v[i] + step * dw.v[i];
        }
        const double e_trial = energy_impl(im, trial, mf, p);
        if (!std::isfinite(e_trial)) throw NumericalDivergence("flow energy became non-finite");
        if (e_trial <= e_current) {
            w = std::move(trial);
            return e_trial;
        }
    }
    return e_current;
}

FlowField upsample_flow(const FlowField& coarse, int width, int height) {
    FlowField fine(width, height);
    Image cu(coarse.width, coarse.height), cv(coarse.width, coarse.height);
    cu.data = coarse.u;
    cv.data = coarse.v;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double sx = (x - 0.5) / 2.0;
            const double sy = (y - 0.5) / 2.0;
            const std::size_t i = fine.index(x, y);
            fine.u[i] = 2.0 * sample_bilinear(cu, sx, sy);
            fine.v[i] = 2.0 * sample_bilinear(cv, sx, sy);
        }
    }
    return fine;
}

}  // namespace

void FlowParams::validate() const {
    auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!finite_nonneg(alpha) || !finite_nonneg(beta) || !finite_nonneg(delta) || !finite_nonneg(gamma) ||
        !finite_nonneg(sigma)) {
        throw InvalidParameter("flow weights must be finite and >= 0");
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("epsilon must be > 0");
    if (outer_iters < 1 || solver_iters < 1) throw InvalidParameter("iteration counts must be >= 1");
    if (!(omega > 1.0 && omega < 2.0)) throw InvalidParameter("omega must lie in (1,2)");
    if (levels < 0) throw InvalidParameter("levels must be >= 0");
    if (min_level_size < 2) throw InvalidParameter("min_level_size must be >= 2");
}

double penalize(double s2, double epsilon) {
    if (!(s2 >= 0.0)) throw InvalidParameter("penalizer argument must be >= 0");
    return std::sqrt(s2 + epsilon * epsilon);
}

double penalize_derivative(double s2, double epsilon) {
    if (!(s2 >= 0.0)) throw InvalidParameter("penalizer argument must be >= 0");
    return 0.5 / std::sqrt(s2 + epsilon * epsilon);
}

double quadratic_form(const Tensor3& t, double du, double dv) {
    return t[0] * du * du + 2.0 * t[1] * du * dv + 2.0 * t[2] * du + t[3] * dv * dv + 2.0 * t[4] * dv + t[5];
}

MotionTensor build_motion_tensor(const Image& src, const Image& dst, const FlowField& current) {
    check_flow_shape(src, dst, current);
    return tensor_impl(PairImages(src, dst), current);
}

double energy(const Image& src, const Image& dst, const FlowField& w, const matching::MatchSet& matches,
              const FlowParams& params) {
    check_flow_shape(src, dst, w);
    params.validate();
    return energy_impl(PairImages(src, dst), w, rasterize_matches(matches, w.width, w.height, 0), params);
}

FlowField energy_gradient(const Image& src, const Image& dst, const FlowField& w, const matching::MatchSet& matches,
                          const FlowParams& p) {
    check_flow_shape(src, dst, w);
    p.validate();
    const PairImages im(src, dst);
    const MatchField mf = rasterize_matches(matches, w.width, w.height, 0);
    FlowField g(w.width, w.height);
    for (int y = 0; y < w.height; ++y) {
        for (int x = 0; x < w.width; ++x) {
            const std::size_t i = w.index(x, y);
            const double wx = x + w.u[i];
            const double wy = y + w.v[i];
            if (warped_inside(im.i2, wx, wy)) {
                const Sample s0 = sample_with_gradient(im.i2, wx, wy);
                const Sample sx = sample_with_gradient(im.i2x, wx, wy);
                const Sample sy = sample_with_gradient(im.i2y, wx, wy);
                const double r0 = s0.value - im.i1.data[i];
                const double rx = sx.value - im.i1x.data[i];
                const double ry = sy.value - im.i1y.data[i];
                const double k0 = p.delta * penalize_derivative(r0 * r0, p.epsilon) * 2.0;
                const double k1 = p.gamma * penalize_derivative(rx * rx + ry * ry, p.epsilon) * 2.0;
                g.u[i] += k0 * r0 * s0.dx + k1 * (rx * sx.dx + ry * sy.dx);
                g.v[i] += k0 * r0 * s0.dy + k1 * (rx * sx.dy + ry * sy.dy);
            }
            // Forward-difference smoothness owned by pixel i touches i, i+1, i+W.
            const double ks = 2.0 * p.alpha * penalize_derivative(smooth_arg(w, x, y), p.epsilon);
            if (x + 1 < w.width) {
                const std::size_t r = i + 1;
                g.u[i] -= ks * (w.u[r] - w.u[i]);
                g.u[r] += ks * (w.u[r] - w.u[i]);
                g.v[i] -= ks * (w.v[r] - w.v[i]);
                g.v[r] += ks * (w.v[r] - w.v[i]);
            }
            if (y + 1 < w.height) {
                const std::size_t d = i + w.width;
                g.u[i] -= ks * (w.u[d] - w.u[i]);
                g.u[d] += ks * (w.u[d] - w.u[i]);
                g.v[i] -= ks * (w.v[d] - w.v[i]);
                g.v[d] += ks * (w.v[d] - w.v[i]);
            }
            if (mf.confidence[i] > 0.0) {
                const double du = w.u[i] - mf.u[i];
                const double dv = w.v[i] - mf.v[i];
                const double km = 2.0 * p.beta * mf.confidence[i] * penalize_derivative(du * du + dv * dv, p.epsilon);
                g.u[i] += km * du;
                g.v[i] += km * dv;
            }
        }
    }
    return g;
}

FlowResult compute_flow_traced(const Image& src, const Image& dst, const matching::MatchSet& matches,
                               const FlowParams& params) {
    params.validate();
    if (!src.same_shape(dst)) throw InvalidParameter("compute_flow: image dimensions differ");
    if (std::min(src.width, src.height) < params.min_level_size) {
        throw InvalidParameter("compute_flow: images smaller than the minimum level size");
    }

    std::vector<Image> pyr1{gaussian_smooth(src, {params.sigma})};
    std::vector<Image> pyr2{gaussian_smooth(dst, {params.sigma})};
    const int wanted = params.levels;
    while (true) {
        const Image& last = pyr1.back();
        const int next_min = (std::min(last.width, last.height) + 1) / 2;
        if (wanted > 0 && static_cast<int>(pyr1.size()) >= wanted) break;
        if (next_min < params.min_level_size) {
            if (wanted > 0) throw InvalidParameter("compute_flow: too many pyramid levels for the image size");
            break;
        }
        pyr1.push_back(downsample_half(last));
        pyr2.push_back(downsample_half(pyr2.back()));
    }

    FlowResult result;
    FlowField w;
    for (int level = static_cast<int>(pyr1.size()) - 1; level >= 0; --level) {
        const Image& a = pyr1[level];
        const Image& b = pyr2[level];
        w = w.size() == 0 ? FlowField(a.width, a.height) : upsample_flow(w, a.width, a.height);
        const PairImages im(a, b);
        const MatchField mf = rasterize_matches(matches, a.width, a.height, level);
        double e = energy_impl(im, w, mf, params);
        if (level == 0) result.finest_energy.push_back(e);
        for (int it = 0; it < params.outer_iters; ++it) {
            e = outer_step(im, w, mf, params, e);
            if (level == 0) result.finest_energy.push_back(e);
        }
    }
    if (!all_finite(w)) throw NumericalDivergence("flow became non-finite");
    result.flow = std::move(w);
    return result;
}

FlowField compute_flow(const Image& src, const Image& dst, const matching::MatchSet& matches,
                       const FlowParams& params) {
    return compute_flow_traced(src, dst, matches, params).flow;
}

FlowSequence flow_sequence(const ImageSequence& seq, const FlowParams& params, const matching::MatcherConfig& matcher) {
    validate_sequence(seq);
    FlowSequence flows;
    flows.reserve(seq.length() - 1);
    for (std::size_t j = 0; j + 1 < seq.length(); ++j) {
        try {
            const matching::MatchSet matches = params.beta > 0.0
                                                   ? matching::match_images(seq.frames[j], seq.frames[j + 1], matcher)
                                                   : matching::MatchSet{};
            flows.push_back(compute_flow(seq.frames[j], seq.frames[j + 1], matches, params));
        } catch (const NumericalDivergence& e) {
            throw NumericalDivergence("frame pair " + std::to_string(j) + ": " + e.what());
        } catch (const InvalidParameter& e) {
            throw InvalidParameter("frame pair " + std::to_string(j) + ": " + e.what());
        }
    }
    return flows;
}

AngularError average_angular_error(const FlowField& est, const FlowField& gt, const PixelMask* mask) {
    if (est.width != gt.width || est.height != gt.height) throw InvalidParameter("AAE: flow dimensions differ");
    if (mask && (mask->width != est.width || mask->height != est.height)) {
        throw InvalidParameter("AAE: mask dimensions differ");
    }
    std::vector<double> angles;
    angles.reserve(est.size());
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (mask && !mask->labels[i]) continue;
        if (!est.is_valid(i) || !gt.is_valid(i)) continue;
        // atan2(|a x b|, a . b) with a = (u, v, 1) stays exact at zero angle.
        const double au = est.u[i], av = est.v[i], bu = gt.u[i], bv = gt.v[i];
        const double cx = av - bv, cy = bu - au, cz = au * bv - av * bu;
        const double dot = au * bu + av * bv + 1.0;
        angles.push_back(std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot) * 180.0 / std::numbers::pi);
    }
    AngularError out;
    out.pixels = angles.size();
    if (angles.empty()) return out;
    double sum = 0.0;
    for (double a : angles) sum += a;
    out.mean_deg = sum / angles.size();
    double var = 0.0;
    for (double a : angles) var += (a - out.mean_deg) * (a - out.mean_deg);
    out.std_deg = std::sqrt(var / angles.size());
    return out;
}

std::string format_angular_error(const AngularError& e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f°±%.1f°", e.mean_deg, e.std_deg);
    return buf;
}

double endpoint_error(const FlowField& est, const FlowField& gt, const PixelMask* mask) {
    if (est.width != gt.width || est.height != gt.height) throw InvalidParameter("EPE: flow dimensions differ");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (mask && !mask->labels[i]) continue;
        if (!est.is_valid(i) || !gt.is_valid(i)) continue;
        sum += std::hypot(est.u[i] - gt.u[i], est.v[i] - gt.v[i]);
        ++n;
    }
    return n ? sum / n : 0.0;
}

double flow_density(const FlowField& est, const PixelMask* mask) {
    if (mask && (mask->width != est.width || mask->height != est.height)) {
        throw InvalidParameter("density: mask dimensions differ");
    }
    std::size_t total = 0, valid = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (mask && !mask->labels[i]) continue;
        ++total;
        if (est.is_valid(i)) ++valid;
    }
    return total ? static_cast<double>(valid) / total : 0.0;
}

}  // namespace cardio::varflow
