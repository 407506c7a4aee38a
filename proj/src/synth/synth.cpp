#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "cardio/error.hpp"
#include "cardio/rng.hpp"
#include "cardio/synth.hpp"

namespace cardio::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Radial motion profile: r inside the epicardium, fading to 0 over `taper`.
double profile(const PhantomParams& p, double r0) {
    if (r0 <= p.epi_radius) return r0;
    const double t = std::min(1.0, (r0 - p.epi_radius) / p.taper);
    const double c = std::cos(0.5 * std::numbers::pi * t);
    return p.epi_radius * c * c;
}

double profile_derivative(const PhantomParams& p, double r0) {
    if (r0 <= p.epi_radius) return 1.0;
    const double t = (r0 - p.epi_radius) / p.taper;
    if (t >= 1.0) return 0.0;
    const double a = 0.5 * std::numbers::pi * t;
    return -p.epi_radius * std::sin(2.0 * a) * 0.5 * std::numbers::pi / p.taper;
}

bool in_sector(const PhantomParams& p, double theta) {
    if (p.infarct_extent <= 0.0) return false;
    if (p.infarct_extent >= kTwoPi) return true;
    const double t = std::fmod(std::fmod(theta - p.infarct_start, kTwoPi) + kTwoPi, kTwoPi);
    return t <= p.infarct_extent;
}

}  // namespace

void PhantomParams::validate() const {
    auto fail = [](const std::string& what) { throw InvalidParameter("phantom: " + what); };
    if (image_size < 16) fail("image_size must be >= 16");
    if (frames < 2) fail("need at least 2 frames");
    if (!(endo_radius > 0.0 && endo_radius < epi_radius)) fail("need 0 < endo_radius < epi_radius");
    if (!(epi_radius < image_size / 2.0)) fail("epi_radius must be below image_size / 2");
    if (!(contraction_amplitude >= 0.0 && contraction_amplitude < 0.5)) fail("contraction_amplitude must lie in [0, 0.5)");
    if (!(infarct_motion_scale >= 0.0 && infarct_motion_scale <= 1.0)) fail("infarct_motion_scale must lie in [0, 1]");
    if (!(taper > 0.0) || !(transition >= 0.0)) fail("taper must be positive and transition non-negative");
    if (!(texture_grain >= 0.0) || !(noise_sigma >= 0.0)) fail("texture_grain and noise_sigma must be non-negative");
    if (!std::isfinite(twist) || !std::isfinite(infarct_start) || !std::isfinite(infarct_extent)) fail("non-finite angle");
    if (cx() < 0.0 || cy() < 0.0 || cx() > image_size - 1 || cy() > image_size - 1) fail("centre outside image");
    if (slice_level != "apical" && slice_level != "mid" && slice_level != "basal") {
        fail("slice_level must be apical, mid or basal");
    }
}

double phase(int frame, int frames) { return 0.5 * (1.0 - std::cos(kTwoPi * frame / frames)); }

double sector_scale(const PhantomParams& p, double theta) {
    if (p.infarct_extent <= 0.0) return 1.0;
    if (p.infarct_extent >= kTwoPi) return p.infarct_motion_scale;
    const double t = std::fmod(std::fmod(theta - p.infarct_start, kTwoPi) + kTwoPi, kTwoPi);
    // Signed angular depth into the sector.
    const double depth = t <= p.infarct_extent ? std::min(t, p.infarct_extent - t)
                                               : -std::min(t - p.infarct_extent, kTwoPi - t);
    const double w = p.transition > 0.0 ? smoothstep((depth + p.transition) / (2.0 * p.transition))
                                        : (depth >= 0.0 ? 1.0 : 0.0);
    return 1.0 + (p.infarct_motion_scale - 1.0) * w;
}

Point2 forward_map(const PhantomParams& p, Point2 material, double s) {
    const double dx = material.x - p.cx(), dy = material.y - p.cy();
    const double r0 = std::hypot(dx, dy);
    const double theta0 = std::atan2(dy, dx);
    const double m = sector_scale(p, theta0);
    const double g = profile(p, r0);
    const double a = p.contraction_amplitude * s * m;
    if (a * g == 0.0) return material;
    const double r = r0 - a * g;
    const double theta = theta0 + p.twist * a * g / p.epi_radius;
    return {p.cx() + r * std::cos(theta), p.cy() + r * std::sin(theta)};
}

Point2 inverse_map(const PhantomParams& p, Point2 position, double s) {
    const double dx = position.x - p.cx(), dy = position.y - p.cy();
    const double r = std::hypot(dx, dy);
    const double theta = std::atan2(dy, dx);
    double r0 = r, theta0 = theta;
    for (int it = 0; it < 200; ++it) {
        const double m = sector_scale(p, theta0);
        const double a = p.contraction_amplitude * s * m;
        // Newton on r0 - a g(r0) = r; the map is monotone in r0.
        double rn = r0;
        for (int k = 0; k < 8; ++k) {
            const double f = rn - a * profile(p, rn) - r;
            rn -= f / (1.0 - a * profile_derivative(p, rn));
            rn = std::max(rn, 0.0);
        }
        const double tn = theta - p.twist * a * profile(p, rn) / p.epi_radius;
        const double change = std::abs(rn - r0) + std::abs(tn - theta0) * std::max(r, 1.0);
        r0 = rn;
        theta0 = tn;
        if (change < 1e-12) break;
    }
    if (r0 == r && theta0 == theta) return position;
    return {p.cx() + r0 * std::cos(theta0), p.cy() + r0 * std::sin(theta0)};
}

namespace {

Image make_texture(const PhantomParams& p, Rng& rng) {
    Image tex(p.image_size, p.image_size);
    for (double& v : tex.data) v = rng.uniform();
    if (p.texture_grain > 0.0) tex = gaussian_smooth(tex, {p.texture_grain});
    const auto [lo, hi] = std::minmax_element(tex.data.begin(), tex.data.end());
    const double low = *lo, span = std::max(*hi - *lo, 1e-12);
    for (double& v : tex.data) v = (v - low) / span;
    return tex;
}

// Tissue appearance at a material point.
double appearance(const PhantomParams& p, const Image& tex, Point2 m) {
    const double r0 = std::hypot(m.x - p.cx(), m.y - p.cy());
    const double t = sample_bilinear(tex, m.x, m.y);
    const double blood = 0.72 + 0.22 * t;
    const double muscle = 0.3 + 0.4 * t;
    const double outside = 0.08 + 0.4 * t;
    const double w_blood = 1.0 - smoothstep((r0 - p.endo_radius + 0.75) / 1.5);
    const double w_out = smoothstep((r0 - p.epi_radius + 0.75) / 1.5);
    return w_blood * blood + w_out * outside + (1.0 - w_blood - w_out) * muscle;
}

}  // namespace

PhantomDataset generate(const PhantomParams& params) {
    params.validate();
    PhantomDataset ds;
    ds.params = params;
    ds.slice_level = params.slice_level;
    Rng rng(params.seed);
    const Image tex = make_texture(params, rng);
    const int n = params.image_size;

    ds.sequence.frame_period_ms = params.frame_period_ms;
    for (int j = 0; j < params.frames; ++j) {
        const double s = phase(j, params.frames);
        Image frame(n, n);
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const Point2 m = inverse_map(params, {static_cast<double>(x), static_cast<double>(y)}, s);
                frame.at(x, y) = appearance(params, tex, m);
            }
        }
        if (params.noise_sigma > 0.0) {
            for (double& v : frame.data) v = std::clamp(v + params.noise_sigma * rng.normal(), 0.0, 1.0);
        }
        ds.sequence.frames.push_back(std::move(frame));
    }

    for (int j = 0; j + 1 < params.frames; ++j) {
        const double s0 = phase(j, params.frames), s1 = phase(j + 1, params.frames);
        FlowField f(n, n);
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const Point2 m = inverse_map(params, {static_cast<double>(x), static_cast<double>(y)}, s0);
                const Point2 q = forward_map(params, m, s1);
                const std::size_t i = f.index(x, y);
                f.u[i] = q.x - x;
                f.v[i] = q.y - y;
            }
        }
        ds.gt_flows.push_back(std::move(f));
    }

    ds.mask = PixelMask(n, n);
    ds.myocardium = PixelMask(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double dx = x - params.cx(), dy = y - params.cy();
            const double r = std::hypot(dx, dy);
            if (r < params.endo_radius || r > params.epi_radius) continue;
            ds.myocardium.at(x, y) = 1;
            if (in_sector(params, std::atan2(dy, dx))) ds.mask.at(x, y) = 1;
        }
    }
    return ds;
}

double mask_fraction(const PhantomDataset& ds) {
    const std::size_t annulus = ds.myocardium.count();
    if (annulus == 0) return 0.0;
    std::size_t infarct = 0;
    for (std::size_t i = 0; i < ds.mask.labels.size(); ++i) infarct += ds.mask.labels[i] && ds.myocardium.labels[i];
    return static_cast<double>(infarct) / static_cast<double>(annulus);
}

std::vector<PhantomParams> cohort(const PhantomParams& base, int count, std::uint64_t seed) {
    if (count < 0) throw InvalidParameter("cohort: negative count");
    static const char* levels[] = {"basal", "mid", "apical"};
    Rng rng(seed);
    std::vector<PhantomParams> out;
    const double margin = std::max(0.0, base.image_size / 2.0 - 40.0);
    for (int k = 0; k < count; ++k) {
        PhantomParams p = base;
        p.infarct_start = rng.uniform(0.0, kTwoPi);
        p.infarct_extent = rng.uniform(std::numbers::pi / 3.0, 2.0 * std::numbers::pi / 3.0);
        p.center_x = base.cx() + rng.uniform(-margin, margin);
        p.center_y = base.cy() + rng.uniform(-margin, margin);
        p.slice_level = levels[k % 3];
        p.seed = rng.next_u64();
        out.push_back(p);
    }
    return out;
}

void write_dataset(const PhantomDataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "gt");
    char name[32];
    for (std::size_t j = 0; j < ds.sequence.frames.size(); ++j) {
        std::snprintf(name, sizeof name, "frame_%02zu.pgm", j);
        write_image(ds.sequence.frames[j], dir / "frames" / name, 16);
    }
    for (std::size_t j = 0; j < ds.gt_flows.size(); ++j) {
        std::snprintf(name, sizeof name, "flow_%02zu.flo", j);
        write_flo(ds.gt_flows[j], dir / "gt" / name);
    }
    write_mask(ds.mask, dir / "mask.pgm");
    write_mask(ds.myocardium, dir / "myocardium.pgm");

    const PhantomParams& p = ds.params;
    nlohmann::json meta = {
        {"slice_level", ds.slice_level},
        {"center", {p.cx(), p.cy()}},
        {"reference_angle", 0.0},
        {"pixel_spacing_mm", p.pixel_spacing_mm},
        {"frame_period_ms", p.frame_period_ms},
        {"phantom",
         {{"image_size", p.image_size},
          {"endo_radius", p.endo_radius},
          {"epi_radius", p.epi_radius},
          {"contraction_amplitude", p.contraction_amplitude},
          {"twist", p.twist},
          {"frames", p.frames},
          {"infarct_start", p.infarct_start},
          {"infarct_extent", p.infarct_extent},
          {"infarct_motion_scale", p.infarct_motion_scale},
          {"noise_sigma", p.noise_sigma},
          {"seed", p.seed}}},
    };
    std::ofstream out(dir / "meta.json");
    if (!out) throw InvalidParameter("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
}

}  // namespace cardio::synth
