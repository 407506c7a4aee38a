#pragma once

// Synthetic beating-heart phantom: a textured annulus that contracts and
// twists over one cycle, with a hypokinetic sector standing in for scar.
// Ground-truth flow between consecutive frames is exact up to the numeric
// inversion of the motion model.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cardio/image.hpp"

namespace cardio::synth {

struct PhantomParams {
    int image_size = 128;
    double center_x = -1.0;  // negative: image centre
    double center_y = -1.0;
    double endo_radius = 11.0;
    double epi_radius = 21.0;
    double taper = 10.0;                // motion fades to zero this far outside the epicardium
    double contraction_amplitude = 0.3; // fractional radial shortening at peak
    double twist = 0.5;                 // peak rotation in radians per unit amplitude
    int frames = 25;
    double infarct_start = 1.0;         // radians, image angle atan2(y - cy, x - cx)
    double infarct_extent = 1.2;        // radians
    double infarct_motion_scale = 0.2;
    double transition = 0.09;           // half-width of the angular motion ramp, radians
    double texture_grain = 1.2;
    double noise_sigma = 0.01;
    double frame_period_ms = 45.1;
    double pixel_spacing_mm = 1.5;
    std::string slice_level = "mid";
    std::uint64_t seed = 1;

    double cx() const { return center_x < 0 ? (image_size - 1) / 2.0 : center_x; }
    double cy() const { return center_y < 0 ? (image_size - 1) / 2.0 : center_y; }
    // Throws InvalidParameter.
    void validate() const;
};

struct PhantomDataset {
    PhantomParams params;
    ImageSequence sequence;
    FlowSequence gt_flows;  // frames - 1 fields, j -> j + 1
    PixelMask mask;         // infarct
    PixelMask myocardium;   // annulus at frame 0
    std::string slice_level;
};

PhantomDataset generate(const PhantomParams& params);

// Infarct pixels over annulus pixels; 0 for an empty annulus.
double mask_fraction(const PhantomDataset& ds);

// Contraction phase in [0, 1]: 0 at frame 0, peak at mid-cycle.
double phase(int frame, int frames);

// Motion scale at reference angle theta (1 healthy, scale inside the sector).
double sector_scale(const PhantomParams& p, double theta);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Material point at phase 0 -> its position at phase s.
Point2 forward_map(const PhantomParams& p, Point2 material, double s);
// Position at phase s -> material point (fixed point plus Newton).
Point2 inverse_map(const PhantomParams& p, Point2 position, double s);

// Varied subjects around `base`: infarct start and extent, centre offset,
// slice level and texture seed drawn from `seed`.
std::vector<PhantomParams> cohort(const PhantomParams& base, int count, std::uint64_t seed);

// Writes frames/frame_%02d.pgm, mask.pgm, myocardium.pgm, meta.json and
// gt/flow_%02d.flo under `dir`.
void write_dataset(const PhantomDataset& ds, const std::filesystem::path& dir);

}  // namespace cardio::synth
