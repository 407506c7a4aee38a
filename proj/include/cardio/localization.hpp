#pragma once

// Left-ventricle localization: ROI max pooling, and a motion-variance
// localizer that returns a fixed 64x64 crop for the whole sequence.

#include <vector>

#include "cardio/image.hpp"

namespace cardio::localization {

inline constexpr int kRoiSize = 64;

struct FeatureMap {
    int channels = 0;
    int width = 0;
    int height = 0;
    std::vector<double> data;  // channel-major, then row-major

    FeatureMap() = default;
    FeatureMap(int c, int w, int h) : channels(c), width(w), height(h), data(static_cast<std::size_t>(c) * w * h, 0.0) {}

    double& at(int c, int x, int y) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int x, int y) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    bool operator==(const FeatureMap&) const = default;
};

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

// Bin i of n over length L spans [floor(i L / n), ceil((i + 1) L / n)).
// Output is channels x bins_w x bins_h.
FeatureMap roi_pool(const FeatureMap& map, const Rect& roi, int bins_h, int bins_w);

struct RoiBox {
    int x = 0;
    int y = 0;
    int width = kRoiSize;
    int height = kRoiSize;

    bool contains(double px, double py) const { return px >= x && py >= y && px < x + width && py < y + height; }
    bool operator==(const RoiBox&) const = default;
};

struct LocalizationDetail {
    RoiBox box;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    double threshold = 0.0;
    std::size_t component_pixels = 0;
};

// Per-pixel temporal variance.
Image temporal_variance(const ImageSequence& seq);

// Threshold maximizing between-class variance over a 256-bin histogram.
double otsu_threshold(const Image& img);

// Variance map, sigma 2 smoothing, Otsu, largest 4-connected component,
// 64x64 box centred on its centroid and clamped into the image.
// Throws NoMotionDetected for static sequences.
LocalizationDetail localize_lv_detail(const ImageSequence& seq);
RoiBox localize_lv(const ImageSequence& seq);

ImageSequence crop_sequence(const ImageSequence& seq, const RoiBox& box);
Image crop_image(const Image& img, const RoiBox& box);
PixelMask crop_mask(const PixelMask& mask, const RoiBox& box);
FlowField crop_flow(const FlowField& flow, const RoiBox& box);

}  // namespace cardio::localization
