#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cardio {

// Row-major scalar image. Intensities live in [0,1] after ingestion.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    // Replicate-border access.
    double clamped(int x, int y) const;
    std::span<const double> row(int y) const {
        return {data.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)};
    }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
    bool operator==(const Image&) const = default;
};

struct ImageSequence {
    std::vector<Image> frames;
    double frame_period_ms = 45.0;

    std::size_t length() const { return frames.size(); }
    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }
};

// Throws InvalidParameter unless the sequence has >= 2 frames of equal size.
void validate_sequence(const ImageSequence& seq);

// Per-sequence min-max rescale to [0,1]; a constant sequence maps to 0.
ImageSequence normalize_min_max(const ImageSequence& seq);

// Middlebury convention: components above this magnitude mark unknown flow.
inline constexpr double kUnknownFlowThreshold = 1e9;
inline constexpr float kUnknownFlowValue = 1e10f;

struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<double> u;
    std::vector<double> v;

    FlowField() = default;
    FlowField(int w, int h, double u0 = 0.0, double v0 = 0.0);

    std::size_t size() const { return u.size(); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    bool is_valid(std::size_t i) const;
    bool operator==(const FlowField&) const = default;
};

using FlowSequence = std::vector<FlowField>;

struct PixelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;

    PixelMask() = default;
    PixelMask(int w, int h, std::uint8_t fill = 0);

    std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
    bool operator==(const PixelMask&) const = default;
};

struct GaussianParams {
    double sigma = 0.0;
};

// Normalized 1-D kernel of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian with replicate border; sigma == 0 returns the input.
Image gaussian_smooth(const Image& img, GaussianParams params);

// Half-resolution image: sigma 0.8 pre-smoothing then 2x2 area average,
// output dims ceil(dim/2).
Image downsample_half(const Image& img);

// Bilinear sample with replicate border.
double sample_bilinear(const Image& img, double x, double y);

// Central differences inside, one-sided at the border.
Image derivative_x(const Image& img);
Image derivative_y(const Image& img);

Image read_image(const std::filesystem::path& path);
// bit_depth 16 (default) or 8.
void write_image(const Image& img, const std::filesystem::path& path, int bit_depth = 16);

PixelMask read_mask(const std::filesystem::path& path);
void write_mask(const PixelMask& mask, const std::filesystem::path& path);

FlowField read_flo(const std::filesystem::path& path);
void write_flo(const FlowField& flow, const std::filesystem::path& path);

}  // namespace cardio
