#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "cardio/image.hpp"
#include "cardio/rng.hpp"

namespace cardio::testing {

// Smoothed white noise rescaled to roughly [0.1, 0.9].
inline Image random_texture(int w, int h, std::uint64_t seed, double grain = 1.0) {
    Rng rng(seed);
    Image img(w, h);
    for (double& v : img.data) v = rng.uniform();
    if (grain > 0.0) img = gaussian_smooth(img, {grain});
    double lo = 1e9, hi = -1e9;
    for (double v : img.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double& v : img.data) v = 0.1 + 0.8 * (v - lo) / (hi - lo);
    return img;
}

// out(x,y) = in(x-dx, y-dy) with replicate fill: content moves by (+dx,+dy).
inline Image shift_image(const Image& in, int dx, int dy) {
    Image out(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) out.at(x, y) = in.clamped(x - dx, y - dy);
    }
    return out;
}

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "cardio_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace cardio::testing
