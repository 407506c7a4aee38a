#include "cardio/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cardio/error.hpp"

namespace cardio {

Image::Image(int w, int h, double fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw InvalidParameter("negative image dimensions");
}

double Image::clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y);
}

FlowField::FlowField(int w, int h, double u0, double v0)
    : width(w),
      height(h),
      u(static_cast<std::size_t>(w) * h, u0),
      v(static_cast<std::size_t>(w) * h, v0) {
    if (w < 0 || h < 0) throw InvalidParameter("negative flow dimensions");
}

bool FlowField::is_valid(std::size_t i) const {
    return std::isfinite(u[i]) && std::isfinite(v[i]) && std::abs(u[i]) < kUnknownFlowThreshold &&
           std::abs(v[i]) < kUnknownFlowThreshold;
}

PixelMask::PixelMask(int w, int h, std::uint8_t fill)
    : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw InvalidParameter("negative mask dimensions");
}

std::size_t PixelMask::count() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
}

void validate_sequence(const ImageSequence& seq) {
    if (seq.frames.size() < 2) throw InvalidParameter("sequence needs at least 2 frames");
    const Image& f0 = seq.frames.front();
    for (std::size_t j = 1; j < seq.frames.size(); ++j) {
        if (!seq.frames[j].same_shape(f0)) {
            throw InvalidParameter("frame " + std::to_string(j) + " has mismatched dimensions");
        }
    }
}

ImageSequence normalize_min_max(const ImageSequence& seq) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& f : seq.frames) {
        for (double v : f.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    ImageSequence out = seq;
    const double range = hi - lo;
    for (auto& f : out.frames) {
        for (double& v : f.data) v = range > 0.0 ? (v - lo) / range : 0.0;
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!std::isfinite(sigma) || sigma < 0.0) throw InvalidParameter("gaussian sigma must be finite and >= 0");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[i + radius] = w;
        total += w;
    }
    for (double& w : k) w /= total;
    return k;
}

Image gaussian_smooth(const Image& img, GaussianParams params) {
    const auto kernel = gaussian_kernel(params.sigma);
    if (params.sigma == 0.0) return img;
    const int radius = static_cast<int>(kernel.size() / 2);

    Image tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * img.clamped(x + k, y);
            tmp.at(x, y) = s;
        }
    }
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * tmp.clamped(x, y + k);
            out.at(x, y) = s;
        }
    }
    return out;
}

Image downsample_half(const Image& img) {
    if (img.width < 2 || img.height < 2) throw InvalidParameter("downsample_half needs width and height >= 2");
    const Image smooth = gaussian_smooth(img, {0.8});
    const int w = (img.width + 1) / 2;
    const int h = (img.height + 1) / 2;
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            int n = 0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int sx = 2 * x + dx;
                    const int sy = 2 * y + dy;
                    if (sx < img.width && sy < img.height) {
                        s += smooth.at(sx, sy);
                        ++n;
                    }
                }
            }
            out.at(x, y) = s / n;
        }
    }
    return out;
}

double sample_bilinear(const Image& img, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const int x0 = std::min(static_cast<int>(x), img.width - 1);
    const int y0 = std::min(static_cast<int>(y), img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
    const double bottom = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
    return (1.0 - fy) * top + fy * bottom;
}

Image derivative_x(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.width == 1) {
                out.at(x, y) = 0.0;
            } else if (x == 0) {
                out.at(x, y) = img.at(1, y) - img.at(0, y);
            } else if (x == img.width - 1) {
                out.at(x, y) = img.at(x, y) - img.at(x - 1, y);
            } else {
                out.at(x, y) = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
            }
        }
    }
    return out;
}

Image derivative_y(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.height == 1) {
                out.at(x, y) = 0.0;
            } else if (y == 0) {
                out.at(x, y) = img.at(x, 1) - img.at(x, 0);
            } else if (y == img.height - 1) {
                out.at(x, y) = img.at(x, y) - img.at(x, y - 1);
            } else {
                out.at(x, y) = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
            }
        }
    }
    return out;
}

}  // namespace cardio
