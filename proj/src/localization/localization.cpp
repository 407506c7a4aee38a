#include <algorithm>
#include <cmath>
#include <string>

#include "cardio/error.hpp"
#include "cardio/localization.hpp"

namespace cardio::localization {

FeatureMap roi_pool(const FeatureMap& map, const Rect& roi, int bins_h, int bins_w) {
    if (bins_h < 1 || bins_w < 1) throw InvalidParameter("roi_pool: bin counts must be >= 1");
    if (roi.x < 0 || roi.y < 0 || roi.width < 1 || roi.height < 1 || roi.x + roi.width > map.width ||
        roi.y + roi.height > map.height) {
        throw InvalidParameter("roi_pool: roi outside feature map");
    }
    if (roi.width < bins_w || roi.height < bins_h) throw InvalidParameter("roi_pool: roi smaller than bin grid");
    FeatureMap out(map.channels, bins_w, bins_h);
    for (int c = 0; c < map.channels; ++c) {
        for (int i = 0; i < bins_h; ++i) {
            const int y0 = roi.y + (i * roi.height) / bins_h;
            const int y1 = roi.y + ((i + 1) * roi.height + bins_h - 1) / bins_h;
            for (int j = 0; j < bins_w; ++j) {
                const int x0 = roi.x + (j * roi.width) / bins_w;
                const int x1 = roi.x + ((j + 1) * roi.width + bins_w - 1) / bins_w;
                double best = map.at(c, x0, y0);
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) best = std::max(best, map.at(c, x, y));
                }
                out.at(c, j, i) = best;
            }
        }
    }
    return out;
}

Image temporal_variance(const ImageSequence& seq) {
    validate_sequence(seq);
    const Image& first = seq.frames.front();
    Image mean(first.width, first.height), var(first.width, first.height);
    for (const Image& f : seq.frames) {
        for (std::size_t i = 0; i < f.data.size(); ++i) mean.data[i] += f.data[i];
    }
    const double n = static_cast<double>(seq.frames.size());
    for (double& m : mean.data) m /= n;
    for (const Image& f : seq.frames) {
        for (std::size_t i = 0; i < f.data.size(); ++i) {
            const double d = f.data[i] - mean.data[i];
            var.data[i] += d * d;
        }
    }
    for (double& v : var.data) v /= n;
    return var;
}

double otsu_threshold(const Image& img) {
    const auto [lo_it, hi_it] = std::minmax_element(img.data.begin(), img.data.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) return lo;
    constexpr int kBins = 256;
    std::vector<double> hist(kBins, 0.0);
    const double scale = kBins / (hi - lo);
    for (double v : img.data) hist[std::min(kBins - 1, static_cast<int>((v - lo) * scale))] += 1.0;
    const double total = static_cast<double>(img.data.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_bin = 0;
    for (int b = 0; b < kBins - 1; ++b) {
        w0 += hist[b];
        sum0 += b * hist[b];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    // Pixels strictly above the upper edge of best_bin are foreground.
    return lo + (best_bin + 1) / scale;
}

LocalizationDetail localize_lv_detail(const ImageSequence& seq) {
    validate_sequence(seq);
    const int w = seq.frames.front().width, h = seq.frames.front().height;
    if (w < kRoiSize || h < kRoiSize) {
        throw InvalidParameter("localize_lv: frames must be at least 64x64, got " + std::to_string(w) + "x" +
                               std::to_string(h));
    }
    const Image var = temporal_variance(seq);
    if (*std::max_element(var.data.begin(), var.data.end()) < 1e-8) {
        throw NoMotionDetected("localize_lv: temporal variance below 1e-8 everywhere");
    }
    const Image smooth = gaussian_smooth(var, {2.0});
    LocalizationDetail detail;
    detail.threshold = otsu_threshold(smooth);

    std::vector<int> label(smooth.data.size(), -1);
    std::vector<int> stack;
    std::size_t best_size = 0;
    double best_sx = 0.0, best_sy = 0.0;
    int next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t start = static_cast<std::size_t>(y) * w + x;
            if (label[start] >= 0 || !(smooth.data[start] >= detail.threshold)) continue;
            std::size_t size = 0;
            double sx = 0.0, sy = 0.0;
            label[start] = next;
            stack.assign(1, static_cast<int>(start));
            while (!stack.empty()) {
                const int i = stack.back();
                stack.pop_back();
                const int px = i % w, py = i / w;
                ++size;
                sx += px;
                sy += py;
                const int nbr[4][2] = {{px - 1, py}, {px + 1, py}, {px, py - 1}, {px, py + 1}};
                for (const auto& q : nbr) {
                    if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
                    const std::size_t k = static_cast<std::size_t>(q[1]) * w + q[0];
                    if (label[k] >= 0 || !(smooth.data[k] >= detail.threshold)) continue;
                    label[k] = next;
                    stack.push_back(static_cast<int>(k));
                }
            }
            if (size > best_size) {
                best_size = size;
                best_sx = sx;
                best_sy = sy;
            }
            ++next;
        }
    }
    detail.component_pixels = best_size;
    detail.centroid_x = best_sx / static_cast<double>(best_size);
    detail.centroid_y = best_sy / static_cast<double>(best_size);
    const int half = kRoiSize / 2;
    detail.box.x = std::clamp(static_cast<int>(std::lround(detail.centroid_x)) - half, 0, w - kRoiSize);
    detail.box.y = std::clamp(static_cast<int>(std::lround(detail.centroid_y)) - half, 0, h - kRoiSize);
    return detail;
}

RoiBox localize_lv(const ImageSequence& seq) { return localize_lv_detail(seq).box; }

namespace {

void check_box(int w, int h, const RoiBox& box) {
    if (box.width < 1 || box.height < 1 || box.x < 0 || box.y < 0 || box.x + box.width > w ||
        box.y + box.height > h) {
        throw InvalidParameter("crop box (" + std::to_string(box.x) + ", " + std::to_string(box.y) + ", " +
                               std::to_string(box.width) + "x" + std::to_string(box.height) + ") outside " +
                               std::to_string(w) + "x" + std::to_string(h) + " image");
    }
}

}  // namespace

Image crop_image(const Image& img, const RoiBox& box) {
    check_box(img.width, img.height, box);
    Image out(box.width, box.height);
    for (int y = 0; y < box.height; ++y) {
        for (int x = 0; x < box.width; ++x) out.at(x, y) = img.at(box.x + x, box.y + y);
    }
    return out;
}

ImageSequence crop_sequence(const ImageSequence& seq, const RoiBox& box) {
    ImageSequence out;
    out.frame_period_ms = seq.frame_period_ms;
    for (const Image& f : seq.frames) out.frames.push_back(crop_image(f, box));
    return out;
}

PixelMask crop_mask(const PixelMask& mask, const RoiBox& box) {
    check_box(mask.width, mask.height, box);
    PixelMask out(box.width, box.height);
    for (int y = 0; y < box.height; ++y) {
        for (int x = 0; x < box.width; ++x) out.at(x, y) = mask.at(box.x + x, box.y + y);
    }
    return out;
}

FlowField crop_flow(const FlowField& flow, const RoiBox& box) {
    check_box(flow.width, flow.height, box);
    FlowField out(box.width, box.height);
    for (int y = 0; y < box.height; ++y) {
        for (int x = 0; x < box.width; ++x) {
            const std::size_t i = flow.index(box.x + x, box.y + y), o = out.index(x, y);
            out.u[o] = flow.u[i];
            out.v[o] = flow.v[i];
        }
    }
    return out;
}

}  // namespace cardio::localization
