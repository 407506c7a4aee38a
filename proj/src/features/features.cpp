#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cardio/error.hpp"
#include "cardio/features.hpp"

namespace cardio::features {

namespace {

void check_window(int window) {
    if (window < 3 || window % 2 == 0) {
        throw InvalidParameter("window must be odd and >= 3, got " + std::to_string(window));
    }
}

void check_pixel(int width, int height, int x, int y) {
    if (x < 0 || y < 0 || x >= width || y >= height) {
        throw InvalidParameter("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") outside image");
    }
}

void check_flows(const FlowSequence& flows) {
    if (flows.empty()) throw InvalidParameter("empty flow sequence");
    for (const auto& f : flows) {
        if (f.width != flows.front().width || f.height != flows.front().height) {
            throw InvalidParameter("flow fields differ in size");
        }
    }
}

}  // namespace

std::string_view mode_name(FeatureMode mode) {
    switch (mode) {
        case FeatureMode::local_only: return "local";
        case FeatureMode::global_only: return "global";
        case FeatureMode::combined: return "combined";
    }
    return "combined";
}

FeatureMode parse_mode(std::string_view text) {
    if (text == "local" || text == "local_only") return FeatureMode::local_only;
    if (text == "global" || text == "global_only") return FeatureMode::global_only;
    if (text == "combined") return FeatureMode::combined;
    throw InvalidParameter("unknown feature mode '" + std::string(text) + "'");
}

std::vector<double> window_patch(const Image& frame, int x, int y, int window) {
    check_window(window);
    check_pixel(frame.width, frame.height, x, y);
    const int r = window / 2;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(window) * window);
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) out.push_back(frame.clamped(x + dx, y + dy));
    }
    return out;
}

neural::Sequence patch_sequence(const ImageSequence& seq, int x, int y, int window) {
    if (seq.frames.empty()) throw InvalidParameter("empty sequence");
    neural::Sequence out;
    out.reserve(seq.frames.size());
    for (const Image& frame : seq.frames) out.push_back(window_patch(frame, x, y, window));
    return out;
}

std::vector<double> local_feature(const ImageSequence& seq, int x, int y, int window) {
    std::vector<double> out;
    for (auto& patch : patch_sequence(seq, x, y, window)) out.insert(out.end(), patch.begin(), patch.end());
    return out;
}

Point sample_flow(const FlowField& flow, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(flow.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(flow.height - 1));
    const int x0 = std::min(static_cast<int>(x), std::max(flow.width - 2, 0));
    const int y0 = std::min(static_cast<int>(y), std::max(flow.height - 2, 0));
    const int x1 = std::min(x0 + 1, flow.width - 1);
    const int y1 = std::min(y0 + 1, flow.height - 1);
    const double fx = x - x0, fy = y - y0;
    auto lerp = [&](const std::vector<double>& c) {
        const double top = (1 - fx) * c[flow.index(x0, y0)] + fx * c[flow.index(x1, y0)];
        const double bottom = (1 - fx) * c[flow.index(x0, y1)] + fx * c[flow.index(x1, y1)];
        return (1 - fy) * top + fy * bottom;
    };
    return {lerp(flow.u), lerp(flow.v)};
}

std::vector<Point> trace(int x, int y, const FlowSequence& flows) {
    check_flows(flows);
    const int w = flows.front().width, h = flows.front().height;
    check_pixel(w, h, x, y);
    std::vector<Point> path{{static_cast<double>(x), static_cast<double>(y)}};
    for (const FlowField& f : flows) {
        const Point q = path.back();
        const Point d = sample_flow(f, q.x, q.y);
        path.push_back({std::clamp(q.x + d.x, 0.0, w - 1.0), std::clamp(q.y + d.y, 0.0, h - 1.0)});
    }
    return path;
}

std::size_t global_feature_length(std::size_t frames) { return frames < 2 ? 0 : 18 * (frames - 1); }

std::vector<double> global_feature(const FlowSequence& flows, int x, int y) {
    const auto path = trace(x, y, flows);
    const int w = flows.front().width, h = flows.front().height;
    std::vector<double> out;
    out.reserve(18 * flows.size());
    for (std::size_t j = 0; j < flows.size(); ++j) {
        const FlowField& f = flows[j];
        const int cx = static_cast<int>(std::lround(path[j].x));
        const int cy = static_cast<int>(std::lround(path[j].y));
        double mags[9], angles[9];
        int k = 0;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx, ++k) {
                const std::size_t i = f.index(std::clamp(cx + dx, 0, w - 1), std::clamp(cy + dy, 0, h - 1));
                const double u = f.u[i], v = f.v[i];
                mags[k] = std::hypot(u, v);
                // atan2 returns -pi for (-x, -0); fold it onto +pi.
                double a = (u == 0.0 && v == 0.0) ? 0.0 : std::atan2(v, u);
                if (a <= -std::numbers::pi) a = std::numbers::pi;
                angles[k] = a;
            }
        }
        out.insert(out.end(), mags, mags + 9);
        out.insert(out.end(), angles, angles + 9);
    }
    return out;
}

void NormStats::apply(std::span<double> values) const {
    if (empty()) return;
    if (values.size() != mean.size()) throw InvalidParameter("normalization statistics do not match feature length");
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = (values[k] - mean[k]) / stddev[k];
}

NormStats fit_norm_stats(const neural::Matrix& rows) {
    if (rows.rows == 0) throw InvalidParameter("cannot fit normalization on zero rows");
    NormStats s;
    s.mean.assign(rows.cols, 0.0);
    s.stddev.assign(rows.cols, 0.0);
    for (int r = 0; r < rows.rows; ++r) {
        for (int c = 0; c < rows.cols; ++c) s.mean[c] += rows.at(r, c);
    }
    for (double& m : s.mean) m /= rows.rows;
    for (int r = 0; r < rows.rows; ++r) {
        for (int c = 0; c < rows.cols; ++c) {
            const double d = rows.at(r, c) - s.mean[c];
            s.stddev[c] += d * d;
        }
    }
    for (double& v : s.stddev) {
        v = std::sqrt(v / rows.rows);
        if (!(v > 1e-12)) v = 1.0;
    }
    return s;
}

std::size_t feature_length(FeatureMode mode, int hidden_dim, std::size_t frames) {
    switch (mode) {
        case FeatureMode::local_only: return static_cast<std::size_t>(hidden_dim);
        case FeatureMode::global_only: return global_feature_length(frames);
        case FeatureMode::combined: return hidden_dim + global_feature_length(frames);
    }
    return 0;
}

std::vector<double> assemble(const ImageSequence& seq, const FlowSequence& flows, int x, int y,
                             const neural::LstmStack& lstm, int window, FeatureMode mode, const NormStats* stats) {
    std::vector<double> out;
    if (mode != FeatureMode::global_only) {
        if (lstm.input_dim() != window * window) {
            throw InvalidParameter("LSTM input dimension " + std::to_string(lstm.input_dim()) +
                                   " does not match window^2 = " + std::to_string(window * window));
        }
        out = neural::lstm_final_hidden(lstm, patch_sequence(seq, x, y, window));
    }
    if (mode != FeatureMode::local_only) {
        if (flows.size() + 1 != seq.frames.size()) throw InvalidParameter("need one flow field per frame pair");
        const auto g = global_feature(flows, x, y);
        out.insert(out.end(), g.begin(), g.end());
    }
    if (stats != nullptr) stats->apply(out);
    return out;
}

}  // namespace cardio::features
