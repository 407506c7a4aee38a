#pragma once

// Per-pixel motion descriptors: the stacked intensity windows seen by the
// LSTM, flow trajectories, and the 3x3 magnitude/orientation samples taken
// along them.

#include <span>
#include <string_view>
#include <vector>

#include "cardio/image.hpp"
#include "cardio/neural.hpp"

namespace cardio::features {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class FeatureMode { local_only, global_only, combined };

std::string_view mode_name(FeatureMode mode);
// Accepts "local", "global", "combined" and the *_only spellings.
FeatureMode parse_mode(std::string_view text);

// window x window patch centred at (x, y), replicate border, row-major.
std::vector<double> window_patch(const Image& frame, int x, int y, int window);

// One window patch per frame, in temporal order.
neural::Sequence patch_sequence(const ImageSequence& seq, int x, int y, int window);

// The patches of patch_sequence concatenated: length window^2 * J.
std::vector<double> local_feature(const ImageSequence& seq, int x, int y, int window);

// Bilinear flow sample; coordinates are clamped to the field.
Point sample_flow(const FlowField& flow, double x, double y);

// q_0 = p, q_{j+1} = clamp(q_j + w_j(q_j)). Length flows.size() + 1.
std::vector<Point> trace(int x, int y, const FlowSequence& flows);

// For every frame pair: 9 magnitudes then 9 orientations of the 3x3
// neighbourhood around the rounded trajectory point. Length 18 (J - 1).
std::vector<double> global_feature(const FlowSequence& flows, int x, int y);

std::size_t global_feature_length(std::size_t frames);

// Per-dimension z-score statistics. Empty stats mean identity.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    bool empty() const { return mean.empty(); }
    void apply(std::span<double> values) const;
};

// Dimensions with (near) zero spread get stddev 1.
NormStats fit_norm_stats(const neural::Matrix& rows);

std::size_t feature_length(FeatureMode mode, int hidden_dim, std::size_t frames);

// [h_T || global] for combined, or just one part for the other modes, then
// z-scored when stats are given.
std::vector<double> assemble(const ImageSequence& seq, const FlowSequence& flows, int x, int y,
                             const neural::LstmStack& lstm, int window, FeatureMode mode = FeatureMode::combined,
                             const NormStats* stats = nullptr);

}  // namespace cardio::features
