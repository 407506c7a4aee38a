#pragma once

// Correlation-pyramid matcher. Bottom-level maps hold patch similarities of
// small anchor patches against every candidate position inside a search
// window; upper levels are built by max-pool, subsample, shifted average of
// the four child quadrants, and power rectification. Matches are recovered
// by backtracking each top-level maximum down to pixel level.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "cardio/image.hpp"

namespace cardio::matching {

struct MatcherConfig {
    int patch_size = 4;        // bottom-level N; a power of two >= 4
    int search_radius = -1;    // pixels; <= 0 means half the smaller image dimension
    double nu = 1.4;           // rectification exponent
    double threshold = 0.5;    // keep-threshold on the final score
    int reciprocal_tolerance = 0;  // max-norm displacement disagreement allowed between directions
};

// Normalized cross-correlation of mean-removed patches mapped to [0,1].
// Zero-variance patches score 0.
double patch_similarity(std::span<const double> a, std::span<const double> b);

struct CorrelationMapStack {
    int level = 0;
    int patch_size = 0;
    int image_width = 0;
    int image_height = 0;
    int anchor_stride = 0;  // anchor (i,j) sits at pixel (i*stride, j*stride)
    int anchors_x = 0;
    int anchors_y = 0;
    int candidate_spacing = 1;  // candidate index k sits at pixel k*spacing
    int window_radius = 0;      // in candidate units
    std::vector<double> scores;  // anchors_y*anchors_x maps of window*window

    int window() const { return 2 * window_radius + 1; }
    std::size_t map_size() const { return static_cast<std::size_t>(window()) * window(); }
    std::size_t anchor_count() const { return static_cast<std::size_t>(anchors_x) * anchors_y; }
    std::span<const double> map(int ax, int ay) const;
    std::span<double> map(int ax, int ay);
    // Candidate index of the window origin for an anchor, per axis.
    int origin_x(int ax) const { return ax * anchor_stride / candidate_spacing - window_radius; }
    int origin_y(int ay) const { return ay * anchor_stride / candidate_spacing - window_radius; }
    // Number of candidate positions along each axis that fall inside the image.
    int candidates_x() const { return (image_width + candidate_spacing - 1) / candidate_spacing; }
    int candidates_y() const { return (image_height + candidate_spacing - 1) / candidate_spacing; }
};

// Level-0 maps. Candidates outside the image or the search window score 0.
CorrelationMapStack bottom_correlation(const Image& src, const Image& dst, int patch_size = 4, int search_radius = -1);

// One aggregation step; patch size and anchor stride double.
CorrelationMapStack aggregate_level(const CorrelationMapStack& lower, double nu = 1.4);

using CorrelationPyramid = std::vector<CorrelationMapStack>;

// Bottom level plus aggregation until patch size >= min(dims)/2.
CorrelationPyramid build_pyramid(const Image& src, const Image& dst, const MatcherConfig& config = {});

struct Match {
    int x = 0;
    int y = 0;
    int x_prime = 0;
    int y_prime = 0;
    double confidence = 0.0;

    int dx() const { return x_prime - x; }
    int dy() const { return y_prime - y; }
    bool operator==(const Match&) const = default;
};

struct MatchSet {
    std::vector<Match> entries;
    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

// Backtracks the maximum of every top-level anchor to level-0 correspondences
// (one per bottom anchor, strongest root wins). No filtering.
MatchSet backtrack(const CorrelationPyramid& pyramid);

// Backtracks both directions and keeps forward matches whose reverse match
// agrees and whose score reaches the threshold.
MatchSet extract_matches(const CorrelationPyramid& forward, const CorrelationPyramid& reverse, double threshold,
                         int reciprocal_tolerance = 0);

// Convenience: both pyramids plus extraction.
MatchSet match_images(const Image& src, const Image& dst, const MatcherConfig& config = {});

// CSV with header x,y,x',y',confidence.
void write_matches_csv(const MatchSet& matches, std::ostream& out);

}  // namespace cardio::matching
