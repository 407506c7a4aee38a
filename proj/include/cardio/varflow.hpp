#pragma once

// Variational optical flow: robust brightness and gradient constancy data
// terms, robust smoothness, and a matching term that pulls the flow toward
// precomputed correspondences. Solved coarse-to-fine with warping; each
// outer step linearizes around the current flow and relaxes the normal
// equations with SOR.

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cardio/image.hpp"
#include "cardio/matching.hpp"

namespace cardio::varflow {

struct FlowParams {
    double alpha = 0.05;   // smoothness weight
    double beta = 0.02;    // matching weight
    double delta = 1.0;    // brightness constancy weight
    double gamma = 0.7;    // gradient constancy weight
    double sigma = 0.8;    // presmoothing
    double epsilon = 1e-3;
    int levels = 0;        // 0: as many as keep the coarsest min dimension >= min_level_size
    int min_level_size = 16;
    int outer_iters = 5;
    int solver_iters = 30;
    double omega = 1.6;

    // Throws InvalidParameter on any out-of-range field.
    void validate() const;
};

// Psi(s2) = sqrt(s2 + eps^2).
double penalize(double s2, double epsilon);
// dPsi/ds2 = 1 / (2 sqrt(s2 + eps^2)).
double penalize_derivative(double s2, double epsilon);

// Symmetric 3x3 tensor stored as (11, 12, 13, 22, 23, 33).
using Tensor3 = std::array<double, 6>;

// (du, dv, 1) T (du, dv, 1)^T
double quadratic_form(const Tensor3& t, double du, double dv);

struct MotionTensor {
    int width = 0;
    int height = 0;
    std::vector<Tensor3> brightness;  // J0
    std::vector<Tensor3> gradient;    // Jxy
    std::vector<std::uint8_t> inside;  // warped sample fell inside the image
};

// dst is warped by `current` (bilinear, replicate border) before
// differentiation. Derivatives are central inside, one-sided at borders.
MotionTensor build_motion_tensor(const Image& src, const Image& dst, const FlowField& current);

// Discrete energy on the given images (no presmoothing applied here).
double energy(const Image& src, const Image& dst, const FlowField& w, const matching::MatchSet& matches,
              const FlowParams& params);

// Analytic gradient of `energy` with respect to every u and v.
FlowField energy_gradient(const Image& src, const Image& dst, const FlowField& w, const matching::MatchSet& matches,
                          const FlowParams& params);

struct FlowResult {
    FlowField flow;
    // Finest-level energy before the first and after every outer step.
    std::vector<double> finest_energy;
};

FlowResult compute_flow_traced(const Image& src, const Image& dst, const matching::MatchSet& matches,
                               const FlowParams& params);

FlowField compute_flow(const Image& src, const Image& dst, const matching::MatchSet& matches,
                       const FlowParams& params);

// flows[j] maps frame j to frame j+1. Matching is skipped when beta == 0.
FlowSequence flow_sequence(const ImageSequence& seq, const FlowParams& params,
                           const matching::MatcherConfig& matcher = {});

struct AngularError {
    double mean_deg = 0.0;
    double std_deg = 0.0;
    std::size_t pixels = 0;
};

// Barron angle between (u,v,1) vectors; only pixels where the mask is set
// (when given) and both fields are valid are counted.
AngularError average_angular_error(const FlowField& est, const FlowField& gt,
                                   const PixelMask* mask = nullptr);

// "5.7°±2.3°"
std::string format_angular_error(const AngularError& e);

double endpoint_error(const FlowField& est, const FlowField& gt, const PixelMask* mask = nullptr);

// Fraction of (masked) pixels with a valid flow estimate.
double flow_density(const FlowField& est, const PixelMask* mask = nullptr);

}  // namespace cardio::varflow
