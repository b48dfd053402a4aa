#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slab/common.hpp"

namespace slab {

// One (resource, loss) observation. x is D, P, or C; y is NE or normalized
// NE. Both must be finite and strictly positive.
struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

// L(x) = alpha * x^(-beta) + gamma. gamma is the irreducible loss: the value
// predict approaches as x goes to infinity.
struct PowerLawFit {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double r_squared = 0.0;
  uint32_t n_points = 0;
  bool converged = false;
  double residual_norm = 0.0;
  double x_min_observed = 0.0;  // smallest fitted x, the phase_of anchor
};

enum class Phase { kHighReturn, kSaturating };
const char* to_string(Phase p);

// Least squares in plain y-space via Levenberg-Marquardt with analytic
// Jacobian, multi-started over a fixed beta grid plus a log-linear
// regression start. Bounds by projection: alpha > 0, beta > 0,
// 0 <= gamma < min(y). Throws DataError below 4 points or 3 distinct x.
PowerLawFit fit_power_law(std::span<const CurvePoint> points);

double predict(const PowerLawFit& fit, double x);

// The fitted gamma: best achievable loss at infinite resource.
double scaling_limit(const PowerLawFit& fit);

// Kneedle on min-max normalized (log10 x, y) with smoothing disabled: the x
// maximizing the gap below the descending diagonal, ties toward smaller x.
// Points must arrive sorted by x ascending. Monotone non-decreasing or flat
// y has no knee and throws DataError.
double detect_knee(std::span<const CurvePoint> points);

// saturating iff the remaining marginal headroom (predict(x) - gamma)
// relative to the smallest observed x has decayed below threshold, i.e.
// (x / x_min)^(-beta) < threshold.
Phase phase_of(const PowerLawFit& fit, double x, double threshold = 0.05);

// CSV with header "x,y", one point per line. Parse problems raise DataError
// naming the line.
std::vector<CurvePoint> load_curve_csv(const std::string& path);

}  // namespace slab
