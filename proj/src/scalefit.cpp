#include "slab/scalefit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace slab {

namespace {

struct Params {
  double alpha, beta, gamma;
};

double sse_of(std::span<const CurvePoint> pts, const Params& p) {
  double sse = 0.0;
  for (const auto& pt : pts) {
    double r = pt.y - (p.alpha * std::pow(pt.x, -p.beta) + p.gamma);
    sse += r * r;
  }
  return sse;
}

Params project(Params p, double y_min) {
  constexpr double kTiny = 1e-12;
  p.alpha = std::max(p.alpha, kTiny);
  p.beta = std::max(p.beta, kTiny);
  double gamma_cap = y_min * (1.0 - 1e-9);
  p.gamma = std::clamp(p.gamma, 0.0, gamma_cap);
  return p;
}

// Solves A x = b for 3x3 A (row-major) by Gaussian elimination with partial
// pivoting. Returns false when A is singular to working precision.
bool solve3(double a[9], double b[3], double x[3]) {
  int piv[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int best = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::fabs(a[piv[r] * 3 + col]) > std::fabs(a[piv[best] * 3 + col])) best = r;
    }
    std::swap(piv[col], piv[best]);
    double d = a[piv[col] * 3 + col];
    if (std::fabs(d) < 1e-300) return false;
    for (int r = col + 1; r < 3; ++r) {
      double f = a[piv[r] * 3 + col] / d;
      for (int c = col; c < 3; ++c) a[piv[r] * 3 + c] -= f * a[piv[col] * 3 + c];
      b[piv[r]] -= f * b[piv[col]];
    }
  }
  for (int col = 2; col >= 0; --col) {
    double acc = b[piv[col]];
    for (int c = col + 1; c < 3; ++c) acc -= a[piv[col] * 3 + c] * x[c];
    x[col] = acc / a[piv[col] * 3 + col];
  }
  return std::isfinite(x[0]) && std::isfinite(x[1]) && std::isfinite(x[2]);
}

// One LM descent from a start point. Returns the local optimum and whether
// the relative-change stopping rule fired.
std::pair<Params, bool> lm_descend(std::span<const CurvePoint> pts, Params p, double y_min) {
  p = project(p, y_min);
  double sse = sse_of(pts, p);
  double lambda = 1e-3;
  bool converged = false;

  for (int iter = 0; iter < 200; ++iter) {
    // Normal equations JtJ delta = -Jt r with r_i = y_i - model(x_i).
    double jtj[9] = {0};
    double jtr[3] = {0};
    for (const auto& pt : pts) {
      double t = std::pow(pt.x, -p.beta);
      double r = pt.y - (p.alpha * t + p.gamma);
      double j[3] = {-t, p.alpha * std::log(pt.x) * t, -1.0};
      for (int a = 0; a < 3; ++a) {
        jtr[a] += j[a] * r;
        for (int b = 0; b < 3; ++b) jtj[a * 3 + b] += j[a] * j[b];
      }
    }

    bool stepped = false;
    while (lambda <= 1e15) {
      double aug[9];
      std::copy(jtj, jtj + 9, aug);
      for (int d = 0; d < 3; ++d) {
        aug[d * 3 + d] += lambda * std::max(jtj[d * 3 + d], 1e-30);
      }
      double rhs[3] = {-jtr[0], -jtr[1], -jtr[2]};
      double delta[3];
      if (!solve3(aug, rhs, delta)) {
        lambda *= 10.0;
        continue;
      }
      Params trial =
          project({p.alpha + delta[0], p.beta + delta[1], p.gamma + delta[2]}, y_min);
      double trial_sse = sse_of(pts, trial);
      if (trial_sse < sse) {
        double rel = 0.0;
        rel = std::max(rel, std::fabs(trial.alpha - p.alpha) / std::max(std::fabs(p.alpha), 1e-12));
        rel = std::max(rel, std::fabs(trial.beta - p.beta) / std::max(std::fabs(p.beta), 1e-12));
        rel = std::max(rel, std::fabs(trial.gamma - p.gamma) / std::max(std::fabs(p.gamma), 1e-12));
        p = trial;
        sse = trial_sse;
        lambda = std::max(lambda / 10.0, 1e-15);
        stepped = true;
        if (rel < 1e-10) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (converged || !stepped) break;
  }
  return {p, converged};
}

}  // namespace

const char* to_string(Phase p) {
  return p == Phase::kHighReturn ? "high-return" : "saturating";
}

PowerLawFit fit_power_law(std::span<const CurvePoint> points) {
  if (points.size() < 4) {
    throw DataError("power-law fit needs at least 4 points, got " +
                    std::to_string(points.size()));
  }
  for (const auto& pt : points) {
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y) || pt.x <= 0.0 || pt.y <= 0.0) {
      throw DataError("curve points must be finite and positive (x=" + format_g9(pt.x) +
                      ", y=" + format_g9(pt.y) + ")");
    }
  }
  std::vector<double> xs;
  for (const auto& pt : points) xs.push_back(pt.x);
  std::sort(xs.begin(), xs.end());
  if (std::unique(xs.begin(), xs.end()) - xs.begin() < 3) {
    throw DataError("power-law fit needs at least 3 distinct x values");
  }

  double y_min = points[0].y;
  double x_min = points[0].x;
  for (const auto& pt : points) {
    y_min = std::min(y_min, pt.y);
    x_min = std::min(x_min, pt.x);
  }
  double gamma0 = 0.95 * y_min;

  // Start list: log-linear regression of ln(y - gamma0) on ln x, then a
  // fixed beta grid with alpha from closed-form least squares at that beta.
  std::vector<Params> starts;
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = static_cast<double>(points.size());
    for (const auto& pt : points) {
      double lx = std::log(pt.x);
      double ly = std::log(pt.y - gamma0);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    double denom = n * sxx - sx * sx;
    if (denom > 0.0) {
      double slope = (n * sxy - sx * sy) / denom;
      double intercept = (sy - slope * sx) / n;
      starts.push_back({std::exp(intercept), -slope, gamma0});
    }
  }
  for (double beta0 : {0.05, 0.1, 0.2, 0.5, 1.0}) {
    double num = 0, den = 0;
    for (const auto& pt : points) {
      double t = std::pow(pt.x, -beta0);
      num += t * (pt.y - gamma0);
      den += t * t;
    }
    starts.push_back({den > 0.0 ? num / den : 1.0, beta0, gamma0});
  }

  Params best{1.0, 0.1, gamma0};
  double best_sse = std::numeric_limits<double>::infinity();
  bool best_converged = false;
  for (const Params& s : starts) {
    auto [p, conv] = lm_descend(points, s, y_min);
    double sse = sse_of(points, p);
    if (sse < best_sse || (sse == best_sse && conv && !best_converged)) {
      best = p;
      best_sse = sse;
      best_converged = conv;
    }
  }

  double mean_y = 0.0;
  for (const auto& pt : points) mean_y += pt.y;
  mean_y /= static_cast<double>(points.size());
  double ss_tot = 0.0;
  for (const auto& pt : points) ss_tot += (pt.y - mean_y) * (pt.y - mean_y);

  PowerLawFit fit;
  fit.alpha = best.alpha;
  fit.beta = best.beta;
  fit.gamma = best.gamma;
  fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - best_sse / ss_tot;
  fit.n_points = static_cast<uint32_t>(points.size());
  fit.converged = best_converged;
  fit.residual_norm = std::sqrt(best_sse);
  fit.x_min_observed = x_min;
  return fit;
}

double predict(const PowerLawFit& fit, double x) {
  if (!(x > 0.0)) throw DataError("predict needs x > 0");
  return fit.alpha * std::pow(x, -fit.beta) + fit.gamma;
}

double scaling_limit(const PowerLawFit& fit) { return fit.gamma; }

double detect_knee(std::span<const CurvePoint> points) {
  if (points.size() < 4) {
    throw DataError("knee detection needs at least 4 points, got " +
                    std::to_string(points.size()));
  }
  for (size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].x) || !std::isfinite(points[i].y) || points[i].x <= 0.0) {
      throw DataError("knee detection needs finite points with x > 0");
    }
    if (i > 0 && points[i].x <= points[i - 1].x) {
      throw DataError("knee detection needs x strictly ascending");
    }
  }

  double y_min = points[0].y, y_max = points[0].y;
  bool ever_decreases = false;
  for (size_t i = 0; i < points.size(); ++i) {
    y_min = std::min(y_min, points[i].y);
    y_max = std::max(y_max, points[i].y);
    if (i > 0 && points[i].y < points[i - 1].y) ever_decreases = true;
  }
  if (!ever_decreases) {
    throw DataError("no knee: curve never decreases");
  }

  double lx0 = std::log10(points.front().x);
  double lx_span = std::log10(points.back().x) - lx0;
  double y_span = y_max - y_min;

  // Distance of the normalized curve below the descending diagonal; the knee
  // is where the curve bows furthest under the straight-line tradeoff.
  size_t best = 0;
  double best_diff = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < points.size(); ++i) {
    double xn = (std::log10(points[i].x) - lx0) / lx_span;
    double yn = (points[i].y - y_min) / y_span;
    double diff = 1.0 - xn - yn;
    if (diff > best_diff) {
      best_diff = diff;
      best = i;
    }
  }
  return points[best].x;
}

Phase phase_of(const PowerLawFit& fit, double x, double threshold) {
  if (!(x > 0.0) || !(threshold > 0.0)) {
    throw DataError("phase_of needs x > 0 and threshold > 0");
  }
  double ratio = std::pow(x / fit.x_min_observed, -fit.beta);
  return ratio < threshold ? Phase::kSaturating : Phase::kHighReturn;
}

std::vector<CurvePoint> load_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open curve file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file, expected x,y header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y") throw DataError(path + ":1: expected header \"x,y\", got \"" + line + "\"");

  std::vector<CurvePoint> points;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    CurvePoint pt;
    char comma = 0;
    if (!(ss >> pt.x >> comma >> pt.y) || comma != ',') {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed point line: " + line);
    }
    points.push_back(pt);
  }
  return points;
}

}  // namespace slab
