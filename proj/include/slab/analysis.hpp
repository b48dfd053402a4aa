#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slab/scalefit.hpp"
#include "slab/sweep.hpp"

namespace slab {

enum class Axis { kData, kParam, kCompute };
const char* to_string(Axis a);

enum class YField { kNeTest, kNeTrain };

// Which parameter count a record contributes when x is the parameter axis.
// Width-scaling schemes (overarch, mlp) are analyzed on non-embedding counts;
// table scaling on totals.
enum class ParamKind { kTotal, kNonEmbedding };

struct ParetoFrontier {
  std::vector<CurvePoint> points;  // x ascending, y strictly decreasing
};

// Raw (x, y) points of every ok record on the chosen axis, in record order.
// Throws DataError when no ok record matches.
std::vector<CurvePoint> curve_points(std::span<const RunRecord> records, Axis axis,
                                     YField y = YField::kNeTest,
                                     ParamKind param_kind = ParamKind::kTotal);

// Minimal non-dominated set under (minimize x, minimize y) over ok records.
// Equal-x ties keep the lower y, equal-y ties the lower x. Throws DataError
// when no ok record matches.
ParetoFrontier pareto_frontier(std::span<const RunRecord> records, Axis axis,
                               YField y = YField::kNeTest,
                               ParamKind param_kind = ParamKind::kTotal);

struct FrontierStep {
  double c = 0.0;
  uint64_t data_size = 0;
  uint64_t p_total = 0;
  double ne = 0.0;
  int data_direction = 0;   // sign of D change vs previous frontier point
  int param_direction = 0;  // sign of P change vs previous frontier point
};

// The same run set viewed on the compute axis twice: lines per model size
// (varying D) and lines per data size (varying P). Both views share one
// Pareto frontier; the identity is verified internally. Frontier steps carry
// direction tallies instead of hard claims about which resource won.
struct TandemViews {
  std::map<uint64_t, std::vector<CurvePoint>> by_model_size;  // P_total -> (C, ne)
  std::map<uint64_t, std::vector<CurvePoint>> by_data_size;   // D -> (C, ne)
  ParetoFrontier frontier;
  std::vector<FrontierStep> frontier_steps;
  int steps_larger_data = 0;
  int steps_larger_param = 0;
};
TandemViews tandem_views(std::span<const RunRecord> records);

enum class Verdict { kBetter, kSimilar, kWorse, kUnavailable };
const char* to_string(Verdict v);

struct SchemeAxisFit {
  Scheme scheme = Scheme::kNone;
  Axis axis = Axis::kData;
  bool available = false;
  PowerLawFit fit;
  Phase phase = Phase::kHighReturn;  // at the largest observed x
  std::vector<CurvePoint> points;    // the fitted frontier points
};

struct SchemeComparison {
  std::vector<Scheme> schemes;  // row/column order of the verdict matrices
  std::vector<SchemeAxisFit> cells;
  // verdicts[axis][i][j]: is schemes[i] better than schemes[j] on that axis
  // (steeper fitted beta by more than margin)?
  std::map<Axis, std::vector<std::vector<Verdict>>> verdicts;
  double margin = 0.02;
};

// Fits each scheme's frontier per axis and orders schemes by fitted beta,
// calling exponents within `margin` of each other similar. A scheme whose
// frontier cannot support a fit gets unavailable cells.
SchemeComparison scheme_comparison(const std::map<Scheme, std::vector<RunRecord>>& sets,
                                   double margin = 0.02, double phase_threshold = 0.05);

struct BestDimRow {
  double vsf = 1.0;
  uint32_t best_dim = 0;
  double best_ne = 0.0;
  double knee_dim = 0.0;  // NaN when the dim curve has no knee
};

// Per vertical scaling factor: the loss-minimizing embedding dimension and
// the knee of the (dim, NE) curve. vsf_refs maps each factor to the
// fingerprint its cross-grid runs carry in base_config. NE per dim is the
// seed mean at the largest data size in the group; ties go to the smaller
// dim. Throws DataError when a vsf spans fewer than 3 dims.
std::vector<BestDimRow> best_dim_table(
    std::span<const RunRecord> records,
    std::span<const std::pair<double, std::string>> vsf_refs);

struct TrainTestGap {
  PowerLawFit fit_train;
  PowerLawFit fit_test;
  double beta_gap = 0.0;  // beta_train - beta_test
  std::vector<CurvePoint> train_points;  // seed means per data size
  std::vector<CurvePoint> test_points;
};

// Fits seen-data and held-out NE against data size on the same x grid
// (seed-averaged per data size) and reports the exponent gap.
TrainTestGap train_test_gap(std::span<const RunRecord> records);

// Everything emit_report writes. Absent pieces still produce their files
// with headers only, so a bundle always has the same shape.
struct ReportInputs {
  struct Curve {
    std::string name;  // [a-z0-9_-]+, becomes curves/<name>.csv
    std::vector<CurvePoint> points;
    std::optional<PowerLawFit> fit;
  };
  struct GapRow {
    std::string label;  // "seed<k>" or "pooled"
    TrainTestGap gap;
  };
  std::vector<Curve> curves;
  std::vector<SchemeAxisFit> summary;
  std::optional<SchemeComparison> comparison;
  std::vector<BestDimRow> best_dims;
  std::vector<GapRow> gaps;
  std::optional<TandemViews> tandem;
};

// Writes the report bundle: curves/*.csv, summary.csv, summary.json,
// scheme_matrix.csv, best_dim.csv, train_test_gap.csv, tandem_lines.csv,
// tandem_frontier.csv. Byte-deterministic for identical inputs: fixed file
// and row order, floats at 9 significant digits, LF endings.
void emit_report(const ReportInputs& inputs, const std::string& out_dir);

}  // namespace slab
