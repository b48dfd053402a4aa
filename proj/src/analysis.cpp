#include "slab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace slab {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double x_of(const RunRecord& r, Axis axis, ParamKind pk) {
  switch (axis) {
    case Axis::kData: return static_cast<double>(r.spec.data_size);
    case Axis::kParam:
      return static_cast<double>(pk == ParamKind::kTotal ? r.p_total : r.p_nonembedding);
    case Axis::kCompute: return static_cast<double>(r.c);
  }
  return 0.0;
}

double y_of(const RunRecord& r, YField y) {
  return y == YField::kNeTest ? r.ne_test : r.ne_train;
}

std::vector<CurvePoint> frontier_of_points(std::vector<CurvePoint> pts) {
  std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  std::vector<CurvePoint> frontier;
  double best_y = std::numeric_limits<double>::infinity();
  for (const CurvePoint& p : pts) {
    if (p.y < best_y) {
      frontier.push_back(p);
      best_y = p.y;
    }
  }
  return frontier;
}

double mean_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  NeumaierSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

std::string csv_num(double v) { return std::isfinite(v) ? format_g9(v) : std::string(); }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

void append_fit_row(std::string& csv, const SchemeAxisFit& cell) {
  csv += to_string(cell.scheme);
  csv += ',';
  csv += to_string(cell.axis);
  csv += ',';
  if (cell.available) {
    csv += format_g9(cell.fit.alpha);
    csv += ',';
    csv += format_g9(cell.fit.beta);
    csv += ',';
    csv += format_g9(cell.fit.gamma);
    csv += ',';
    csv += format_g9(cell.fit.r_squared);
    csv += ',';
    csv += to_string(cell.phase);
  } else {
    csv += ",,,,unavailable";
  }
  csv += '\n';
}

}  // namespace

const char* to_string(Axis a) {
  switch (a) {
    case Axis::kData: return "data";
    case Axis::kParam: return "param";
    case Axis::kCompute: return "compute";
  }
  return "?";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kBetter: return "better";
    case Verdict::kSimilar: return "similar";
    case Verdict::kWorse: return "worse";
    case Verdict::kUnavailable: return "na";
  }
  return "?";
}

std::vector<CurvePoint> curve_points(std::span<const RunRecord> records, Axis axis, YField y,
                                     ParamKind param_kind) {
  std::vector<CurvePoint> pts;
  for (const RunRecord& r : records) {
    if (r.status != "ok") continue;
    pts.push_back({x_of(r, axis, param_kind), y_of(r, y)});
  }
  if (pts.empty()) throw DataError("no ok records");
  return pts;
}

ParetoFrontier pareto_frontier(std::span<const RunRecord> records, Axis axis, YField y,
                               ParamKind param_kind) {
  return ParetoFrontier{frontier_of_points(curve_points(records, axis, y, param_kind))};
}

TandemViews tandem_views(std::span<const RunRecord> records) {
  std::vector<const RunRecord*> ok;
  for (const RunRecord& r : records) {
    if (r.status == "ok") ok.push_back(&r);
  }

  TandemViews tv;
  for (const RunRecord* r : ok) {
    tv.by_model_size[r->p_total].push_back({static_cast<double>(r->c), r->ne_test});
    tv.by_data_size[r->spec.data_size].push_back({static_cast<double>(r->c), r->ne_test});
  }
  if (tv.by_data_size.size() < 2 || tv.by_model_size.size() < 2) {
    throw DataError("tandem views need at least 2 data sizes and 2 model sizes, got " +
                    std::to_string(tv.by_data_size.size()) + " and " +
                    std::to_string(tv.by_model_size.size()));
  }
  auto sort_lines = [](std::map<uint64_t, std::vector<CurvePoint>>& lines) {
    for (auto& [key, pts] : lines) {
      std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
      });
    }
  };
  sort_lines(tv.by_model_size);
  sort_lines(tv.by_data_size);

  // Both groupings cover the same run multiset, so their frontiers must be
  // one and the same polyline. Computed from each side and checked, since
  // the whole point of the tandem picture is that shared dashed line.
  std::vector<CurvePoint> flat_model, flat_data;
  for (const auto& [key, pts] : tv.by_model_size)
    flat_model.insert(flat_model.end(), pts.begin(), pts.end());
  for (const auto& [key, pts] : tv.by_data_size)
    flat_data.insert(flat_data.end(), pts.begin(), pts.end());
  std::vector<CurvePoint> f1 = frontier_of_points(std::move(flat_model));
  std::vector<CurvePoint> f2 = frontier_of_points(std::move(flat_data));
  bool same = f1.size() == f2.size();
  for (size_t i = 0; same && i < f1.size(); ++i) {
    same = f1[i].x == f2[i].x && f1[i].y == f2[i].y;
  }
  if (!same) throw NumericError("tandem frontier identity violated");
  tv.frontier.points = std::move(f1);

  // Annotate frontier points with the run that produced them (smallest
  // (D, P, run_id) on exact ties) and tally step directions.
  std::sort(ok.begin(), ok.end(), [](const RunRecord* a, const RunRecord* b) {
    return std::tie(a->spec.data_size, a->p_total, a->spec.run_id) <
           std::tie(b->spec.data_size, b->p_total, b->spec.run_id);
  });
  for (const CurvePoint& p : tv.frontier.points) {
    const RunRecord* hit = nullptr;
    for (const RunRecord* r : ok) {
      if (static_cast<double>(r->c) == p.x && r->ne_test == p.y) {
        hit = r;
        break;
      }
    }
    if (!hit) throw NumericError("tandem frontier point lost its record");
    FrontierStep step;
    step.c = p.x;
    step.data_size = hit->spec.data_size;
    step.p_total = hit->p_total;
    step.ne = p.y;
    if (!tv.frontier_steps.empty()) {
      const FrontierStep& prev = tv.frontier_steps.back();
      step.data_direction =
          step.data_size == prev.data_size ? 0 : (step.data_size > prev.data_size ? 1 : -1);
      step.param_direction =
          step.p_total == prev.p_total ? 0 : (step.p_total > prev.p_total ? 1 : -1);
      tv.steps_larger_data += step.data_direction > 0;
      tv.steps_larger_param += step.param_direction > 0;
    }
    tv.frontier_steps.push_back(step);
  }
  return tv;
}

SchemeComparison scheme_comparison(const std::map<Scheme, std::vector<RunRecord>>& sets,
                                   double margin, double phase_threshold) {
  SchemeComparison cmp;
  cmp.margin = margin;
  for (const auto& [scheme, records] : sets) cmp.schemes.push_back(scheme);

  for (const auto& [scheme, records] : sets) {
    ParamKind pk = (scheme == Scheme::kOverarch || scheme == Scheme::kMlp)
                       ? ParamKind::kNonEmbedding
                       : ParamKind::kTotal;
    for (Axis axis : {Axis::kData, Axis::kParam, Axis::kCompute}) {
      SchemeAxisFit cell;
      cell.scheme = scheme;
      cell.axis = axis;
      try {
        cell.points = pareto_frontier(records, axis, YField::kNeTest, pk).points;
        cell.fit = fit_power_law(cell.points);
        cell.phase = phase_of(cell.fit, cell.points.back().x, phase_threshold);
        cell.available = true;
      } catch (const DataError&) {
        cell.available = false;
      }
      cmp.cells.push_back(std::move(cell));
    }
  }

  auto cell_of = [&](Scheme s, Axis a) -> const SchemeAxisFit* {
    for (const auto& c : cmp.cells) {
      if (c.scheme == s && c.axis == a) return &c;
    }
    return nullptr;
  };
  size_t n = cmp.schemes.size();
  for (Axis axis : {Axis::kData, Axis::kParam, Axis::kCompute}) {
    auto& m = cmp.verdicts[axis];
    m.assign(n, std::vector<Verdict>(n, Verdict::kSimilar));
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        const SchemeAxisFit* a = cell_of(cmp.schemes[i], axis);
        const SchemeAxisFit* b = cell_of(cmp.schemes[j], axis);
        if (!a || !b || !a->available || !b->available) {
          m[i][j] = Verdict::kUnavailable;
        } else if (a->fit.beta > b->fit.beta + margin) {
          m[i][j] = Verdict::kBetter;
        } else if (b->fit.beta > a->fit.beta + margin) {
          m[i][j] = Verdict::kWorse;
        } else {
          m[i][j] = Verdict::kSimilar;
        }
      }
    }
  }
  return cmp;
}

std::vector<BestDimRow> best_dim_table(
    std::span<const RunRecord> records,
    std::span<const std::pair<double, std::string>> vsf_refs) {
  std::vector<std::pair<double, std::string>> refs(vsf_refs.begin(), vsf_refs.end());
  std::sort(refs.begin(), refs.end());

  std::vector<BestDimRow> rows;
  for (const auto& [vsf, ref] : refs) {
    std::vector<const RunRecord*> group;
    for (const RunRecord& r : records) {
      if (r.status == "ok" && r.spec.scheme == Scheme::kHorizontal && r.spec.base_config == ref) {
        group.push_back(&r);
      }
    }
    std::vector<double> dims;
    uint64_t d_star = 0;
    for (const RunRecord* r : group) {
      if (std::find(dims.begin(), dims.end(), r->spec.factor) == dims.end()) {
        dims.push_back(r->spec.factor);
      }
      d_star = std::max(d_star, r->spec.data_size);
    }
    std::sort(dims.begin(), dims.end());
    if (dims.size() < 3) {
      throw DataError("best_dim_table: vsf " + format_g9(vsf) + " spans only " +
                      std::to_string(dims.size()) + " dims, need >= 3");
    }

    std::vector<CurvePoint> curve;
    for (double dim : dims) {
      std::vector<double> nes;
      for (const RunRecord* r : group) {
        if (r->spec.factor == dim && r->spec.data_size == d_star) nes.push_back(r->ne_test);
      }
      if (nes.empty()) {
        throw DataError("best_dim_table: vsf " + format_g9(vsf) + " has no run for dim " +
                        format_g9(dim) + " at its largest data size");
      }
      curve.push_back({dim, mean_of(std::move(nes))});
    }

    BestDimRow row;
    row.vsf = vsf;
    row.best_dim = static_cast<uint32_t>(curve.front().x);
    row.best_ne = curve.front().y;
    for (const CurvePoint& p : curve) {
      if (p.y < row.best_ne) {
        row.best_ne = p.y;
        row.best_dim = static_cast<uint32_t>(p.x);
      }
    }
    try {
      row.knee_dim = detect_knee(curve);
    } catch (const DataError&) {
      row.knee_dim = kNaN;
    }
    rows.push_back(row);
  }
  return rows;
}

TrainTestGap train_test_gap(std::span<const RunRecord> records) {
  std::map<uint64_t, std::vector<const RunRecord*>> by_d;
  for (const RunRecord& r : records) {
    if (r.status == "ok") by_d[r.spec.data_size].push_back(&r);
  }
  if (by_d.size() < 4) {
    throw DataError("train_test_gap needs >= 4 data sizes, got " + std::to_string(by_d.size()));
  }
  std::vector<CurvePoint> train_pts, test_pts;
  for (const auto& [d, group] : by_d) {
    std::vector<double> tr, te;
    for (const RunRecord* r : group) {
      tr.push_back(r->ne_train);
      te.push_back(r->ne_test);
    }
    double x = static_cast<double>(d);
    train_pts.push_back({x, mean_of(std::move(tr))});
    test_pts.push_back({x, mean_of(std::move(te))});
  }
  TrainTestGap gap;
  gap.fit_train = fit_power_law(train_pts);
  gap.fit_test = fit_power_law(test_pts);
  gap.beta_gap = gap.fit_train.beta - gap.fit_test.beta;
  gap.train_points = std::move(train_pts);
  gap.test_points = std::move(test_pts);
  return gap;
}

void emit_report(const ReportInputs& inputs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "curves");

  for (const auto& curve : inputs.curves) {
    if (curve.name.empty() ||
        curve.name.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_-") !=
            std::string::npos) {
      throw ConfigError("curve name must be [a-z0-9_-]+: \"" + curve.name + "\"");
    }
    std::string csv = "x,y,fitted_y\n";
    for (const CurvePoint& p : curve.points) {
      csv += format_g9(p.x);
      csv += ',';
      csv += format_g9(p.y);
      csv += ',';
      if (curve.fit) csv += format_g9(predict(*curve.fit, p.x));
      csv += '\n';
    }
    write_file((fs::path(out_dir) / "curves" / (curve.name + ".csv")).string(), csv);
  }

  std::string summary_csv = "scheme,axis,alpha,beta,gamma,r_squared,phase\n";
  ordered_json summary_json;
  summary_json["fits"] = ordered_json::array();
  for (const SchemeAxisFit& cell : inputs.summary) {
    append_fit_row(summary_csv, cell);
    ordered_json j;
    j["scheme"] = to_string(cell.scheme);
    j["axis"] = to_string(cell.axis);
    if (cell.available) {
      j["alpha"] = cell.fit.alpha;
      j["beta"] = cell.fit.beta;
      j["gamma"] = cell.fit.gamma;
      j["r_squared"] = cell.fit.r_squared;
      j["phase"] = to_string(cell.phase);
      j["n_points"] = cell.fit.n_points;
      j["converged"] = cell.fit.converged;
    } else {
      j["phase"] = "unavailable";
    }
    summary_json["fits"].push_back(std::move(j));
  }
  if (inputs.tandem) {
    ordered_json t;
    t["frontier_size"] = inputs.tandem->frontier.points.size();
    t["steps_larger_data"] = inputs.tandem->steps_larger_data;
    t["steps_larger_param"] = inputs.tandem->steps_larger_param;
    summary_json["tandem"] = std::move(t);
  } else {
    summary_json["tandem"] = nullptr;
  }
  write_file((fs::path(out_dir) / "summary.csv").string(), summary_csv);
  write_file((fs::path(out_dir) / "summary.json").string(), summary_json.dump(2) + "\n");

  std::string matrix_csv = "axis,scheme_row,scheme_col,verdict\n";
  if (inputs.comparison) {
    const SchemeComparison& cmp = *inputs.comparison;
    for (Axis axis : {Axis::kData, Axis::kParam, Axis::kCompute}) {
      auto it = cmp.verdicts.find(axis);
      if (it == cmp.verdicts.end()) continue;
      for (size_t i = 0; i < cmp.schemes.size(); ++i) {
        for (size_t j = 0; j < cmp.schemes.size(); ++j) {
          if (i == j) continue;
          matrix_csv += to_string(axis);
          matrix_csv += ',';
          matrix_csv += to_string(cmp.schemes[i]);
          matrix_csv += ',';
          matrix_csv += to_string(cmp.schemes[j]);
          matrix_csv += ',';
          matrix_csv += to_string(it->second[i][j]);
          matrix_csv += '\n';
        }
      }
    }
  }
  write_file((fs::path(out_dir) / "scheme_matrix.csv").string(), matrix_csv);

  std::string best_csv = "vsf,best_dim,best_ne,knee_dim\n";
  for (const BestDimRow& row : inputs.best_dims) {
    best_csv += format_g9(row.vsf);
    best_csv += ',';
    best_csv += std::to_string(row.best_dim);
    best_csv += ',';
    best_csv += format_g9(row.best_ne);
    best_csv += ',';
    best_csv += csv_num(row.knee_dim);
    best_csv += '\n';
  }
  write_file((fs::path(out_dir) / "best_dim.csv").string(), best_csv);

  std::string gap_csv = "label,beta_train,beta_test,beta_gap,r2_train,r2_test\n";
  for (const auto& row : inputs.gaps) {
    gap_csv += row.label;
    gap_csv += ',';
    gap_csv += format_g9(row.gap.fit_train.beta);
    gap_csv += ',';
    gap_csv += format_g9(row.gap.fit_test.beta);
    gap_csv += ',';
    gap_csv += format_g9(row.gap.beta_gap);
    gap_csv += ',';
    gap_csv += format_g9(row.gap.fit_train.r_squared);
    gap_csv += ',';
    gap_csv += format_g9(row.gap.fit_test.r_squared);
    gap_csv += '\n';
  }
  write_file((fs::path(out_dir) / "train_test_gap.csv").string(), gap_csv);

  std::string lines_csv = "view,group,c,ne\n";
  std::string frontier_csv = "c,data_size,p_total,ne,data_direction,param_direction\n";
  if (inputs.tandem) {
    auto emit_lines = [&](const char* view,
                          const std::map<uint64_t, std::vector<CurvePoint>>& lines) {
      for (const auto& [key, pts] : lines) {
        for (const CurvePoint& p : pts) {
          lines_csv += view;
          lines_csv += ',';
          lines_csv += std::to_string(key);
          lines_csv += ',';
          lines_csv += format_g9(p.x);
          lines_csv += ',';
          lines_csv += format_g9(p.y);
          lines_csv += '\n';
        }
      }
    };
    emit_lines("by_model_size", inputs.tandem->by_model_size);
    emit_lines("by_data_size", inputs.tandem->by_data_size);
    for (const FrontierStep& s : inputs.tandem->frontier_steps) {
      frontier_csv += format_g9(s.c);
      frontier_csv += ',';
      frontier_csv += std::to_string(s.data_size);
      frontier_csv += ',';
      frontier_csv += std::to_string(s.p_total);
      frontier_csv += ',';
      frontier_csv += format_g9(s.ne);
      frontier_csv += ',';
      frontier_csv += std::to_string(s.data_direction);
      frontier_csv += ',';
      frontier_csv += std::to_string(s.param_direction);
      frontier_csv += '\n';
    }
  }
  write_file((fs::path(out_dir) / "tandem_lines.csv").string(), lines_csv);
  write_file((fs::path(out_dir) / "tandem_frontier.csv").string(), frontier_csv);
}

}  // namespace slab
