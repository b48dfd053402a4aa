#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slab/analysis.hpp"
#include "slab/config.hpp"
#include "slab/scalefit.hpp"
#include "slab/sweep.hpp"
#include "slab/trainer.hpp"

namespace {

using namespace slab;

ExperimentConfig load_validated(const std::string& path) {
  std::vector<std::string> warnings;
  ExperimentConfig cfg = load_config(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  cfg.validate();
  return cfg;
}

int cmd_validate(const std::string& config_path) {
  ExperimentConfig cfg = load_validated(config_path);
  size_t grid_points = 0;
  for (const auto* g : {&cfg.grids.none, &cfg.grids.vertical, &cfg.grids.horizontal,
                        &cfg.grids.overarch, &cfg.grids.mlp}) {
    grid_points += g->size();
  }
  grid_points += cfg.grids.cross_vsf.size() * cfg.grids.horizontal.size();
  std::cout << "config ok: " << config_path << "\n"
            << "  tables: " << cfg.schema.tables.size() << ", dense: " << cfg.schema.num_dense
            << "\n"
            << "  grid: " << grid_points << " factors x " << cfg.data_sizes.size()
            << " data sizes x " << cfg.seeds.size() << " seeds\n"
            << "  store: " << cfg.store_path << "\n";
  return 0;
}

int cmd_gen(const std::string& config_path, const std::string& out, uint64_t count,
            const std::string& which_stream, std::optional<uint64_t> master_seed) {
  ExperimentConfig cfg = load_validated(config_path);
  uint64_t master = master_seed.value_or(cfg.seeds.front());
  uint64_t seed = which_stream == "train" ? train_stream_seed(master) : test_stream_seed(master);
  Teacher teacher = build_teacher(cfg.schema, cfg.teacher);
  SampleStream stream(cfg.schema, teacher, seed);
  write_dataset(out, stream, count);
  std::cout << "wrote " << count << " " << which_stream << " samples to " << out << "\n";
  return 0;
}

std::vector<RunSpec> grid_for(const ExperimentConfig& cfg, const std::string& section) {
  const SchemeGrids& g = cfg.grids;
  if (section == "cross") {
    std::vector<RunSpec> specs;
    for (double vsf : g.cross_vsf) {
      DlrmConfig base_v = apply_scaling(cfg.model, Scheme::kVertical, vsf);
      auto part = build_grid(base_v, Scheme::kHorizontal, g.horizontal, cfg.data_sizes, cfg.seeds);
      specs.insert(specs.end(), part.begin(), part.end());
    }
    return specs;
  }
  const std::vector<double>* factors = nullptr;
  Scheme scheme = Scheme::kNone;
  if (section == "none") {
    factors = &g.none;
  } else if (section == "vertical") {
    factors = &g.vertical;
    scheme = Scheme::kVertical;
  } else if (section == "horizontal") {
    factors = &g.horizontal;
    scheme = Scheme::kHorizontal;
  } else if (section == "overarch") {
    factors = &g.overarch;
    scheme = Scheme::kOverarch;
  } else if (section == "mlp") {
    factors = &g.mlp;
    scheme = Scheme::kMlp;
  } else {
    throw ConfigError("unknown sweep scheme: " + section);
  }
  if (factors->empty()) return {};
  return build_grid(cfg.model, scheme, *factors, cfg.data_sizes, cfg.seeds);
}

int cmd_sweep(const std::string& config_path, const std::string& scheme_arg,
              std::optional<uint32_t> parallelism_arg, bool resume) {
  ExperimentConfig cfg = load_validated(config_path);
  uint32_t parallelism = parallelism_arg.value_or(cfg.parallelism);

  std::vector<std::string> sections;
  if (scheme_arg == "all") {
    sections = {"none", "vertical", "horizontal", "overarch", "mlp", "cross"};
  } else {
    sections = {scheme_arg};
  }
  std::vector<RunSpec> specs;
  for (const auto& s : sections) {
    auto part = grid_for(cfg, s);
    specs.insert(specs.end(), part.begin(), part.end());
  }
  if (specs.empty()) {
    throw ConfigError("no runs: scheme \"" + scheme_arg + "\" has an empty factor list");
  }

  namespace fs = std::filesystem;
  if (!resume && fs::exists(cfg.store_path) && fs::file_size(cfg.store_path) > 0) {
    throw ConfigError("store " + cfg.store_path +
                      " already exists; pass --resume to continue it");
  }

  SweepContext ctx;
  ctx.base = cfg.model;
  ctx.schema = cfg.schema;
  ctx.teacher = cfg.teacher;
  ctx.opt = cfg.optimizer;
  ctx.eval_size = cfg.eval_size;
  ctx.record_wall_seconds = cfg.record_wall_seconds;

  auto start = std::chrono::steady_clock::now();
  size_t preexisting = 0;
  bool first_report = true;
  auto progress = [&](size_t done, size_t total) {
    if (first_report) {
      preexisting = done;
      first_report = false;
    }
    std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    std::cerr << "\r" << done << "/" << total << " runs";
    if (done > preexisting && done < total) {
      double per_run = elapsed.count() / static_cast<double>(done - preexisting);
      std::cerr << " (eta " << static_cast<long>(per_run * static_cast<double>(total - done))
                << "s)   ";
    } else {
      std::cerr << "        ";
    }
    std::cerr.flush();
  };

  std::vector<RunRecord> records = execute(ctx, specs, parallelism, cfg.store_path, progress);
  std::cerr << "\n";

  size_t failed = 0;
  for (const auto& r : records) failed += r.status == "failed";
  std::cout << "sweep complete: " << records.size() << " runs, " << records.size() - failed
            << " ok, " << failed << " failed, store " << cfg.store_path << "\n";
  if (failed > 0) {
    std::cerr << "failed runs:\n";
    for (const auto& r : records) {
      if (r.status == "failed") std::cerr << "  " << r.spec.run_id << "\n";
    }
    return 2;
  }
  return 0;
}

int cmd_fit(const std::string& store, const std::string& axis_arg,
            const std::string& scheme_arg, const std::string& y_arg, bool raw) {
  Axis axis;
  if (axis_arg == "data" || axis_arg == "D") {
    axis = Axis::kData;
  } else if (axis_arg == "param" || axis_arg == "P") {
    axis = Axis::kParam;
  } else if (axis_arg == "compute" || axis_arg == "C") {
    axis = Axis::kCompute;
  } else {
    throw ConfigError("--axis must be data|param|compute, got " + axis_arg);
  }
  YField y;
  if (y_arg == "ne_test") {
    y = YField::kNeTest;
  } else if (y_arg == "ne_train") {
    y = YField::kNeTrain;
  } else {
    throw ConfigError("--y must be ne_test or ne_train, got " + y_arg);
  }

  RecordFilter filter;
  filter.status = "ok";
  ParamKind kind = ParamKind::kTotal;
  if (!scheme_arg.empty() && scheme_arg != "all") {
    Scheme s = scheme_from_string(scheme_arg);
    filter.scheme = s;
    if (s == Scheme::kOverarch || s == Scheme::kMlp) kind = ParamKind::kNonEmbedding;
  }
  std::vector<RunRecord> records = load_records(store, filter);
  if (records.empty()) throw DataError("no ok records match in " + store);

  std::vector<CurvePoint> points = raw ? curve_points(records, axis, y, kind)
                                       : pareto_frontier(records, axis, y, kind).points;
  PowerLawFit fit = fit_power_law(points);
  double x_max = 0.0;
  for (const auto& p : points) x_max = std::max(x_max, p.x);
  Phase phase = phase_of(fit, x_max);

  std::string scheme_label = scheme_arg.empty() ? "all" : scheme_arg;
  std::cout << "scheme=" << scheme_label << " axis=" << to_string(axis)
            << " alpha=" << format_g9(fit.alpha) << " beta=" << format_g9(fit.beta)
            << " gamma=" << format_g9(fit.gamma) << " r2=" << format_g9(fit.r_squared)
            << " phase=" << to_string(phase) << "\n";

  namespace fs = std::filesystem;
  fs::path out = fs::path(store).parent_path() /
                 (fs::path(store).stem().string() + "_fit_" + scheme_label + "_" +
                  to_string(axis) + "_" + y_arg + ".csv");
  std::sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  std::string csv = "x,y,fitted_y\n";
  for (const auto& p : points) {
    csv += format_g9(p.x);
    csv += ',';
    csv += format_g9(p.y);
    csv += ',';
    csv += format_g9(predict(fit, p.x));
    csv += '\n';
  }
  std::ofstream fout(out, std::ios::binary | std::ios::trunc);
  if (!fout) throw DataError("cannot write " + out.string());
  fout << csv;
  std::cerr << "fitted curve written to " << out.string() << "\n";
  return 0;
}

int cmd_report(const std::string& config_path, std::optional<std::string> store_arg,
               std::optional<std::string> out_arg) {
  ExperimentConfig cfg = load_validated(config_path);
  std::string store = store_arg.value_or(cfg.store_path);
  std::string out_dir = out_arg.value_or(cfg.report_dir);

  std::vector<RunRecord> all = load_records(store);
  size_t ok_count = 0;
  for (const auto& r : all) ok_count += r.status == "ok";
  if (ok_count == 0) throw DataError("no ok records in " + store);

  std::string base_ref = cfg.model.fingerprint();
  ReportInputs inputs;

  // Scheme fits compare like against like: only runs scaled straight off the
  // base model (cross-grid runs carry a different base fingerprint).
  std::map<Scheme, std::vector<RunRecord>> sets;
  for (const auto& r : all) {
    if (r.status == "ok" && r.spec.base_config == base_ref) {
      sets[r.spec.scheme].push_back(r);
    }
  }
  if (!sets.empty()) {
    inputs.comparison = scheme_comparison(sets, cfg.beta_margin, cfg.phase_threshold);
    inputs.summary = inputs.comparison->cells;
    for (const auto& cell : inputs.comparison->cells) {
      if (!cell.available) continue;
      ReportInputs::Curve curve;
      curve.name = std::string(to_string(cell.scheme)) + "_" + to_string(cell.axis);
      curve.points = cell.points;
      curve.fit = cell.fit;
      inputs.curves.push_back(std::move(curve));
    }
  }

  try {
    inputs.tandem = tandem_views(all);
  } catch (const DataError& e) {
    std::cerr << "tandem views skipped: " << e.what() << "\n";
  }

  if (cfg.grids.horizontal.size() >= 3) {
    std::vector<std::pair<double, std::string>> vsf_refs;
    vsf_refs.emplace_back(1.0, base_ref);
    for (double vsf : cfg.grids.cross_vsf) {
      if (vsf == 1.0) continue;
      vsf_refs.emplace_back(vsf, apply_scaling(cfg.model, Scheme::kVertical, vsf).fingerprint());
    }
    try {
      inputs.best_dims = best_dim_table(all, vsf_refs);
    } catch (const DataError& e) {
      std::cerr << "best-dim table skipped: " << e.what() << "\n";
    }
  }

  std::vector<RunRecord> data_runs;
  for (const auto& r : all) {
    if (r.spec.scheme == Scheme::kNone && r.spec.base_config == base_ref) data_runs.push_back(r);
  }
  if (!data_runs.empty()) {
    std::vector<uint64_t> gap_seeds;
    for (const auto& r : data_runs) {
      if (std::find(gap_seeds.begin(), gap_seeds.end(), r.spec.master_seed) == gap_seeds.end()) {
        gap_seeds.push_back(r.spec.master_seed);
      }
    }
    std::sort(gap_seeds.begin(), gap_seeds.end());
    for (uint64_t seed : gap_seeds) {
      std::vector<RunRecord> per_seed;
      for (const auto& r : data_runs) {
        if (r.spec.master_seed == seed) per_seed.push_back(r);
      }
      try {
        inputs.gaps.push_back({"seed" + std::to_string(seed), train_test_gap(per_seed)});
      } catch (const DataError& e) {
        std::cerr << "train/test gap for seed " << seed << " skipped: " << e.what() << "\n";
      }
    }
    try {
      TrainTestGap pooled = train_test_gap(data_runs);
      ReportInputs::Curve train_curve{"gap_train", pooled.train_points, pooled.fit_train};
      ReportInputs::Curve test_curve{"gap_test", pooled.test_points, pooled.fit_test};
      inputs.curves.push_back(std::move(train_curve));
      inputs.curves.push_back(std::move(test_curve));
      inputs.gaps.push_back({"pooled", std::move(pooled)});
    } catch (const DataError& e) {
      std::cerr << "pooled train/test gap skipped: " << e.what() << "\n";
    }
  }

  emit_report(inputs, out_dir);
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale scaling-law lab for recommendation models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string gen_out, gen_stream = "train";
  uint64_t gen_count = 0;
  std::optional<uint64_t> gen_seed;
  std::string sweep_scheme = "all";
  std::optional<uint32_t> sweep_parallelism;
  bool sweep_resume = false;
  std::string fit_store, fit_axis, fit_scheme = "all", fit_y = "ne_test";
  bool fit_raw = false;
  std::optional<std::string> report_store, report_out;

  CLI::App* validate = app.add_subcommand("validate", "parse and check a config file");
  validate->add_option("config", config_path, "experiment config path")->required();

  CLI::App* gen = app.add_subcommand("gen", "export a binary sample dataset");
  gen->add_option("config", config_path)->required();
  gen->add_option("--out", gen_out, "output file")->required();
  gen->add_option("--count", gen_count, "number of samples")->required();
  gen->add_option("--stream", gen_stream, "train or test stream")
      ->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--master-seed", gen_seed, "master seed (default: first sweep seed)");

  CLI::App* sweep = app.add_subcommand("sweep", "run the experiment grid into the record store");
  sweep->add_option("config", config_path)->required();
  sweep->add_option("--scheme", sweep_scheme,
                    "all|none|vertical|horizontal|overarch|mlp|cross")
      ->check(CLI::IsMember({"all", "none", "vertical", "horizontal", "overarch", "mlp",
                             "cross"}));
  sweep->add_option("--parallelism", sweep_parallelism, "worker threads");
  sweep->add_flag("--resume", sweep_resume, "continue an existing store");

  CLI::App* fit = app.add_subcommand("fit", "fit a power law to stored runs");
  fit->add_option("store", fit_store, "record store path")->required();
  fit->add_option("--axis", fit_axis, "data|param|compute")->required();
  fit->add_option("--scheme", fit_scheme, "restrict to one scheme");
  fit->add_option("--y", fit_y, "ne_test|ne_train");
  fit->add_flag("--raw", fit_raw, "fit raw points instead of the Pareto frontier");

  CLI::App* report = app.add_subcommand("report", "emit the full analysis bundle");
  report->add_option("config", config_path)->required();
  report->add_option("--store", report_store, "override store path");
  report->add_option("--out", report_out, "override report dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (gen->parsed()) return cmd_gen(config_path, gen_out, gen_count, gen_stream, gen_seed);
    if (sweep->parsed())
      return cmd_sweep(config_path, sweep_scheme, sweep_parallelism, sweep_resume);
    if (fit->parsed()) return cmd_fit(fit_store, fit_axis, fit_scheme, fit_y, fit_raw);
    if (report->parsed()) return cmd_report(config_path, report_store, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
