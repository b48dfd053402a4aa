#pragma once

#include <string>
#include <vector>

#include "slab/dlrm.hpp"
#include "slab/synthgen.hpp"

namespace slab {

// Factor lists per scaling scheme. horizontal entries are target embedding
// dims; cross_vsf lists extra vertical factors for the dim x rows cross grid
// (vsf 1 is always included via the base model itself).
struct SchemeGrids {
  std::vector<double> none;
  std::vector<double> vertical;
  std::vector<double> horizontal;
  std::vector<double> overarch;
  std::vector<double> mlp;
  std::vector<double> cross_vsf;
};

// One experiment, loaded from a single config file (JSON with // comments).
struct ExperimentConfig {
  FeatureSchema schema;
  TeacherSpec teacher;
  DlrmConfig model;
  OptimizerConfig optimizer;

  SchemeGrids grids;
  std::vector<uint64_t> data_sizes;
  std::vector<uint64_t> seeds;
  uint32_t parallelism = 4;
  uint32_t eval_size = 50000;
  bool record_wall_seconds = true;

  double phase_threshold = 0.05;
  double beta_margin = 0.02;
  bool fit_frontier = true;
  std::string y_field = "ne_test";

  std::string store_path = "runs.jsonl";
  std::string report_dir = "report";

  // Collects every violation across all sections into one ConfigError.
  void validate() const;
};

// Parses and applies SLAB_STORE / SLAB_PARALLELISM environment overrides.
// Unknown keys are reported through `warnings`, never fatal. Does not call
// validate().
ExperimentConfig load_config(const std::string& path,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace slab
