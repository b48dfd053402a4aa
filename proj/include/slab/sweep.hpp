#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slab/dlrm.hpp"
#include "slab/synthgen.hpp"

namespace slab {

// One grid point. run_id is a stable hash over every other field, so a store
// can be resumed safely: a spec already present is never re-run.
struct RunSpec {
  std::string run_id;
  Scheme scheme = Scheme::kNone;
  double factor = 1.0;
  uint64_t data_size = 0;
  std::string base_config;  // fingerprint of the unscaled base DlrmConfig
  uint64_t master_seed = 0;

  bool operator==(const RunSpec&) const = default;
};

// One completed (or failed) run. ne_train / ne_test are NaN when status is
// "failed"; they serialize as JSON null.
struct RunRecord {
  RunSpec spec;
  uint64_t p_total = 0;
  uint64_t p_embedding = 0;
  uint64_t p_nonembedding = 0;
  uint64_t c = 0;  // train flops: train_per_example * data_size
  double ne_train = 0.0;
  double ne_test = 0.0;
  double wall_seconds = 0.0;
  std::string status = "ok";
};

// Everything a run needs besides its RunSpec. Stream seeds derive from the
// spec's master_seed, so all runs sharing a master_seed train on nested
// prefixes of the same sample stream.
struct SweepContext {
  DlrmConfig base;
  FeatureSchema schema;
  TeacherSpec teacher;
  OptimizerConfig opt;
  uint32_t eval_size = 50000;
  // Record real wall time per run. Disable to make stores byte-reproducible
  // across executions (wall_seconds then serializes as 0).
  bool record_wall_seconds = true;
};

// Cartesian product factors x data_sizes x seeds in that nesting order.
// Duplicate factors are dropped with a stderr warning; a factor invalid for
// the scheme raises ConfigError naming it.
std::vector<RunSpec> build_grid(const DlrmConfig& base, Scheme scheme,
                                std::span<const double> factors,
                                std::span<const uint64_t> data_sizes,
                                std::span<const uint64_t> seeds);

// Runs every spec not already in the store, appending one JSON line per
// completed run in spec order regardless of parallelism. Returns records for
// all given specs (stored + fresh). Numerical failures become status=failed
// records; they do not abort the sweep. Safe to kill and re-invoke: a torn
// trailing line is discarded on the next start.
std::vector<RunRecord> execute(const SweepContext& ctx, std::span<const RunSpec> specs,
                               uint32_t parallelism, const std::string& store_path,
                               const std::function<void(size_t done, size_t total)>& progress = {});

struct RecordFilter {
  std::optional<Scheme> scheme;
  std::optional<uint64_t> seed;
  std::optional<std::string> status;
  std::optional<std::string> base_config;
};

// Parses the JSONL store. A malformed terminated line is a hard DataError
// naming the line number; duplicate run_ids are fatal.
std::vector<RunRecord> load_records(const std::string& store_path, const RecordFilter& filter = {});

// Drops a torn trailing line (no final newline). Returns bytes removed.
uint64_t repair_store_tail(const std::string& store_path);

// Stable id over all spec fields except run_id itself.
std::string run_id_of(const RunSpec& spec);

}  // namespace slab
