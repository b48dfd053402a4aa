#pragma once

#include <cstdint>
#include <span>

#include "slab/dlrm.hpp"
#include "slab/synthgen.hpp"

namespace slab {

struct TrainOutcome {
  Model model;
  double train_ne = 0.0;
  double test_ne = 0.0;
  uint64_t examples_seen = 0;
  uint64_t flops_total = 0;  // train_per_example * examples_seen
};

// Normalized entropy: mean clamped log loss divided by the entropy of the
// label mean. 1.0 means no better than always predicting the background CTR.
// Throws DataError on an empty or single-class evaluation set.
double ne_from_predictions(std::span<const double> probs, std::span<const uint8_t> labels);
double evaluate_ne(const Model& model, std::span<const Sample> eval);

// ne scaled by the minimum NE of a named collection. ne_min <= 0 is a
// DataError.
double normalize_loss(double ne, double ne_min);

// One pass over the first `data_size` samples of the training stream in
// stream order, fixed minibatches, Adagrad updates. Sparse indices are
// remapped into table range by index mod rows, so shrinking a table raises
// its collision rate. Afterwards evaluates NE on the leading eval_size
// samples of the training stream (train_ne, the seen-data curve) and of the
// held-out test stream (test_ne). Deterministic in all arguments; numerical
// failure propagates as NumericError for the caller to record.
TrainOutcome train_one_epoch(const DlrmConfig& config, const FeatureSchema& schema,
                             const TeacherSpec& teacher, uint64_t master_seed, uint64_t data_size,
                             const OptimizerConfig& opt, uint32_t eval_size);

// Same, with the calibrated teacher supplied by the caller (sweeps reuse one
// teacher across every run).
TrainOutcome train_one_epoch(const DlrmConfig& config, const FeatureSchema& schema,
                             const Teacher& teacher, uint64_t master_seed, uint64_t data_size,
                             const OptimizerConfig& opt, uint32_t eval_size);

}  // namespace slab
