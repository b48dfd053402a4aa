#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "slab/common.hpp"
#include "slab/synthgen.hpp"

namespace slab {

enum class Interaction { kConcat, kConcatPlusDot };

enum class Scheme { kNone, kVertical, kHorizontal, kOverarch, kMlp };

const char* to_string(Scheme s);
const char* to_string(Interaction i);
Scheme scheme_from_string(const std::string& s);
Interaction interaction_from_string(const std::string& s);

struct TableShape {
  uint32_t rows = 1;
  uint32_t dim = 1;
  bool operator==(const TableShape&) const = default;
};

// Full architectural description of one model instance. bottom_widths are the
// output widths of the dense MLP layers (input is num_dense); overarch_widths
// are the top MLP output widths and must end in 1 (the logit).
struct DlrmConfig {
  uint32_t num_dense = 1;
  std::vector<TableShape> tables;
  std::vector<uint32_t> bottom_widths;
  std::vector<uint32_t> overarch_widths;
  Interaction interaction = Interaction::kConcat;
  std::string scheme_tag = "base";

  void validate() const;
  // Width of the interaction output feeding the overarch stack.
  uint32_t interaction_width() const;
  std::string fingerprint() const;

  bool operator==(const DlrmConfig& o) const {
    return num_dense == o.num_dense && tables == o.tables &&
           bottom_widths == o.bottom_widths && overarch_widths == o.overarch_widths &&
           interaction == o.interaction && scheme_tag == o.scheme_tag;
  }
};

struct ParamCount {
  uint64_t embedding = 0;
  uint64_t nonembedding = 0;
  uint64_t total = 0;
};

// Flop convention: a linear layer n->m costs 2nm per example forward, a
// pairwise dot of d-vectors costs 2d, embedding lookup/pooling is free, and
// training costs 3x the forward pass. Row counts never enter.
struct FlopCount {
  uint64_t forward_per_example = 0;
  uint64_t train_per_example = 0;
  bool operator==(const FlopCount&) const = default;
};

struct OptimizerConfig {
  double learning_rate = 0.05;
  double epsilon = 1e-8;
  uint32_t batch_size = 256;
};

struct LinearLayer {
  uint32_t fan_in = 0;
  uint32_t fan_out = 0;
  std::vector<double> weights;  // row-major [fan_out][fan_in]
  std::vector<double> bias;     // [fan_out]
};

// Trainable model state plus Adagrad accumulators, one scalar per parameter.
class Model {
 public:
  Model() = default;
  explicit Model(const DlrmConfig& config);

  const DlrmConfig& config() const { return config_; }

  std::vector<std::vector<double>> embeddings;       // [table][row*dim+d]
  std::vector<LinearLayer> bottom;
  std::vector<LinearLayer> overarch;
  std::vector<std::vector<double>> embedding_accum;  // Adagrad state
  std::vector<std::vector<double>> bottom_accum;     // per layer: W then b
  std::vector<std::vector<double>> overarch_accum;

  // Total stored parameter scalars (excluding optimizer state), and flat
  // access in a fixed order: embeddings, bottom (W then b), overarch.
  uint64_t stored_parameter_count() const;
  double& parameter_at(uint64_t flat_index);
  bool operator==(const Model& o) const {
    return config_ == o.config_ && embeddings == o.embeddings && equal_layers(o);
  }

 private:
  bool equal_layers(const Model& o) const;
  DlrmConfig config_;
};

// Gradient of one batch loss. Embedding gradients are sparse: only rows
// touched by the batch appear. Buffers keep capacity across zero() calls.
class Gradients {
 public:
  explicit Gradients(const DlrmConfig& config);

  struct SparseRows {
    uint32_t dim = 0;
    std::unordered_map<uint32_t, uint32_t> slot_of_row;
    std::vector<uint32_t> rows;  // slot -> row index
    std::vector<double> data;    // [slot*dim+d]
    double* slot(uint32_t row);
    const double* find(uint32_t row) const;
    void clear();
  };

  std::vector<SparseRows> embeddings;
  std::vector<std::vector<double>> bottom_w, bottom_b;
  std::vector<std::vector<double>> overarch_w, overarch_b;

  void zero();
  // Gradient entry for the model-flat parameter index; untouched rows are 0.
  double value_at(const Model& model, uint64_t flat_index) const;
};

// Reusable per-sample buffers for forward/backward.
struct Workspace {
  std::vector<std::vector<double>> bottom_act;    // per layer output
  std::vector<std::vector<double>> pooled;        // per table
  std::vector<double> interaction;
  std::vector<std::vector<double>> overarch_act;
  std::vector<double> d_interaction;
  std::vector<double> d_dense;
  std::vector<std::vector<double>> d_bottom_act;
  std::vector<std::vector<double>> d_overarch_act;
  std::vector<std::vector<double>> d_pooled;
};

Model build_model(const DlrmConfig& config, uint64_t seed);

// Per-sample click probability; sparse indices must be in range. Multi-hot
// indices pool by summation.
std::vector<double> forward(const Model& model, std::span<const Sample> batch);
double forward_one(const Model& model, const Sample& sample, Workspace& ws);

// Mean binary cross-entropy over the batch (probabilities clamped to
// [1e-7, 1-1e-7] for the log) and its exact analytic gradient, accumulated
// into `grads`. Throws NumericError if the loss is not finite.
double loss_and_backward(const Model& model, std::span<const Sample> batch,
                         std::span<const uint8_t> labels, Gradients& grads);

ParamCount count_params(const DlrmConfig& config);
FlopCount count_flops(const DlrmConfig& config);

// Produces the scaled variant of `base` for a scheme/factor grid point.
// Vertical scales rows, horizontal pins every embedding dimension (and the
// bottom output) to the target, overarch and mlp scale layer widths; the
// final logit width always stays 1. Fractional widths round half away from
// zero with a floor of 1.
DlrmConfig apply_scaling(const DlrmConfig& base, Scheme scheme, double factor);

// Inverse of DlrmConfig::fingerprint(): rebuilds the architecture a stored
// record names as its base, so a run is reproducible from the record alone.
// scheme_tag is not part of the fingerprint and comes back as "base".
// Throws DataError unless the result fingerprints back to `ref` exactly.
DlrmConfig config_from_fingerprint(const std::string& ref);

// Adagrad: accumulator += g^2; theta -= lr * g / (sqrt(accumulator) + eps).
// Only touched embedding rows update; exact-zero gradients are no-ops.
void adagrad_step(Model& model, const Gradients& grads, const OptimizerConfig& opt);

inline double clamp_probability(double p) {
  constexpr double kEps = 1e-7;
  if (p < kEps) return kEps;
  if (p > 1.0 - kEps) return 1.0 - kEps;
  return p;
}

}  // namespace slab
