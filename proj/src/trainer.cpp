#include "slab/trainer.hpp"

#include <cmath>
#include <vector>

namespace slab {

namespace {

// Remaps raw vocabulary indices into the model's table ranges. Collisions
// are the point: fewer rows, more ids sharing a row.
void remap_to_rows(Sample& s, const DlrmConfig& config) {
  for (size_t t = 0; t < s.sparse.size(); ++t) {
    uint32_t rows = config.tables[t].rows;
    for (uint32_t& idx : s.sparse[t]) idx %= rows;
  }
}

std::vector<Sample> eval_set(const SampleStream& stream, const DlrmConfig& config,
                             uint32_t eval_size) {
  std::vector<Sample> eval(eval_size);
  for (uint32_t i = 0; i < eval_size; ++i) {
    stream.sample_at(i, eval[i]);
    remap_to_rows(eval[i], config);
  }
  return eval;
}

}  // namespace

double ne_from_predictions(std::span<const double> probs, std::span<const uint8_t> labels) {
  if (probs.empty() || probs.size() != labels.size()) {
    throw DataError("NE needs a non-empty prediction/label sequence of equal length");
  }
  NeumaierSum label_sum;
  for (uint8_t y : labels) label_sum.add(static_cast<double>(y));
  double ctr = label_sum.value() / static_cast<double>(labels.size());
  if (!(ctr > 0.0) || !(ctr < 1.0)) {
    throw DataError("NE undefined: evaluation set is single-class (background CTR " +
                    format_g9(ctr) + ")");
  }

  NeumaierSum loss_sum;
  for (size_t i = 0; i < probs.size(); ++i) {
    double p = clamp_probability(probs[i]);
    loss_sum.add(labels[i] ? -std::log(p) : -std::log(1.0 - p));
  }
  double mean_loss = loss_sum.value() / static_cast<double>(probs.size());
  double entropy = -(ctr * std::log(ctr) + (1.0 - ctr) * std::log(1.0 - ctr));
  return mean_loss / entropy;
}

double evaluate_ne(const Model& model, std::span<const Sample> eval) {
  std::vector<double> probs = forward(model, eval);
  std::vector<uint8_t> labels(eval.size());
  for (size_t i = 0; i < eval.size(); ++i) labels[i] = eval[i].label;
  return ne_from_predictions(probs, labels);
}

double normalize_loss(double ne, double ne_min) {
  if (!(ne_min > 0.0)) {
    throw DataError("normalize_loss: ne_min must be > 0, got " + format_g9(ne_min));
  }
  return ne / ne_min;
}

TrainOutcome train_one_epoch(const DlrmConfig& config, const FeatureSchema& schema,
                             const TeacherSpec& teacher_spec, uint64_t master_seed,
                             uint64_t data_size, const OptimizerConfig& opt, uint32_t eval_size) {
  teacher_spec.validate();
  Teacher teacher = build_teacher(schema, teacher_spec);
  return train_one_epoch(config, schema, teacher, master_seed, data_size, opt, eval_size);
}

TrainOutcome train_one_epoch(const DlrmConfig& config, const FeatureSchema& schema,
                             const Teacher& teacher, uint64_t master_seed, uint64_t data_size,
                             const OptimizerConfig& opt, uint32_t eval_size) {
  config.validate();
  schema.validate();
  if (schema.tables.size() != config.tables.size()) {
    throw ConfigError("model has " + std::to_string(config.tables.size()) +
                      " tables but schema has " + std::to_string(schema.tables.size()));
  }
  if (eval_size == 0) throw ConfigError("eval_size must be >= 1");
  if (opt.batch_size == 0) throw ConfigError("batch_size must be >= 1");

  SampleStream train_stream(schema, teacher, train_stream_seed(master_seed));
  SampleStream test_stream(schema, teacher, test_stream_seed(master_seed));

  TrainOutcome out;
  out.model = build_model(config, mix_seed(master_seed, 0x6d6f64656cULL));
  out.examples_seen = data_size;
  out.flops_total = count_flops(config).train_per_example * data_size;

  Gradients grads(config);
  std::vector<Sample> batch(opt.batch_size);
  std::vector<uint8_t> labels(opt.batch_size);
  for (uint64_t start = 0; start < data_size; start += opt.batch_size) {
    uint64_t n = std::min<uint64_t>(opt.batch_size, data_size - start);
    for (uint64_t i = 0; i < n; ++i) {
      train_stream.sample_at(start + i, batch[i]);
      remap_to_rows(batch[i], config);
      labels[i] = batch[i].label;
    }
    loss_and_backward(out.model, std::span(batch.data(), n), std::span(labels.data(), n), grads);
    adagrad_step(out.model, grads, opt);
  }

  // Seen-data NE first: the leading slice of the very stream just trained on
  // (for data_size >= eval_size every sample was seen once).
  std::vector<Sample> eval = eval_set(train_stream, config, eval_size);
  out.train_ne = evaluate_ne(out.model, eval);
  eval = eval_set(test_stream, config, eval_size);
  out.test_ne = evaluate_ne(out.model, eval);
  return out;
}

}  // namespace slab
