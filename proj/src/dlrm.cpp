#include "slab/dlrm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace slab {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

uint32_t scale_width(uint32_t w, double factor) {
  long long r = std::llround(static_cast<double>(w) * factor);
  return static_cast<uint32_t>(std::max(1LL, r));
}

// y = act(Wx + b), act = ReLU when relu is set, identity otherwise.
void linear_forward(const LinearLayer& layer, const std::vector<double>& x,
                    std::vector<double>& y, bool relu) {
  y.resize(layer.fan_out);
  for (uint32_t j = 0; j < layer.fan_out; ++j) {
    const double* w = layer.weights.data() + static_cast<size_t>(j) * layer.fan_in;
    double acc = layer.bias[j];
    for (uint32_t i = 0; i < layer.fan_in; ++i) acc += w[i] * x[i];
    y[j] = relu ? std::max(0.0, acc) : acc;
  }
}

// Given dL/dy (already masked through the activation), accumulates dW and db
// and produces dL/dx.
void linear_backward(const LinearLayer& layer, const std::vector<double>& x,
                     const std::vector<double>& dy, std::vector<double>& dw,
                     std::vector<double>& db, std::vector<double>& dx) {
  dx.assign(layer.fan_in, 0.0);
  for (uint32_t j = 0; j < layer.fan_out; ++j) {
    double g = dy[j];
    db[j] += g;
    double* dwj = dw.data() + static_cast<size_t>(j) * layer.fan_in;
    const double* wj = layer.weights.data() + static_cast<size_t>(j) * layer.fan_in;
    if (g == 0.0) continue;
    for (uint32_t i = 0; i < layer.fan_in; ++i) {
      dwj[i] += g * x[i];
      dx[i] += g * wj[i];
    }
  }
}

void relu_mask(const std::vector<double>& out, std::vector<double>& d) {
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] <= 0.0) d[i] = 0.0;
  }
}

// Shared forward pass. When `ws` caches are kept, backward can re-walk them.
double forward_cached(const Model& model, const Sample& sample, Workspace& ws) {
  const DlrmConfig& cfg = model.config();
  if (sample.dense.size() != cfg.num_dense || sample.sparse.size() != cfg.tables.size()) {
    throw DataError("sample does not conform to model schema");
  }

  // Bottom MLP (ReLU on every layer).
  ws.bottom_act.resize(cfg.bottom_widths.size());
  const std::vector<double>* x = &sample.dense;
  for (size_t l = 0; l < model.bottom.size(); ++l) {
    linear_forward(model.bottom[l], *x, ws.bottom_act[l], /*relu=*/true);
    x = &ws.bottom_act[l];
  }

  // Embedding pooling by summation.
  ws.pooled.resize(cfg.tables.size());
  for (size_t t = 0; t < cfg.tables.size(); ++t) {
    uint32_t rows = cfg.tables[t].rows;
    uint32_t dim = cfg.tables[t].dim;
    auto& pooled = ws.pooled[t];
    pooled.assign(dim, 0.0);
    for (uint32_t idx : sample.sparse[t]) {
      if (idx >= rows) {
        throw DataError("sparse index " + std::to_string(idx) + " out of range for table " +
                        std::to_string(t) + " with " + std::to_string(rows) + " rows");
      }
      const double* row = model.embeddings[t].data() + static_cast<size_t>(idx) * dim;
      for (uint32_t d = 0; d < dim; ++d) pooled[d] += row[d];
    }
  }

  // Interaction: concat of bottom output and pooled tables, optionally
  // followed by all pairwise dots among those vectors.
  ws.interaction.clear();
  ws.interaction.reserve(cfg.interaction_width());
  const std::vector<double>& bottom_out = ws.bottom_act.back();
  ws.interaction.insert(ws.interaction.end(), bottom_out.begin(), bottom_out.end());
  for (const auto& pooled : ws.pooled) {
    ws.interaction.insert(ws.interaction.end(), pooled.begin(), pooled.end());
  }
  if (cfg.interaction == Interaction::kConcatPlusDot) {
    size_t n_vec = cfg.tables.size() + 1;
    auto vec_of = [&](size_t v) -> const std::vector<double>& {
      return v == 0 ? bottom_out : ws.pooled[v - 1];
    };
    for (size_t a = 0; a < n_vec; ++a) {
      for (size_t b = a + 1; b < n_vec; ++b) {
        const auto& va = vec_of(a);
        const auto& vb = vec_of(b);
        double dot = 0.0;
        for (size_t d = 0; d < va.size(); ++d) dot += va[d] * vb[d];
        ws.interaction.push_back(dot);
      }
    }
  }

  // Overarch MLP (ReLU on hidden layers, linear logit).
  ws.overarch_act.resize(cfg.overarch_widths.size());
  x = &ws.interaction;
  for (size_t l = 0; l < model.overarch.size(); ++l) {
    bool relu = l + 1 < model.overarch.size();
    linear_forward(model.overarch[l], *x, ws.overarch_act[l], relu);
    x = &ws.overarch_act[l];
  }
  return sigmoid(ws.overarch_act.back()[0]);
}

}  // namespace

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kNone: return "none";
    case Scheme::kVertical: return "vertical";
    case Scheme::kHorizontal: return "horizontal";
    case Scheme::kOverarch: return "overarch";
    case Scheme::kMlp: return "mlp";
  }
  return "?";
}

const char* to_string(Interaction i) {
  return i == Interaction::kConcat ? "concat" : "concat_dot";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "none") return Scheme::kNone;
  if (s == "vertical") return Scheme::kVertical;
  if (s == "horizontal") return Scheme::kHorizontal;
  if (s == "overarch") return Scheme::kOverarch;
  if (s == "mlp") return Scheme::kMlp;
  throw ConfigError("unknown scheme: " + s);
}

Interaction interaction_from_string(const std::string& s) {
  if (s == "concat") return Interaction::kConcat;
  if (s == "concat_dot") return Interaction::kConcatPlusDot;
  throw ConfigError("unknown interaction (expected concat or concat_dot): " + s);
}

void DlrmConfig::validate() const {
  std::vector<std::string> problems;
  if (num_dense < 1) problems.push_back("num_dense must be >= 1");
  if (tables.empty()) problems.push_back("tables must be non-empty");
  for (size_t t = 0; t < tables.size(); ++t) {
    if (tables[t].rows < 1)
      problems.push_back("table " + std::to_string(t) + ": rows must be >= 1");
    if (tables[t].dim < 1)
      problems.push_back("table " + std::to_string(t) + ": dim must be >= 1");
  }
  if (bottom_widths.empty()) problems.push_back("bottom_widths must be non-empty");
  for (uint32_t w : bottom_widths) {
    if (w < 1) problems.push_back("bottom width must be >= 1");
  }
  if (overarch_widths.empty()) {
    problems.push_back("overarch_widths must be non-empty");
  } else {
    if (overarch_widths.back() != 1)
      problems.push_back("final overarch width must be 1 (single logit)");
    for (uint32_t w : overarch_widths) {
      if (w < 1) problems.push_back("overarch width must be >= 1");
    }
  }
  if (interaction == Interaction::kConcatPlusDot && !tables.empty() && !bottom_widths.empty()) {
    uint32_t d = bottom_widths.back();
    bool ok = true;
    for (const auto& t : tables) ok = ok && t.dim == d;
    if (!ok)
      problems.push_back(
          "concat_dot interaction requires every table dim to equal the bottom output width");
  }
  if (!problems.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

uint32_t DlrmConfig::interaction_width() const {
  uint32_t w = bottom_widths.back();
  for (const auto& t : tables) w += t.dim;
  if (interaction == Interaction::kConcatPlusDot) {
    uint32_t n_vec = static_cast<uint32_t>(tables.size()) + 1;
    w += n_vec * (n_vec - 1) / 2;
  }
  return w;
}

std::string DlrmConfig::fingerprint() const {
  std::ostringstream os;
  os << "nd=" << num_dense << ";i=" << to_string(interaction);
  for (const auto& t : tables) os << ";t=" << t.rows << "x" << t.dim;
  os << ";b=";
  for (uint32_t w : bottom_widths) os << w << ",";
  os << ";o=";
  for (uint32_t w : overarch_widths) os << w << ",";
  return os.str();
}

DlrmConfig config_from_fingerprint(const std::string& ref) {
  auto fail = [&](const std::string& why) -> void {
    throw DataError("unparseable config fingerprint \"" + ref + "\": " + why);
  };
  auto to_u32 = [&](const std::string& s) -> uint32_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      fail("bad number \"" + s + "\"");
    }
    unsigned long v = std::strtoul(s.c_str(), nullptr, 10);
    if (v > std::numeric_limits<uint32_t>::max()) fail("number out of range \"" + s + "\"");
    return static_cast<uint32_t>(v);
  };
  auto width_list = [&](const std::string& s) -> std::vector<uint32_t> {
    std::vector<uint32_t> out;
    size_t start = 0;
    while (start < s.size()) {
      size_t comma = s.find(',', start);
      if (comma == std::string::npos) fail("width list missing trailing comma");
      out.push_back(to_u32(s.substr(start, comma - start)));
      start = comma + 1;
    }
    return out;
  };

  DlrmConfig cfg;
  size_t pos = 0;
  while (pos <= ref.size()) {
    size_t semi = ref.find(';', pos);
    std::string field =
        semi == std::string::npos ? ref.substr(pos) : ref.substr(pos, semi - pos);
    size_t eq = field.find('=');
    if (eq == std::string::npos) fail("field \"" + field + "\" has no '='");
    std::string key = field.substr(0, eq);
    std::string value = field.substr(eq + 1);
    if (key == "nd") {
      cfg.num_dense = to_u32(value);
    } else if (key == "i") {
      try {
        cfg.interaction = interaction_from_string(value);
      } catch (const ConfigError& e) {
        fail(e.what());
      }
    } else if (key == "t") {
      size_t x = value.find('x');
      if (x == std::string::npos) fail("table \"" + value + "\" is not ROWSxDIM");
      TableShape t;
      t.rows = to_u32(value.substr(0, x));
      t.dim = to_u32(value.substr(x + 1));
      cfg.tables.push_back(t);
    } else if (key == "b") {
      cfg.bottom_widths = width_list(value);
    } else if (key == "o") {
      cfg.overarch_widths = width_list(value);
    } else {
      fail("unknown field \"" + key + "\"");
    }
    if (semi == std::string::npos) break;
    pos = semi + 1;
  }
  // Canonical-form check: catches missing or repeated fields in one shot.
  if (cfg.fingerprint() != ref) fail("does not round-trip");
  return cfg;
}

Model::Model(const DlrmConfig& config) : config_(config) {
  config_.validate();
  embeddings.resize(config_.tables.size());
  embedding_accum.resize(config_.tables.size());
  for (size_t t = 0; t < config_.tables.size(); ++t) {
    size_t n = static_cast<size_t>(config_.tables[t].rows) * config_.tables[t].dim;
    embeddings[t].assign(n, 0.0);
    embedding_accum[t].assign(n, 0.0);
  }
  auto make_stack = [](uint32_t fan_in, const std::vector<uint32_t>& widths,
                       std::vector<LinearLayer>& layers, std::vector<std::vector<double>>& accum) {
    for (uint32_t w : widths) {
      LinearLayer layer;
      layer.fan_in = fan_in;
      layer.fan_out = w;
      layer.weights.assign(static_cast<size_t>(fan_in) * w, 0.0);
      layer.bias.assign(w, 0.0);
      layers.push_back(std::move(layer));
      accum.emplace_back(static_cast<size_t>(fan_in) * w + w, 0.0);
      fan_in = w;
    }
  };
  make_stack(config_.num_dense, config_.bottom_widths, bottom, bottom_accum);
  make_stack(config_.interaction_width(), config_.overarch_widths, overarch, overarch_accum);
}

bool Model::equal_layers(const Model& o) const {
  auto eq = [](const std::vector<LinearLayer>& a, const std::vector<LinearLayer>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
      if (a[i].weights != b[i].weights || a[i].bias != b[i].bias) return false;
    }
    return true;
  };
  return eq(bottom, o.bottom) && eq(overarch, o.overarch);
}

uint64_t Model::stored_parameter_count() const {
  uint64_t n = 0;
  for (const auto& e : embeddings) n += e.size();
  for (const auto& l : bottom) n += l.weights.size() + l.bias.size();
  for (const auto& l : overarch) n += l.weights.size() + l.bias.size();
  return n;
}

double& Model::parameter_at(uint64_t flat_index) {
  for (auto& e : embeddings) {
    if (flat_index < e.size()) return e[flat_index];
    flat_index -= e.size();
  }
  for (auto* stack : {&bottom, &overarch}) {
    for (auto& l : *stack) {
      if (flat_index < l.weights.size()) return l.weights[flat_index];
      flat_index -= l.weights.size();
      if (flat_index < l.bias.size()) return l.bias[flat_index];
      flat_index -= l.bias.size();
    }
  }
  throw std::out_of_range("parameter index out of range");
}

Gradients::Gradients(const DlrmConfig& config) {
  embeddings.resize(config.tables.size());
  for (size_t t = 0; t < config.tables.size(); ++t) {
    embeddings[t].dim = config.tables[t].dim;
  }
  uint32_t fan_in = config.num_dense;
  for (uint32_t w : config.bottom_widths) {
    bottom_w.emplace_back(static_cast<size_t>(fan_in) * w, 0.0);
    bottom_b.emplace_back(w, 0.0);
    fan_in = w;
  }
  fan_in = config.interaction_width();
  for (uint32_t w : config.overarch_widths) {
    overarch_w.emplace_back(static_cast<size_t>(fan_in) * w, 0.0);
    overarch_b.emplace_back(w, 0.0);
    fan_in = w;
  }
}

double* Gradients::SparseRows::slot(uint32_t row) {
  auto [it, inserted] = slot_of_row.try_emplace(row, static_cast<uint32_t>(rows.size()));
  if (inserted) {
    rows.push_back(row);
    data.resize(data.size() + dim, 0.0);
  }
  return data.data() + static_cast<size_t>(it->second) * dim;
}

const double* Gradients::SparseRows::find(uint32_t row) const {
  auto it = slot_of_row.find(row);
  if (it == slot_of_row.end()) return nullptr;
  return data.data() + static_cast<size_t>(it->second) * dim;
}

void Gradients::SparseRows::clear() {
  slot_of_row.clear();
  rows.clear();
  data.clear();
}

void Gradients::zero() {
  for (auto& e : embeddings) e.clear();
  for (auto* vs : {&bottom_w, &bottom_b, &overarch_w, &overarch_b}) {
    for (auto& v : *vs) std::fill(v.begin(), v.end(), 0.0);
  }
}

double Gradients::value_at(const Model& model, uint64_t flat_index) const {
  const auto& cfg = model.config();
  for (size_t t = 0; t < model.embeddings.size(); ++t) {
    if (flat_index < model.embeddings[t].size()) {
      uint32_t dim = cfg.tables[t].dim;
      uint32_t row = static_cast<uint32_t>(flat_index / dim);
      const double* slot = embeddings[t].find(row);
      return slot ? slot[flat_index % dim] : 0.0;
    }
    flat_index -= model.embeddings[t].size();
  }
  auto scan = [&](const std::vector<std::vector<double>>& ws,
                  const std::vector<std::vector<double>>& bs, double& out) {
    for (size_t l = 0; l < ws.size(); ++l) {
      if (flat_index < ws[l].size()) {
        out = ws[l][flat_index];
        return true;
      }
      flat_index -= ws[l].size();
      if (flat_index < bs[l].size()) {
        out = bs[l][flat_index];
        return true;
      }
      flat_index -= bs[l].size();
    }
    return false;
  };
  double out = 0.0;
  if (scan(bottom_w, bottom_b, out)) return out;
  if (scan(overarch_w, overarch_b, out)) return out;
  throw std::out_of_range("gradient index out of range");
}

Model build_model(const DlrmConfig& config, uint64_t seed) {
  config.validate();
  Model model(config);
  SplitMix64 rng(mix_seed(seed, 0x1717ULL));

  for (size_t t = 0; t < config.tables.size(); ++t) {
    double bound = 1.0 / std::sqrt(static_cast<double>(config.tables[t].dim));
    for (auto& v : model.embeddings[t]) v = rng.next_uniform(-bound, bound);
  }
  auto init_stack = [&](std::vector<LinearLayer>& layers) {
    for (auto& layer : layers) {
      double bound = std::sqrt(6.0 / (static_cast<double>(layer.fan_in) + layer.fan_out));
      for (auto& w : layer.weights) w = rng.next_uniform(-bound, bound);
      // biases stay zero
    }
  };
  init_stack(model.bottom);
  init_stack(model.overarch);
  return model;
}

double forward_one(const Model& model, const Sample& sample, Workspace& ws) {
  return forward_cached(model, sample, ws);
}

std::vector<double> forward(const Model& model, std::span<const Sample> batch) {
  Workspace ws;
  std::vector<double> probs(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) probs[i] = forward_cached(model, batch[i], ws);
  return probs;
}

double loss_and_backward(const Model& model, std::span<const Sample> batch,
                         std::span<const uint8_t> labels, Gradients& grads) {
  if (batch.empty() || batch.size() != labels.size()) {
    throw DataError("loss_and_backward: batch and labels must be non-empty and equal length");
  }
  grads.zero();
  const DlrmConfig& cfg = model.config();
  double inv_n = 1.0 / static_cast<double>(batch.size());

  Workspace ws;
  NeumaierSum loss_sum;
  for (size_t i = 0; i < batch.size(); ++i) {
    const Sample& sample = batch[i];
    double p = forward_cached(model, sample, ws);
    double y = static_cast<double>(labels[i]);
    double pc = clamp_probability(p);
    loss_sum.add(-(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)));

    // Fused sigmoid + BCE derivative wrt the logit, for the mean loss.
    double dlogit = (p - y) * inv_n;

    // Overarch backward.
    ws.d_overarch_act.resize(model.overarch.size());
    ws.d_overarch_act.back().assign(1, dlogit);
    for (size_t l = model.overarch.size(); l-- > 0;) {
      const std::vector<double>& input = l == 0 ? ws.interaction : ws.overarch_act[l - 1];
      std::vector<double>& dy = ws.d_overarch_act[l];
      if (l + 1 < model.overarch.size()) relu_mask(ws.overarch_act[l], dy);
      std::vector<double>& dx = l == 0 ? ws.d_interaction : ws.d_overarch_act[l - 1];
      linear_backward(model.overarch[l], input, dy, grads.overarch_w[l], grads.overarch_b[l], dx);
    }

    // Split the interaction gradient back into its inputs.
    uint32_t bottom_out_w = cfg.bottom_widths.back();
    ws.d_bottom_act.resize(model.bottom.size());
    auto& d_bottom_out = ws.d_bottom_act.back();
    d_bottom_out.assign(ws.d_interaction.begin(), ws.d_interaction.begin() + bottom_out_w);
    ws.d_pooled.resize(cfg.tables.size());
    size_t off = bottom_out_w;
    for (size_t t = 0; t < cfg.tables.size(); ++t) {
      uint32_t dim = cfg.tables[t].dim;
      ws.d_pooled[t].assign(ws.d_interaction.begin() + off, ws.d_interaction.begin() + off + dim);
      off += dim;
    }
    if (cfg.interaction == Interaction::kConcatPlusDot) {
      size_t n_vec = cfg.tables.size() + 1;
      auto vec_of = [&](size_t v) -> const std::vector<double>& {
        return v == 0 ? ws.bottom_act.back() : ws.pooled[v - 1];
      };
      auto dvec_of = [&](size_t v) -> std::vector<double>& {
        return v == 0 ? d_bottom_out : ws.d_pooled[v - 1];
      };
      for (size_t a = 0; a < n_vec; ++a) {
        for (size_t b = a + 1; b < n_vec; ++b) {
          double g = ws.d_interaction[off++];
          const auto& va = vec_of(a);
          const auto& vb = vec_of(b);
          auto& da = dvec_of(a);
          auto& db = dvec_of(b);
          for (size_t d = 0; d < va.size(); ++d) {
            da[d] += g * vb[d];
            db[d] += g * va[d];
          }
        }
      }
    }

    // Embedding rows: sum pooling routes the pooled gradient to every
    // occurrence, so duplicate indices accumulate twice.
    for (size_t t = 0; t < cfg.tables.size(); ++t) {
      uint32_t dim = cfg.tables[t].dim;
      for (uint32_t idx : sample.sparse[t]) {
        double* slot = grads.embeddings[t].slot(idx);
        for (uint32_t d = 0; d < dim; ++d) slot[d] += ws.d_pooled[t][d];
      }
    }

    // Bottom backward (every layer is ReLU).
    for (size_t l = model.bottom.size(); l-- > 0;) {
      const std::vector<double>& input = l == 0 ? sample.dense : ws.bottom_act[l - 1];
      std::vector<double>& dy = ws.d_bottom_act[l];
      relu_mask(ws.bottom_act[l], dy);
      std::vector<double>& dx = l == 0 ? ws.d_dense : ws.d_bottom_act[l - 1];
      linear_backward(model.bottom[l], input, dy, grads.bottom_w[l], grads.bottom_b[l], dx);
    }
  }

  double loss = loss_sum.value() * inv_n;
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss in batch");
  }
  return loss;
}

ParamCount count_params(const DlrmConfig& config) {
  config.validate();
  ParamCount pc;
  for (const auto& t : config.tables) {
    pc.embedding += static_cast<uint64_t>(t.rows) * t.dim;
  }
  auto stack = [&](uint32_t fan_in, const std::vector<uint32_t>& widths) {
    for (uint32_t w : widths) {
      pc.nonembedding += static_cast<uint64_t>(fan_in + 1) * w;
      fan_in = w;
    }
  };
  stack(config.num_dense, config.bottom_widths);
  stack(config.interaction_width(), config.overarch_widths);
  pc.total = pc.embedding + pc.nonembedding;
  return pc;
}

FlopCount count_flops(const DlrmConfig& config) {
  config.validate();
  uint64_t fwd = 0;
  auto stack = [&](uint64_t fan_in, const std::vector<uint32_t>& widths) {
    for (uint32_t w : widths) {
      fwd += 2 * fan_in * w;
      fan_in = w;
    }
  };
  stack(config.num_dense, config.bottom_widths);
  stack(config.interaction_width(), config.overarch_widths);
  if (config.interaction == Interaction::kConcatPlusDot) {
    uint64_t n_vec = config.tables.size() + 1;
    uint64_t pairs = n_vec * (n_vec - 1) / 2;
    fwd += pairs * 2 * config.bottom_widths.back();
  }
  return FlopCount{fwd, 3 * fwd};
}

DlrmConfig apply_scaling(const DlrmConfig& base, Scheme scheme, double factor) {
  base.validate();
  if (!std::isfinite(factor) || factor <= 0.0) {
    throw ConfigError(std::string("invalid scaling factor for scheme ") + to_string(scheme) +
                      ": " + format_g9(factor));
  }
  DlrmConfig cfg = base;
  switch (scheme) {
    case Scheme::kNone:
      break;
    case Scheme::kVertical:
      for (auto& t : cfg.tables) t.rows = scale_width(t.rows, factor);
      break;
    case Scheme::kHorizontal: {
      if (factor != std::floor(factor) || factor < 1.0) {
        throw ConfigError("horizontal scaling takes an integer target dim >= 1, got " +
                          format_g9(factor));
      }
      uint32_t dim = static_cast<uint32_t>(factor);
      for (auto& t : cfg.tables) t.dim = dim;
      cfg.bottom_widths.back() = dim;
      break;
    }
    case Scheme::kOverarch:
      for (size_t i = 0; i + 1 < cfg.overarch_widths.size(); ++i) {
        cfg.overarch_widths[i] = scale_width(cfg.overarch_widths[i], factor);
      }
      break;
    case Scheme::kMlp:
      for (auto& w : cfg.bottom_widths) w = scale_width(w, factor);
      for (size_t i = 0; i + 1 < cfg.overarch_widths.size(); ++i) {
        cfg.overarch_widths[i] = scale_width(cfg.overarch_widths[i], factor);
      }
      break;
  }

  bool structurally_same = cfg.num_dense == base.num_dense && cfg.tables == base.tables &&
                           cfg.bottom_widths == base.bottom_widths &&
                           cfg.overarch_widths == base.overarch_widths &&
                           cfg.interaction == base.interaction;
  if (structurally_same) return base;

  cfg.scheme_tag = std::string(to_string(scheme)) + ":" + format_g9(factor);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("scaling ") + to_string(scheme) + " by " + format_g9(factor) +
                      " produced an invalid config: " + e.what());
  }
  return cfg;
}

void adagrad_step(Model& model, const Gradients& grads, const OptimizerConfig& opt) {
  const double lr = opt.learning_rate;
  const double eps = opt.epsilon;

  auto update_dense = [&](std::vector<double>& theta, std::vector<double>& accum,
                          const std::vector<double>& grad, size_t accum_offset) {
    for (size_t k = 0; k < grad.size(); ++k) {
      double g = grad[k];
      if (g == 0.0) continue;
      double& a = accum[accum_offset + k];
      a += g * g;
      theta[k] -= lr * g / (std::sqrt(a) + eps);
    }
  };

  for (size_t l = 0; l < model.bottom.size(); ++l) {
    update_dense(model.bottom[l].weights, model.bottom_accum[l], grads.bottom_w[l], 0);
    update_dense(model.bottom[l].bias, model.bottom_accum[l], grads.bottom_b[l],
                 model.bottom[l].weights.size());
  }
  for (size_t l = 0; l < model.overarch.size(); ++l) {
    update_dense(model.overarch[l].weights, model.overarch_accum[l], grads.overarch_w[l], 0);
    update_dense(model.overarch[l].bias, model.overarch_accum[l], grads.overarch_b[l],
                 model.overarch[l].weights.size());
  }

  for (size_t t = 0; t < grads.embeddings.size(); ++t) {
    const auto& sparse = grads.embeddings[t];
    uint32_t dim = sparse.dim;
    for (size_t s = 0; s < sparse.rows.size(); ++s) {
      uint32_t row = sparse.rows[s];
      const double* g = sparse.data.data() + s * dim;
      double* theta = model.embeddings[t].data() + static_cast<size_t>(row) * dim;
      double* a = model.embedding_accum[t].data() + static_cast<size_t>(row) * dim;
      for (uint32_t d = 0; d < dim; ++d) {
        if (g[d] == 0.0) continue;
        a[d] += g[d] * g[d];
        theta[d] -= lr * g[d] / (std::sqrt(a[d]) + eps);
      }
    }
  }
}

}  // namespace slab
