#include "slab/synthgen.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
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

// Per-sample generator key. Salting with a large odd constant decorrelates
// neighboring indices before splitmix64 does its own mixing.
SplitMix64 sample_rng(uint64_t stream_seed, uint64_t index) {
  return SplitMix64(mix_seed(stream_seed, 0x5a5b5c00ULL + index));
}

// Draws the feature part of one sample (no label). Draw order is fixed:
// dense values first, then table indices in schema order.
void draw_features(const FeatureSchema& schema, const std::vector<ZipfSampler>& samplers,
                   SplitMix64& rng, Sample& out) {
  out.dense.resize(schema.num_dense);
  for (uint32_t d = 0; d < schema.num_dense; ++d) {
    out.dense[d] = rng.next_normal();
  }
  out.sparse.resize(schema.tables.size());
  for (size_t t = 0; t < schema.tables.size(); ++t) {
    out.sparse[t].resize(schema.tables[t].hots);
    for (uint32_t h = 0; h < schema.tables[t].hots; ++h) {
      out.sparse[t][h] = samplers[t].draw(rng);
    }
  }
}

double pre_bias_logit(const Teacher& teacher, const Sample& s) {
  double z = 0.0;
  for (size_t d = 0; d < s.dense.size(); ++d) {
    z += teacher.dense_weights[d] * s.dense[d];
  }
  for (size_t t = 0; t < s.sparse.size(); ++t) {
    for (uint32_t idx : s.sparse[t]) {
      z += teacher.category_effects[t][idx];
    }
  }
  return z;
}

}  // namespace

void FeatureSchema::validate() const {
  std::vector<std::string> problems;
  if (num_dense < 1) problems.push_back("num_dense must be >= 1");
  if (tables.empty()) problems.push_back("tables must be non-empty");
  for (size_t t = 0; t < tables.size(); ++t) {
    const auto& tab = tables[t];
    if (tab.vocab_size < 1)
      problems.push_back("table " + std::to_string(t) + ": vocab_size must be >= 1");
    if (tab.hots < 1)
      problems.push_back("table " + std::to_string(t) + ": hots must be >= 1");
    if (tab.hots > tab.vocab_size)
      problems.push_back("table " + std::to_string(t) + ": hots exceeds vocab_size");
    if (!(tab.zipf_exponent >= 0.0))
      problems.push_back("table " + std::to_string(t) + ": zipf_exponent must be >= 0");
  }
  if (!problems.empty()) {
    std::string msg = "invalid feature schema:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

size_t FeatureSchema::total_hots() const {
  size_t n = 0;
  for (const auto& t : tables) n += t.hots;
  return n;
}

std::string FeatureSchema::fingerprint() const {
  std::ostringstream os;
  os << "dense=" << num_dense;
  for (const auto& t : tables) {
    os << ";v=" << t.vocab_size << ",h=" << t.hots << ",z=" << format_g9(t.zipf_exponent);
  }
  return os.str();
}

void TeacherSpec::validate() const {
  if (!(target_ctr > 0.0 && target_ctr < 1.0)) {
    throw ConfigError("teacher target_ctr must lie strictly inside (0,1), got " +
                      format_g9(target_ctr));
  }
  if (!(weight_scale >= 0.0) || !std::isfinite(weight_scale)) {
    throw ConfigError("teacher weight_scale must be finite and >= 0");
  }
}

std::string TeacherSpec::fingerprint() const {
  std::ostringstream os;
  os << "seed=" << seed << ";ctr=" << format_g9(target_ctr)
     << ";scale=" << format_g9(weight_scale);
  return os.str();
}

double Teacher::logit(const Sample& s) const {
  return bias + pre_bias_logit(*this, s);
}

ZipfSampler::ZipfSampler(uint32_t vocab_size, double exponent) {
  cumulative_.resize(vocab_size);
  NeumaierSum total;
  for (uint32_t i = 0; i < vocab_size; ++i) {
    total.add(std::pow(static_cast<double>(i) + 1.0, -exponent));
    cumulative_[i] = total.value();
  }
}

uint32_t ZipfSampler::draw(SplitMix64& rng) const {
  double u = rng.next_double() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<uint32_t>(it - cumulative_.begin());
}

double ZipfSampler::head_probability() const {
  return cumulative_.front() / cumulative_.back();
}

SampleStream::SampleStream(const FeatureSchema& schema, const Teacher& teacher, uint64_t seed)
    : schema_(schema), teacher_(&teacher), seed_(seed) {
  schema_.validate();
  samplers_.reserve(schema_.tables.size());
  for (const auto& t : schema_.tables) {
    samplers_.emplace_back(t.vocab_size, t.zipf_exponent);
  }
}

void SampleStream::sample_at(uint64_t index, Sample& out) const {
  SplitMix64 rng = sample_rng(seed_, index);
  draw_features(schema_, samplers_, rng, out);
  double p = sigmoid(teacher_->logit(out));
  out.label = rng.next_double() < p ? 1 : 0;
}

Sample SampleStream::sample_at(uint64_t index) const {
  Sample s;
  sample_at(index, s);
  return s;
}

std::vector<Sample> SampleStream::generate(uint64_t n) const {
  std::vector<Sample> out(n);
  for (uint64_t i = 0; i < n; ++i) sample_at(i, out[i]);
  return out;
}

Teacher build_teacher(const FeatureSchema& schema, const TeacherSpec& spec) {
  schema.validate();
  spec.validate();

  Teacher teacher;
  SplitMix64 rng(mix_seed(spec.seed, 0x7ea17eaULL));

  // Dense and sparse sides each contribute about weight_scale^2 of logit
  // variance, so a single knob controls overall label determinism.
  double dense_sd = spec.weight_scale / std::sqrt(static_cast<double>(schema.num_dense));
  teacher.dense_weights.resize(schema.num_dense);
  for (auto& w : teacher.dense_weights) w = dense_sd * rng.next_normal();

  double effect_sd = spec.weight_scale / std::sqrt(static_cast<double>(schema.total_hots()));
  teacher.category_effects.resize(schema.tables.size());
  for (size_t t = 0; t < schema.tables.size(); ++t) {
    teacher.category_effects[t].resize(schema.tables[t].vocab_size);
    for (auto& e : teacher.category_effects[t]) e = effect_sd * rng.next_normal();
  }

  // Calibrate the bias so the marginal click probability matches target_ctr.
  // The Monte-Carlo estimate uses a fixed derived seed, so the whole teacher
  // stays a pure function of (schema, spec).
  constexpr uint64_t kCalibrationSamples = 100000;
  uint64_t calib_seed = mix_seed(spec.seed, 0xca11bULL);
  std::vector<ZipfSampler> samplers;
  for (const auto& t : schema.tables) samplers.emplace_back(t.vocab_size, t.zipf_exponent);

  std::vector<double> logits(kCalibrationSamples);
  Sample scratch;
  for (uint64_t i = 0; i < kCalibrationSamples; ++i) {
    SplitMix64 srng = sample_rng(calib_seed, i);
    draw_features(schema, samplers, srng, scratch);
    logits[i] = pre_bias_logit(teacher, scratch);
  }

  auto mean_prob = [&](double bias) {
    NeumaierSum s;
    for (double z : logits) s.add(sigmoid(z + bias));
    return s.value() / static_cast<double>(kCalibrationSamples);
  };

  double lo = -40.0, hi = 40.0;
  double bias = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    bias = 0.5 * (lo + hi);
    double p = mean_prob(bias);
    if (std::abs(p - spec.target_ctr) <= 5e-4 || hi - lo < 1e-12) break;
    if (p < spec.target_ctr) {
      lo = bias;
    } else {
      hi = bias;
    }
  }
  teacher.bias = bias;
  return teacher;
}

std::vector<Sample> sample_stream(const FeatureSchema& schema, const Teacher& teacher,
                                  uint64_t seed, uint64_t n) {
  return SampleStream(schema, teacher, seed).generate(n);
}

double background_ctr(std::span<const Sample> samples) {
  if (samples.empty()) throw DataError("background_ctr: empty sample sequence");
  NeumaierSum s;
  for (const auto& x : samples) s.add(static_cast<double>(x.label));
  return s.value() / static_cast<double>(samples.size());
}

void write_dataset(const std::string& path, const FeatureSchema& schema,
                   std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open dataset file for writing: " + path);

  out.write(kDatasetMagic, 8);
  uint32_t version = kDatasetVersion;
  uint32_t count = static_cast<uint32_t>(samples.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);

  // Records are fixed-size on disk; a shape mismatch must fail here, not at
  // read time.
  for (const auto& s : samples) {
    if (s.dense.size() != schema.num_dense || s.sparse.size() != schema.tables.size()) {
      throw DataError("sample shape does not match schema in dataset export");
    }
    for (size_t t = 0; t < s.sparse.size(); ++t) {
      if (s.sparse[t].size() != schema.tables[t].hots) {
        throw DataError("sample shape does not match schema in dataset export");
      }
    }
  }
  for (const auto& s : samples) {
    out.write(reinterpret_cast<const char*>(s.dense.data()),
              static_cast<std::streamsize>(s.dense.size() * sizeof(double)));
    for (const auto& idxs : s.sparse) {
      out.write(reinterpret_cast<const char*>(idxs.data()),
                static_cast<std::streamsize>(idxs.size() * sizeof(uint32_t)));
    }
    char label = static_cast<char>(s.label);
    out.write(&label, 1);
  }
  if (!out) throw DataError("short write while exporting dataset: " + path);
}

void write_dataset(const std::string& path, const SampleStream& stream, uint64_t count) {
  if (count > UINT32_MAX) {
    throw ConfigError("dataset export capped at 2^32-1 records, asked for " +
                      std::to_string(count));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open dataset file for writing: " + path);

  out.write(kDatasetMagic, 8);
  uint32_t version = kDatasetVersion;
  uint32_t n = static_cast<uint32_t>(count);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);

  Sample s;
  for (uint64_t i = 0; i < count; ++i) {
    stream.sample_at(i, s);
    out.write(reinterpret_cast<const char*>(s.dense.data()),
              static_cast<std::streamsize>(s.dense.size() * sizeof(double)));
    for (const auto& idxs : s.sparse) {
      out.write(reinterpret_cast<const char*>(idxs.data()),
                static_cast<std::streamsize>(idxs.size() * sizeof(uint32_t)));
    }
    char label = static_cast<char>(s.label);
    out.write(&label, 1);
  }
  if (!out) throw DataError("short write while exporting dataset: " + path);
}

std::vector<Sample> read_dataset(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);

  char magic[8];
  uint32_t version = 0, count = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || std::memcmp(magic, kDatasetMagic, 8) != 0) {
    throw DataError("not a slab dataset file: " + path);
  }
  if (version != kDatasetVersion) {
    throw DataError("unsupported dataset version " + std::to_string(version));
  }

  std::vector<Sample> samples(count);
  for (auto& s : samples) {
    s.dense.resize(schema.num_dense);
    in.read(reinterpret_cast<char*>(s.dense.data()),
            static_cast<std::streamsize>(s.dense.size() * sizeof(double)));
    s.sparse.resize(schema.tables.size());
    for (size_t t = 0; t < schema.tables.size(); ++t) {
      s.sparse[t].resize(schema.tables[t].hots);
      in.read(reinterpret_cast<char*>(s.sparse[t].data()),
              static_cast<std::streamsize>(s.sparse[t].size() * sizeof(uint32_t)));
    }
    char label = 0;
    in.read(&label, 1);
    s.label = static_cast<uint8_t>(label);
  }
  if (!in) throw DataError("truncated dataset file: " + path);
  return samples;
}

}  // namespace slab
