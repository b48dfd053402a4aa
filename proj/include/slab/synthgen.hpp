#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slab/common.hpp"

namespace slab {

// One sparse categorical feature: a category space of vocab_size ids, hots of
// which are active per sample, with popularity skew zipf_exponent (0 = uniform).
struct SparseTableSpec {
  uint32_t vocab_size = 1;
  uint32_t hots = 1;
  double zipf_exponent = 0.0;
};

struct FeatureSchema {
  uint32_t num_dense = 1;
  std::vector<SparseTableSpec> tables;

  // Throws ConfigError listing every violated constraint.
  void validate() const;
  size_t total_hots() const;
  std::string fingerprint() const;
};

// Hidden generative model behind the labels. Labels must carry genuine dense
// and per-category signal so learned NE improves with data volume.
struct TeacherSpec {
  uint64_t seed = 1;
  double target_ctr = 0.2;
  double weight_scale = 1.0;

  void validate() const;
  std::string fingerprint() const;
};

struct Sample {
  std::vector<double> dense;
  std::vector<std::vector<uint32_t>> sparse;  // [table][hot]
  uint8_t label = 0;

  bool operator==(const Sample&) const = default;
};

// Logistic teacher: logit = bias + w·dense + sum of per-category effects over
// the active indices. Deterministic in (schema, spec).
struct Teacher {
  std::vector<double> dense_weights;
  std::vector<std::vector<double>> category_effects;  // [table][category]
  double bias = 0.0;

  double logit(const Sample& s) const;
};

// Inverse-CDF Zipf sampler over [0, vocab): P(i) proportional to (i+1)^-s.
class ZipfSampler {
 public:
  ZipfSampler(uint32_t vocab_size, double exponent);
  uint32_t draw(SplitMix64& rng) const;
  // P(category 0), the most popular id. Analytic head probability.
  double head_probability() const;

 private:
  std::vector<double> cumulative_;
};

// Deterministic, random-access sample stream: sample k is a pure function of
// (schema, teacher, seed, k), so prefixes of one stream form nested subsets.
class SampleStream {
 public:
  SampleStream(const FeatureSchema& schema, const Teacher& teacher, uint64_t seed);

  void sample_at(uint64_t index, Sample& out) const;
  Sample sample_at(uint64_t index) const;
  std::vector<Sample> generate(uint64_t n) const;

  const FeatureSchema& schema() const { return schema_; }

 private:
  FeatureSchema schema_;
  const Teacher* teacher_;
  uint64_t seed_;
  std::vector<ZipfSampler> samplers_;
};

// Calibrates the teacher bias by bisection against a Monte-Carlo estimate of
// the marginal click probability (100k samples, tolerance 0.005 absolute).
Teacher build_teacher(const FeatureSchema& schema, const TeacherSpec& spec);

// Convenience wrapper for the stream: exactly n samples, prefix-stable.
std::vector<Sample> sample_stream(const FeatureSchema& schema, const Teacher& teacher,
                                  uint64_t seed, uint64_t n);

// Mean label of a non-empty sample set.
double background_ctr(std::span<const Sample> samples);

// Binary dataset export. Little-endian records after a 16-byte header:
// magic "SLABDATA", u32 version, u32 record count. Each record is num_dense
// f64 values, then hots u32 indices per table, then one label byte.
void write_dataset(const std::string& path, const FeatureSchema& schema,
                   std::span<const Sample> samples);
// Streaming variant for large exports: writes stream samples [0, count)
// without materializing them.
void write_dataset(const std::string& path, const SampleStream& stream, uint64_t count);
std::vector<Sample> read_dataset(const std::string& path, const FeatureSchema& schema);

inline constexpr uint32_t kDatasetVersion = 1;
inline constexpr char kDatasetMagic[9] = "SLABDATA";

// Derived sub-stream seeds. Train and test streams must never collide.
inline uint64_t train_stream_seed(uint64_t master) { return mix_seed(master, 0x7261696eULL); }
inline uint64_t test_stream_seed(uint64_t master) { return mix_seed(master, 0x74657374ULL); }

}  // namespace slab
