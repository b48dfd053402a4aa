#include "slab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "slab/trainer.hpp"

namespace slab {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ordered_json to_json(const RunRecord& r) {
  ordered_json j;
  j["run_id"] = r.spec.run_id;
  j["scheme"] = to_string(r.spec.scheme);
  j["factor"] = r.spec.factor;
  j["data_size"] = r.spec.data_size;
  j["base_config"] = r.spec.base_config;
  j["master_seed"] = r.spec.master_seed;
  j["P_total"] = r.p_total;
  j["P_embedding"] = r.p_embedding;
  j["P_nonembedding"] = r.p_nonembedding;
  j["C"] = r.c;
  if (std::isfinite(r.ne_train)) j["ne_train"] = r.ne_train; else j["ne_train"] = nullptr;
  if (std::isfinite(r.ne_test)) j["ne_test"] = r.ne_test; else j["ne_test"] = nullptr;
  j["wall_seconds"] = r.wall_seconds;
  j["status"] = r.status;
  return j;
}

RunRecord from_json(const ordered_json& j) {
  RunRecord r;
  r.spec.run_id = j.at("run_id").get<std::string>();
  r.spec.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  r.spec.factor = j.at("factor").get<double>();
  r.spec.data_size = j.at("data_size").get<uint64_t>();
  r.spec.base_config = j.at("base_config").get<std::string>();
  r.spec.master_seed = j.at("master_seed").get<uint64_t>();
  r.p_total = j.at("P_total").get<uint64_t>();
  r.p_embedding = j.at("P_embedding").get<uint64_t>();
  r.p_nonembedding = j.at("P_nonembedding").get<uint64_t>();
  r.c = j.at("C").get<uint64_t>();
  r.ne_train = j.at("ne_train").is_null() ? kNaN : j.at("ne_train").get<double>();
  r.ne_test = j.at("ne_test").is_null() ? kNaN : j.at("ne_test").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.status = j.at("status").get<std::string>();
  if (r.status != "ok" && r.status != "failed") {
    throw DataError("unknown record status: " + r.status);
  }
  if (r.status == "ok" && (!(r.ne_train > 0.0) || !(r.ne_test > 0.0))) {
    throw DataError("ok record must carry finite positive NE values (run " + r.spec.run_id + ")");
  }
  return r;
}

RunRecord run_one(const SweepContext& ctx, const Teacher& teacher, const RunSpec& spec) {
  RunRecord rec;
  rec.spec = spec;
  // The spec's own base reference is authoritative: cross-grid specs are
  // built from a base that is not ctx.base (e.g. vertically scaled first).
  DlrmConfig config =
      apply_scaling(config_from_fingerprint(spec.base_config), spec.scheme, spec.factor);
  ParamCount params = count_params(config);
  rec.p_total = params.total;
  rec.p_embedding = params.embedding;
  rec.p_nonembedding = params.nonembedding;
  rec.c = count_flops(config).train_per_example * spec.data_size;

  auto start = std::chrono::steady_clock::now();
  try {
    TrainOutcome out = train_one_epoch(config, ctx.schema, teacher, spec.master_seed,
                                       spec.data_size, ctx.opt, ctx.eval_size);
    rec.ne_train = out.train_ne;
    rec.ne_test = out.test_ne;
    rec.status = "ok";
  } catch (const NumericError& e) {
    std::cerr << "run " << spec.run_id << " failed: " << e.what() << "\n";
    rec.ne_train = kNaN;
    rec.ne_test = kNaN;
    rec.status = "failed";
  }
  if (ctx.record_wall_seconds) {
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    rec.wall_seconds = dt.count();
  }
  return rec;
}

}  // namespace

std::string run_id_of(const RunSpec& spec) {
  std::string canonical = std::string("scheme=") + to_string(spec.scheme) +
                          ";factor=" + format_g9(spec.factor) +
                          ";D=" + std::to_string(spec.data_size) + ";base=" + spec.base_config +
                          ";seed=" + std::to_string(spec.master_seed);
  return to_hex16(fnv1a64(canonical));
}

std::vector<RunSpec> build_grid(const DlrmConfig& base, Scheme scheme,
                                std::span<const double> factors,
                                std::span<const uint64_t> data_sizes,
                                std::span<const uint64_t> seeds) {
  if (factors.empty() || data_sizes.empty() || seeds.empty()) {
    throw ConfigError("build_grid needs non-empty factors, data_sizes and seeds");
  }
  std::string base_ref = base.fingerprint();

  std::vector<double> unique_factors;
  for (double f : factors) {
    if (std::find(unique_factors.begin(), unique_factors.end(), f) != unique_factors.end()) {
      std::cerr << "warning: duplicate " << to_string(scheme) << " factor " << format_g9(f)
                << " dropped\n";
      continue;
    }
    apply_scaling(base, scheme, f);  // throws naming an invalid factor
    unique_factors.push_back(f);
  }

  std::vector<RunSpec> specs;
  specs.reserve(unique_factors.size() * data_sizes.size() * seeds.size());
  for (double f : unique_factors) {
    for (uint64_t d : data_sizes) {
      for (uint64_t s : seeds) {
        RunSpec spec;
        spec.scheme = scheme;
        spec.factor = f;
        spec.data_size = d;
        spec.base_config = base_ref;
        spec.master_seed = s;
        spec.run_id = run_id_of(spec);
        specs.push_back(std::move(spec));
      }
    }
  }
  return specs;
}

uint64_t repair_store_tail(const std::string& store_path) {
  namespace fs = std::filesystem;
  if (!fs::exists(store_path)) return 0;
  uint64_t size = fs::file_size(store_path);
  if (size == 0) return 0;

  std::ifstream in(store_path, std::ios::binary);
  if (!in) throw DataError("cannot open store: " + store_path);
  in.seekg(-1, std::ios::end);
  char last = 0;
  in.get(last);
  if (last == '\n') return 0;

  // Torn trailing line: keep everything up to and including the last newline.
  std::string content(size, '\0');
  in.seekg(0);
  in.read(content.data(), static_cast<std::streamsize>(size));
  size_t keep = content.rfind('\n');
  uint64_t new_size = keep == std::string::npos ? 0 : keep + 1;
  in.close();
  fs::resize_file(store_path, new_size);
  return size - new_size;
}

std::vector<RunRecord> load_records(const std::string& store_path, const RecordFilter& filter) {
  std::ifstream in(store_path, std::ios::binary);
  if (!in) throw DataError("cannot open store: " + store_path);

  std::vector<RunRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    RunRecord rec;
    try {
      rec = from_json(ordered_json::parse(line));
    } catch (const ordered_json::exception& e) {
      throw DataError(store_path + ":" + std::to_string(lineno) +
                      ": malformed record line: " + e.what());
    } catch (const DataError& e) {
      throw DataError(store_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(rec.spec.run_id).second) {
      throw DataError(store_path + ":" + std::to_string(lineno) + ": duplicate run_id " +
                      rec.spec.run_id);
    }
    if (filter.scheme && rec.spec.scheme != *filter.scheme) continue;
    if (filter.seed && rec.spec.master_seed != *filter.seed) continue;
    if (filter.status && rec.status != *filter.status) continue;
    if (filter.base_config && rec.spec.base_config != *filter.base_config) continue;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<RunRecord> execute(const SweepContext& ctx, std::span<const RunSpec> specs,
                               uint32_t parallelism, const std::string& store_path,
                               const std::function<void(size_t, size_t)>& progress) {
  if (parallelism == 0) throw ConfigError("parallelism must be >= 1");
  ctx.base.validate();
  ctx.schema.validate();
  ctx.teacher.validate();

  repair_store_tail(store_path);
  std::unordered_map<std::string, RunRecord> stored;
  if (std::filesystem::exists(store_path)) {
    for (RunRecord& r : load_records(store_path)) {
      stored.emplace(r.spec.run_id, std::move(r));
    }
  }

  // Grid sections may legitimately overlap (the cross grid re-visits the
  // base model); identical duplicate specs collapse to one run. A duplicate
  // id over different fields is a hash collision and fatal, as is a stored
  // record disagreeing with the spec hashing to its id.
  std::vector<const RunSpec*> unique;
  {
    std::unordered_map<std::string, const RunSpec*> by_id;
    for (const RunSpec& spec : specs) {
      auto [it, inserted] = by_id.emplace(spec.run_id, &spec);
      if (inserted) {
        unique.push_back(&spec);
      } else if (!(*it->second == spec)) {
        throw DataError("run_id collision between specs for " + spec.run_id);
      }
    }
  }
  std::vector<const RunSpec*> pending;
  for (const RunSpec* spec : unique) {
    auto it = stored.find(spec->run_id);
    if (it == stored.end()) {
      pending.push_back(spec);
    } else if (!(it->second.spec == *spec)) {
      throw DataError("run_id collision in store for " + spec->run_id);
    }
  }

  size_t total = unique.size();
  size_t done = total - pending.size();
  if (progress) progress(done, total);

  if (!pending.empty()) {
    Teacher teacher = build_teacher(ctx.schema, ctx.teacher);
    std::ofstream out(store_path, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to store: " + store_path);

    std::mutex mu;
    std::condition_variable cv;
    std::map<size_t, RunRecord> finished;  // pending index -> record
    std::atomic<size_t> next_claim{0};
    std::exception_ptr failure;

    auto worker = [&] {
      for (;;) {
        {
          std::lock_guard lock(mu);
          if (failure) return;
        }
        size_t i = next_claim.fetch_add(1);
        if (i >= pending.size()) return;
        try {
          RunRecord rec = run_one(ctx, teacher, *pending[i]);
          std::lock_guard lock(mu);
          finished.emplace(i, std::move(rec));
          cv.notify_all();
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          cv.notify_all();
          return;
        }
      }
    };

    uint32_t n_workers = static_cast<uint32_t>(
        std::min<size_t>(parallelism, pending.size()));
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (uint32_t w = 0; w < n_workers; ++w) workers.emplace_back(worker);

    // Appends happen strictly in spec order, so the store bytes never depend
    // on scheduling, and a kill mid-sweep loses only unwritten runs.
    size_t next_write = 0;
    {
      std::unique_lock lock(mu);
      while (next_write < pending.size()) {
        cv.wait(lock, [&] { return failure || finished.count(next_write) > 0; });
        if (failure && finished.count(next_write) == 0) break;
        RunRecord rec = std::move(finished.at(next_write));
        finished.erase(next_write);
        lock.unlock();
        out << to_json(rec).dump() << '\n' << std::flush;
        if (!out) {
          lock.lock();
          failure = std::make_exception_ptr(DataError("store write failed: " + store_path));
          break;
        }
        stored.emplace(rec.spec.run_id, std::move(rec));
        ++next_write;
        if (progress) progress(done + next_write, total);
        lock.lock();
      }
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<RunRecord> result;
  result.reserve(unique.size());
  for (const RunSpec* spec : unique) result.push_back(stored.at(spec->run_id));
  return result;
}

}  // namespace slab
