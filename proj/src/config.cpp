#include "slab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace slab {

namespace {

using nlohmann::json;

// Flags keys we don't know about; typos in a config should not pass silently
// even though they are not fatal.
void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& known, std::vector<std::string>* warnings) {
  if (!warnings || !obj.is_object()) return;
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      warnings->push_back("unknown key \"" + where + key + "\" ignored");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

}  // namespace

ExperimentConfig load_config(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json root;
  try {
    root = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(path + ": top level must be an object");
  check_keys(root, "",
             {"schema", "teacher", "model", "optimizer", "sweep", "fit", "paths"}, warnings);

  ExperimentConfig cfg;
  try {
    if (root.contains("schema")) {
      const json& s = root.at("schema");
      check_keys(s, "schema.", {"num_dense", "tables"}, warnings);
      read(s, "num_dense", cfg.schema.num_dense);
      if (s.contains("tables")) {
        cfg.schema.tables.clear();
        for (const json& t : s.at("tables")) {
          check_keys(t, "schema.tables[].", {"vocab", "hots", "zipf"}, warnings);
          SparseTableSpec spec;
          read(t, "vocab", spec.vocab_size);
          read(t, "hots", spec.hots);
          read(t, "zipf", spec.zipf_exponent);
          cfg.schema.tables.push_back(spec);
        }
      }
    }
    if (root.contains("teacher")) {
      const json& t = root.at("teacher");
      check_keys(t, "teacher.", {"seed", "target_ctr", "weight_scale"}, warnings);
      read(t, "seed", cfg.teacher.seed);
      read(t, "target_ctr", cfg.teacher.target_ctr);
      read(t, "weight_scale", cfg.teacher.weight_scale);
    }
    if (root.contains("model")) {
      const json& m = root.at("model");
      check_keys(m, "model.", {"tables", "bottom_widths", "overarch_widths", "interaction"},
                 warnings);
      if (m.contains("tables")) {
        cfg.model.tables.clear();
        for (const json& t : m.at("tables")) {
          check_keys(t, "model.tables[].", {"rows", "dim"}, warnings);
          TableShape shape;
          read(t, "rows", shape.rows);
          read(t, "dim", shape.dim);
          cfg.model.tables.push_back(shape);
        }
      }
      read(m, "bottom_widths", cfg.model.bottom_widths);
      read(m, "overarch_widths", cfg.model.overarch_widths);
      if (m.contains("interaction")) {
        cfg.model.interaction = interaction_from_string(m.at("interaction").get<std::string>());
      }
    }
    cfg.model.num_dense = cfg.schema.num_dense;
    if (root.contains("optimizer")) {
      const json& o = root.at("optimizer");
      check_keys(o, "optimizer.", {"learning_rate", "epsilon", "batch_size"}, warnings);
      read(o, "learning_rate", cfg.optimizer.learning_rate);
      read(o, "epsilon", cfg.optimizer.epsilon);
      read(o, "batch_size", cfg.optimizer.batch_size);
    }
    if (root.contains("sweep")) {
      const json& s = root.at("sweep");
      check_keys(s, "sweep.",
                 {"data_sizes", "seeds", "parallelism", "eval_size", "record_wall_seconds",
                  "schemes", "cross_vsf"},
                 warnings);
      read(s, "data_sizes", cfg.data_sizes);
      read(s, "seeds", cfg.seeds);
      read(s, "parallelism", cfg.parallelism);
      read(s, "eval_size", cfg.eval_size);
      read(s, "record_wall_seconds", cfg.record_wall_seconds);
      read(s, "cross_vsf", cfg.grids.cross_vsf);
      if (s.contains("schemes")) {
        const json& g = s.at("schemes");
        check_keys(g, "sweep.schemes.", {"none", "vertical", "horizontal", "overarch", "mlp"},
                   warnings);
        read(g, "none", cfg.grids.none);
        read(g, "vertical", cfg.grids.vertical);
        read(g, "horizontal", cfg.grids.horizontal);
        read(g, "overarch", cfg.grids.overarch);
        read(g, "mlp", cfg.grids.mlp);
      }
    }
    if (root.contains("fit")) {
      const json& f = root.at("fit");
      check_keys(f, "fit.", {"phase_threshold", "beta_margin", "use_frontier", "y_field"},
                 warnings);
      read(f, "phase_threshold", cfg.phase_threshold);
      read(f, "beta_margin", cfg.beta_margin);
      read(f, "use_frontier", cfg.fit_frontier);
      read(f, "y_field", cfg.y_field);
    }
    if (root.contains("paths")) {
      const json& p = root.at("paths");
      check_keys(p, "paths.", {"store", "report_dir"}, warnings);
      read(p, "store", cfg.store_path);
      read(p, "report_dir", cfg.report_dir);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }

  if (const char* store = std::getenv("SLAB_STORE")) {
    cfg.store_path = store;
  }
  if (const char* par = std::getenv("SLAB_PARALLELISM")) {
    // strtoul alone would accept "-2" by wrapping it to a huge positive.
    std::string s(par);
    bool digits_only = !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
    unsigned long v = digits_only ? std::strtoul(par, nullptr, 10) : 0;
    if (!digits_only || v == 0 || v > std::numeric_limits<uint32_t>::max()) {
      throw ConfigError(std::string("SLAB_PARALLELISM must be a positive integer, got \"") + par +
                        "\"");
    }
    cfg.parallelism = static_cast<uint32_t>(v);
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  auto collect = [&](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.push_back(std::string(section) + ": " + e.what());
    }
  };
  collect("schema", [&] { schema.validate(); });
  collect("teacher", [&] { teacher.validate(); });
  collect("model", [&] { model.validate(); });

  if (model.num_dense != schema.num_dense) {
    problems.push_back("model num_dense must match schema (model input is the dense vector)");
  }
  if (model.tables.size() != schema.tables.size()) {
    problems.push_back("model has " + std::to_string(model.tables.size()) +
                       " tables but schema has " + std::to_string(schema.tables.size()));
  }
  if (data_sizes.empty()) problems.push_back("sweep.data_sizes must be non-empty");
  if (seeds.empty()) problems.push_back("sweep.seeds must be non-empty");
  if (parallelism == 0) problems.push_back("sweep.parallelism must be >= 1");
  if (eval_size == 0) problems.push_back("sweep.eval_size must be >= 1");
  if (optimizer.batch_size == 0) problems.push_back("optimizer.batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) problems.push_back("optimizer.learning_rate must be > 0");
  if (!(optimizer.epsilon >= 0.0)) problems.push_back("optimizer.epsilon must be >= 0");
  if (!(phase_threshold > 0.0)) problems.push_back("fit.phase_threshold must be > 0");
  if (!(beta_margin >= 0.0)) problems.push_back("fit.beta_margin must be >= 0");
  if (y_field != "ne_test" && y_field != "ne_train") {
    problems.push_back("fit.y_field must be ne_test or ne_train");
  }
  if (store_path.empty()) problems.push_back("paths.store must be non-empty");
  if (report_dir.empty()) problems.push_back("paths.report_dir must be non-empty");

  auto check_factors = [&](const char* name, Scheme scheme, const std::vector<double>& factors) {
    for (double f : factors) {
      try {
        apply_scaling(model, scheme, f);
      } catch (const ConfigError& e) {
        problems.push_back(std::string("sweep.schemes.") + name + ": " + e.what());
      }
    }
  };
  if (model.tables.size() == schema.tables.size() && problems.empty()) {
    check_factors("none", Scheme::kNone, grids.none);
    check_factors("vertical", Scheme::kVertical, grids.vertical);
    check_factors("horizontal", Scheme::kHorizontal, grids.horizontal);
    check_factors("overarch", Scheme::kOverarch, grids.overarch);
    check_factors("mlp", Scheme::kMlp, grids.mlp);
    for (double vsf : grids.cross_vsf) {
      try {
        DlrmConfig scaled = apply_scaling(model, Scheme::kVertical, vsf);
        for (double dim : grids.horizontal) apply_scaling(scaled, Scheme::kHorizontal, dim);
      } catch (const ConfigError& e) {
        problems.push_back("sweep.cross_vsf: " + std::string(e.what()));
      }
    }
  }

  if (!problems.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

}  // namespace slab
