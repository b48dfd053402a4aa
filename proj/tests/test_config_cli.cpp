// End-to-end tests that drive the slab binary as a subprocess: config
// loading and validation, environment overrides, and the full
// validate -> sweep -> fit -> report pipeline on a miniature experiment.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

// Paths are baked in at compile time; the environment can override both.
std::string cli_path() {
  if (const char* p = std::getenv("SLAB_CLI_PATH")) return p;
#ifdef SLAB_CLI_PATH
  return SLAB_CLI_PATH;
#else
  FAIL("SLAB_CLI_PATH must point at the slab binary");
  return "";
#endif
}

std::string config_dir() {
  if (const char* p = std::getenv("SLAB_CONFIG_DIR")) return p;
#ifdef SLAB_CONFIG_DIR
  return SLAB_CONFIG_DIR;
#else
  FAIL("SLAB_CONFIG_DIR must point at the shipped configs");
  return "";
#endif
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("slab_cli_test_" + std::to_string(getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  REQUIRE(out.good());
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

// Runs the binary with a scrubbed environment so stray SLAB_* variables in
// the test runner's environment cannot leak into the subject process.
// extra_env is a space-separated list of VAR=value assignments.
CliResult run_cli(const std::string& args, const std::string& extra_env = "") {
  static int counter = 0;
  fs::path out = work_dir() / ("out_" + std::to_string(counter));
  fs::path err = work_dir() / ("err_" + std::to_string(counter));
  ++counter;
  std::string cmd = "env -u SLAB_STORE -u SLAB_PARALLELISM " + extra_env +
                    (extra_env.empty() ? "" : " ") + cli_path() + " " + args + " >" +
                    out.string() + " 2>" + err.string();
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  CliResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : 128 + WTERMSIG(rc);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
  size_t pos = 0;
  size_t hits = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
    ++hits;
  }
  REQUIRE(hits > 0);
  return text;
}

// A miniature experiment: two tables, four data sizes, one seed, every
// scheme populated. 11 grid factors x 4 data sizes = 44 runs, all tiny.
std::string micro_config_text(const fs::path& store, const fs::path& report) {
  std::ostringstream s;
  s << R"({
  "schema": {
    "num_dense": 2,
    "tables": [
      {"vocab": 500, "hots": 1, "zipf": 0.8},
      {"vocab": 300, "hots": 2, "zipf": 0.9}
    ]
  },
  "teacher": {"seed": 3, "target_ctr": 0.25, "weight_scale": 1.0},
  "model": {
    "tables": [
      {"rows": 400, "dim": 4},
      {"rows": 250, "dim": 4}
    ],
    "bottom_widths": [8, 4],
    "overarch_widths": [8, 1],
    "interaction": "concat"
  },
  "optimizer": {"learning_rate": 0.05, "epsilon": 1e-8, "batch_size": 64},
  "sweep": {
    "data_sizes": [200, 400, 800, 1600],
    "seeds": [1],
    "parallelism": 1,
    "eval_size": 400,
    "record_wall_seconds": false,
    "schemes": {
      "none": [1.0],
      "vertical": [0.5, 1.0],
      "horizontal": [2, 4],
      "overarch": [0.5, 1.0],
      "mlp": [0.5, 1.0]
    },
    "cross_vsf": [2.0]
  },
  "fit": {"phase_threshold": 0.05, "beta_margin": 0.02, "use_frontier": true, "y_field": "ne_test"},
  "paths": {"store": ")"
    << store.string() << R"(", "report_dir": ")" << report.string() << R"("}
})";
  return s.str();
}

// One pipeline directory shared by the tests that need a populated store;
// built on first use so test order inside this file does not matter.
struct Pipeline {
  fs::path dir;
  fs::path config;
  fs::path store;
  fs::path report;
};

const Pipeline& pipeline() {
  static const Pipeline p = [] {
    Pipeline pl;
    pl.dir = work_dir() / "pipeline";
    fs::create_directories(pl.dir);
    pl.config = pl.dir / "micro.config";
    pl.store = pl.dir / "micro_runs.jsonl";
    pl.report = pl.dir / "micro_report";
    spit(pl.config, micro_config_text(pl.store, pl.report));
    CliResult sweep = run_cli("sweep " + pl.config.string());
    REQUIRE_MESSAGE(sweep.code == 0, sweep.err);
    return pl;
  }();
  return p;
}

const std::vector<std::string> kBundleFiles = {
    "summary.csv",        "summary.json",     "scheme_matrix.csv",  "best_dim.csv",
    "train_test_gap.csv", "tandem_lines.csv", "tandem_frontier.csv"};

}  // namespace

TEST_CASE("validate accepts the shipped configs") {
  for (const char* name : {"default.config", "demo.config"}) {
    CliResult r = run_cli("validate " + config_dir() + "/" + name);
    CAPTURE(name);
    CHECK(r.code == 0);
    CHECK(contains(r.out, "config ok:"));
    CHECK(contains(r.out, name));
    CHECK(contains(r.out, "factors x"));
    CHECK(contains(r.out, "store:"));
    CHECK(r.err.empty());
  }

  // Spot-check the grid arithmetic on the demo config: 1+4+4+4+4 scheme
  // factors plus 1x4 cross-grid factors, over 4 data sizes and 2 seeds.
  CliResult demo = run_cli("validate " + config_dir() + "/demo.config");
  CHECK(contains(demo.out, "grid: 21 factors x 4 data sizes x 2 seeds"));
}

TEST_CASE("validate reports every invalid field and exits nonzero") {
  std::string text = slurp(fs::path(config_dir()) / "demo.config");
  text = replace_all(text, "\"dim\": 8", "\"dim\": 0");
  text = replace_all(text, "\"batch_size\": 256", "\"batch_size\": 0");
  fs::path bad = work_dir() / "bad_fields.config";
  spit(bad, text);

  CliResult r = run_cli("validate " + bad.string());
  CHECK(r.code == 1);
  CHECK(contains(r.err, "error:"));
  CHECK(contains(r.err, "dim must be >= 1"));
  CHECK(contains(r.err, "optimizer.batch_size must be >= 1"));
  CHECK_FALSE(contains(r.out, "config ok"));
}

TEST_CASE("validate warns about unknown keys but still succeeds") {
  std::string text = slurp(fs::path(config_dir()) / "demo.config");
  size_t brace = text.find('{');
  REQUIRE(brace != std::string::npos);
  text.insert(brace + 1, "\n  \"zzz_extra\": 1,");
  fs::path odd = work_dir() / "unknown_key.config";
  spit(odd, text);

  CliResult r = run_cli("validate " + odd.string());
  CHECK(r.code == 0);
  CHECK(contains(r.out, "config ok:"));
  CHECK(contains(r.err, "unknown key \"zzz_extra\""));
  CHECK(contains(r.err, "ignored"));
}

TEST_CASE("validate fails cleanly on missing or malformed files") {
  CliResult missing = run_cli("validate " + (work_dir() / "no_such.config").string());
  CHECK(missing.code == 1);
  CHECK(contains(missing.err, "cannot open config"));

  fs::path mangled = work_dir() / "mangled.config";
  spit(mangled, "{ \"schema\": [unclosed");
  CliResult bad = run_cli("validate " + mangled.string());
  CHECK(bad.code == 1);
  CHECK(contains(bad.err, "error:"));
  CHECK(contains(bad.err, "mangled.config"));
}

TEST_CASE("environment variables override store path and parallelism") {
  std::string demo = config_dir() + "/demo.config";

  CliResult store = run_cli("validate " + demo, "SLAB_STORE=/tmp/override_runs.jsonl");
  CHECK(store.code == 0);
  CHECK(contains(store.out, "store: /tmp/override_runs.jsonl"));
  CHECK_FALSE(contains(store.out, "demo_runs.jsonl"));

  CliResult ok_par = run_cli("validate " + demo, "SLAB_PARALLELISM=3");
  CHECK(ok_par.code == 0);

  for (const char* bad : {"abc", "0", "-2", "1.5"}) {
    CliResult r = run_cli("validate " + demo, std::string("SLAB_PARALLELISM=") + bad);
    CAPTURE(bad);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "SLAB_PARALLELISM must be a positive integer"));
  }
}

TEST_CASE("gen writes a well-formed binary dataset") {
  const Pipeline& pl = pipeline();
  fs::path train_bin = work_dir() / "gen_train.bin";
  fs::path test_bin = work_dir() / "gen_test.bin";

  CliResult train = run_cli("gen " + pl.config.string() + " --out " + train_bin.string() +
                            " --count 50");
  CHECK(train.code == 0);
  CHECK(contains(train.out, "wrote 50 train samples"));

  std::string bytes = slurp(train_bin);
  REQUIRE(bytes.size() > 16);
  CHECK(bytes.compare(0, 8, "SLABDATA") == 0);
  uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 12, 4);
  CHECK(count == 50);

  CliResult test = run_cli("gen " + pl.config.string() + " --out " + test_bin.string() +
                           " --count 50 --stream test");
  CHECK(test.code == 0);
  CHECK(slurp(test_bin) != bytes);

  // Same invocation, same bytes.
  fs::path again = work_dir() / "gen_train_again.bin";
  run_cli("gen " + pl.config.string() + " --out " + again.string() + " --count 50");
  CHECK(slurp(again) == bytes);
}

TEST_CASE("sweep populates the store and reports the run tally") {
  const Pipeline& pl = pipeline();
  REQUIRE(fs::exists(pl.store));

  std::string store_bytes = slurp(pl.store);
  size_t lines = 0;
  for (char c : store_bytes) lines += c == '\n';
  CHECK(lines == 44);

  // Every record is a complete ok run on its own line.
  std::istringstream in(store_bytes);
  std::string line;
  while (std::getline(in, line)) {
    CHECK(contains(line, "\"status\":\"ok\""));
    CHECK(contains(line, "\"run_id\":"));
    CHECK(contains(line, "\"ne_test\":"));
  }
}

TEST_CASE("sweep refuses to clobber an existing store without --resume") {
  const Pipeline& pl = pipeline();
  std::string before = slurp(pl.store);

  CliResult refused = run_cli("sweep " + pl.config.string());
  CHECK(refused.code == 1);
  CHECK(contains(refused.err, "already exists"));
  CHECK(contains(refused.err, "--resume"));
  CHECK(slurp(pl.store) == before);

  CliResult resumed = run_cli("sweep " + pl.config.string() + " --resume");
  CHECK(resumed.code == 0);
  CHECK(contains(resumed.out, "44 runs, 44 ok, 0 failed"));
  CHECK(slurp(pl.store) == before);
}

TEST_CASE("sweep rejects a scheme with an empty factor list") {
  const Pipeline& pl = pipeline();
  std::string text = replace_all(slurp(pl.config), "\"none\": [1.0]", "\"none\": []");
  fs::path cfg = work_dir() / "empty_none.config";
  fs::path store = work_dir() / "empty_none_runs.jsonl";
  text = replace_all(text, pl.store.string(), store.string());
  spit(cfg, text);

  CliResult r = run_cli("sweep " + cfg.string() + " --scheme none");
  CHECK(r.code == 1);
  CHECK(contains(r.err, "empty factor list"));
  CHECK_FALSE(fs::exists(store));
}

TEST_CASE("fit prints the law and writes the fitted curve") {
  const Pipeline& pl = pipeline();

  CliResult raw = run_cli("fit " + pl.store.string() +
                          " --axis data --scheme none --raw");
  CHECK(raw.code == 0);
  CHECK(contains(raw.out, "scheme=none axis=data alpha="));
  CHECK(contains(raw.out, " beta="));
  CHECK(contains(raw.out, " gamma="));
  CHECK(contains(raw.out, " r2="));
  CHECK(contains(raw.out, " phase="));

  fs::path csv = pl.dir / "micro_runs_fit_none_data_ne_test.csv";
  REQUIRE(fs::exists(csv));
  std::string body = slurp(csv);
  CHECK(body.rfind("x,y,fitted_y\n", 0) == 0);
  size_t lines = 0;
  for (char c : body) lines += c == '\n';
  CHECK(lines == 5);  // header + one row per data size

  // Raw fit over a parameter-count axis works on the same store. The
  // horizontal filter picks up both the direct grid and the cross grid, so
  // the axis has four distinct parameter counts.
  CliResult param = run_cli("fit " + pl.store.string() +
                            " --axis param --scheme horizontal --raw");
  CHECK(param.code == 0);
  CHECK(contains(param.out, "scheme=horizontal axis=param"));

  // Frontier fit across the whole store: 44 runs give a dense compute axis.
  CliResult frontier = run_cli("fit " + pl.store.string() + " --axis compute");
  CHECK(frontier.code == 0);
  CHECK(contains(frontier.out, "scheme=all axis=compute"));
}

TEST_CASE("fit rejects bad arguments and unusable stores") {
  const Pipeline& pl = pipeline();

  CliResult axis = run_cli("fit " + pl.store.string() + " --axis bogus");
  CHECK(axis.code == 1);
  CHECK(contains(axis.err, "--axis must be data|param|compute"));

  CliResult y = run_cli("fit " + pl.store.string() + " --axis data --y bogus");
  CHECK(y.code == 1);
  CHECK(contains(y.err, "--y must be ne_test or ne_train"));

  CliResult no_axis = run_cli("fit " + pl.store.string());
  CHECK(no_axis.code == 1);

  CliResult gone = run_cli("fit " + (work_dir() / "no_store.jsonl").string() + " --axis data");
  CHECK(gone.code == 2);
  CHECK(contains(gone.err, "error:"));
}

TEST_CASE("report emits the full bundle and is byte-stable") {
  const Pipeline& pl = pipeline();

  CliResult first = run_cli("report " + pl.config.string());
  CHECK(first.code == 0);
  CHECK(contains(first.out, "report written to " + pl.report.string()));
  for (const auto& name : kBundleFiles) {
    CAPTURE(name);
    CHECK(fs::exists(pl.report / name));
  }
  CHECK(fs::is_directory(pl.report / "curves"));

  fs::path other = work_dir() / "report_again";
  CliResult second = run_cli("report " + pl.config.string() + " --out " + other.string());
  CHECK(second.code == 0);
  for (const auto& name : kBundleFiles) {
    CAPTURE(name);
    CHECK(slurp(pl.report / name) == slurp(other / name));
  }
}

TEST_CASE("report fails with a clear error when the store has no usable runs") {
  const Pipeline& pl = pipeline();
  fs::path empty = work_dir() / "empty_runs.jsonl";
  spit(empty, "");

  CliResult r = run_cli("report " + pl.config.string() + " --store " + empty.string());
  CHECK(r.code == 2);
  CHECK(contains(r.err, "no ok records"));
}

TEST_CASE("the command line itself is validated") {
  CliResult none = run_cli("");
  CHECK(none.code == 1);

  CliResult unknown = run_cli("frobnicate");
  CHECK(unknown.code == 1);

  CliResult sweep_scheme = run_cli("sweep " + pipeline().config.string() + " --scheme sideways");
  CHECK(sweep_scheme.code == 1);
}
