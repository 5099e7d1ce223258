#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "optlab/config.hpp"
#include "optlab/errors.hpp"
#include "optlab/io.hpp"

using namespace optlab;
namespace fs = std::filesystem;

namespace {

// Fresh directory per test so reruns never see stale artifacts.
fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("optlab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig defaults(const std::vector<std::string>& overrides = {}) {
  return load_experiment_config("", overrides, "");
}

}  // namespace

TEST_SUITE("io_config") {

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 1e300, 0.0, -42.0, 3.15e6}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(-0.5) == "-0.5");
}

TEST_CASE("csv files carry a schema line, header, and LF rows") {
  CsvFile csv("optlab.test.v1", {"a", "b"});
  csv.add_row(std::vector<std::string>{"1", "x"});
  csv.add_row(std::vector<double>{0.5, 2.0});
  CHECK(csv.rows() == 2);
  CHECK(csv.str() == "# schema=optlab.test.v1\na,b\n1,x\n0.5,2\n");
  CHECK_THROWS_WITH_AS(csv.add_row({"only one"}),
                       doctest::Contains("expected 2"), ConfigError);
  CHECK_THROWS_AS(CsvFile("s", {}), ConfigError);
}

TEST_CASE("csv round-trip preserves cells and maps empties to NaN") {
  const fs::path dir = scratch_dir("csv_roundtrip");
  CsvFile csv("optlab.test.v1", {"t", "value"});
  csv.add_row(std::vector<std::string>{"0", "1.5"});
  csv.add_row(std::vector<std::string>{"1", ""});
  write_text_file(dir / "t.csv", csv.str());

  const CsvData data = read_csv(dir / "t.csv");
  CHECK(data.schema == "optlab.test.v1");
  CHECK(data.columns == std::vector<std::string>{"t", "value"});
  CHECK(data.rows.size() == 2);
  CHECK(data.column_index("value") == 1);
  CHECK(data.column_index("missing") == -1);
  const auto vals = data.numeric("value");
  CHECK(vals[0] == 1.5);
  CHECK(std::isnan(vals[1]));
  CHECK_THROWS_WITH_AS(data.numeric("missing"),
                       doctest::Contains("no column named 'missing'"),
                       ConfigError);
}

TEST_CASE("csv reader rejects missing schema lines and ragged rows") {
  const fs::path dir = scratch_dir("csv_bad");
  write_text_file(dir / "noschema.csv", "a,b\n1,2\n");
  CHECK_THROWS_WITH_AS(read_csv(dir / "noschema.csv"),
                       doctest::Contains("schema line"), ConfigError);
  write_text_file(dir / "ragged.csv", "# schema=s\na,b\n1,2,3\n");
  CHECK_THROWS_WITH_AS(read_csv(dir / "ragged.csv"),
                       doctest::Contains("has 3 cells, expected 2"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(read_csv(dir / "absent.csv"),
                       doctest::Contains("cannot read"), ConfigError);
}

TEST_CASE("manifest records every emitted file and survives a round-trip") {
  const fs::path dir = scratch_dir("manifest");
  RunManifest m(dir, 0xabcdef12u);
  m.emit("sub/one.csv", "# schema=s\na\n1\n");
  m.emit("two.txt", "hello\n");
  m.emit("two.txt", "replaced\n");  // same path keeps one entry
  m.record_timing("step", 1.25);
  m.record_timing("step", 2.5);  // latest wins
  m.record_failure("step item 3", "why");

  CHECK(m.artifacts().size() == 2);
  CHECK(m.has_artifact("sub/one.csv"));
  CHECK(read_text_file(dir / "two.txt") == "replaced\n");
  CHECK(m.timings().size() == 1);
  CHECK(m.timings()[0].seconds == 2.5);
  CHECK(m.validate().empty());
  m.write();

  const RunManifest back = RunManifest::load(dir);
  CHECK(back.config_hash() == 0xabcdef12u);
  CHECK(back.artifacts().size() == 2);
  CHECK(back.artifacts()[0].path == m.artifacts()[0].path);
  CHECK(back.artifacts()[0].checksum == m.artifacts()[0].checksum);
  CHECK(back.artifacts()[0].bytes == m.artifacts()[0].bytes);
  CHECK(back.timings().size() == 1);
  CHECK(back.failures().size() == 1);
  CHECK(back.failures()[0].error == "why");
  CHECK(back.validate().empty());

  write_text_file(dir / "two.txt", "tampered\n");
  CHECK(back.validate() == std::vector<std::string>{"two.txt"});
  fs::remove(dir / "sub" / "one.csv");
  CHECK(back.validate().size() == 2);
}

TEST_CASE("manifest absorb merges by path and rejects foreign roots") {
  const fs::path dir = scratch_dir("absorb");
  RunManifest a(dir, 1);
  a.emit("x.txt", "old\n");
  RunManifest b(dir, 1);
  b.emit("x.txt", "new\n");
  b.emit("y.txt", "y\n");
  b.record_failure("f", "e");
  a.absorb(std::move(b));
  CHECK(a.artifacts().size() == 2);
  CHECK(a.validate().empty());  // x.txt entry now matches the new bytes
  CHECK(a.failures().size() == 1);

  RunManifest other(scratch_dir("absorb_other"), 1);
  CHECK_THROWS_WITH_AS(a.absorb(std::move(other)),
                       doctest::Contains("different roots"), ConfigError);
}

TEST_CASE("manifest adopt records prior artifacts without rewriting them") {
  const fs::path dir = scratch_dir("adopt");
  RunManifest first(dir, 1);
  first.emit("kept.txt", "body\n");
  RunManifest second(dir, 1);
  second.adopt(first.artifacts()[0]);
  CHECK(second.has_artifact("kept.txt"));
  CHECK(second.validate().empty());
}

TEST_CASE("default config freezes the pendulum task") {
  const ExperimentConfig cfg = defaults();
  CHECK(cfg.task.system == "pendulum");
  CHECK(cfg.task.horizon == 30);
  CHECK(cfg.task.u_max == 10.0);
  CHECK(cfg.task.x0[0] == doctest::Approx(std::numbers::pi));
  CHECK(cfg.task.target[0] == doctest::Approx(std::numbers::pi / 3.0));
  CHECK(cfg.task.angle_dims == std::vector<int>{0});
  CHECK(cfg.task.terminal_weights[1] == 200.0);
  CHECK(cfg.ilqr.gain_tol == 1e-3);
  CHECK(cfg.ilqr.max_iterations == 150);
  CHECK(cfg.sampling.n_trajectories == 2000);
  CHECK(cfg.sindy.basis == "poly_trig:2:angles=0");
  CHECK(cfg.mlp.hidden == std::vector<int>{16, 16});
  CHECK(cfg.studies.seeds.size() == 10);
  CHECK(cfg.out_dir == "runs/lab");
}

TEST_CASE("system=cartpole switches the task block and tolerances") {
  const ExperimentConfig cfg = defaults({"system=cartpole"});
  CHECK(cfg.task.system == "cartpole");
  CHECK(cfg.task.x0.size() == 4);
  CHECK(cfg.task.x0[1] == doctest::Approx(std::numbers::pi));
  CHECK(cfg.task.angle_dims == std::vector<int>{1});
  CHECK(cfg.task.terminal_weights[0] == 0.1);
  CHECK(cfg.ilqr.gain_tol == 0.05);
  CHECK(cfg.sindy.basis == "poly_trig:2:angles=1");
}

TEST_CASE("dotted-path overrides reach nested keys with JSON values") {
  const ExperimentConfig cfg =
      defaults({"task.horizon=25", "mlp.hidden=[8,4]",
                "sampling.noise=gaussian", "studies.bench_seeds=[5]"});
  CHECK(cfg.task.horizon == 25);
  CHECK(cfg.mlp.hidden == std::vector<int>{8, 4});
  CHECK(cfg.sampling.noise == NoiseKind::Gaussian);
  CHECK(cfg.studies.bench_seeds == std::vector<std::uint64_t>{5});
}

TEST_CASE("unknown keys and malformed overrides are rejected") {
  CHECK_THROWS_WITH_AS(defaults({"task.horzion=25"}),
                       doctest::Contains("unknown config key 'task.horzion'"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"no_equals_sign"}),
                       doctest::Contains("key.path=value"), ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"workers=lots"}),
                       doctest::Contains("workers"), ConfigError);
}

TEST_CASE("system parameter overrides are checked against the known list") {
  const ExperimentConfig cfg = defaults({"system_params.gravity=12.0"});
  const auto sys = build_system(cfg.task);
  CHECK(sys->params().gravity == 12.0);
  CHECK_THROWS_WITH_AS(
      defaults({"system_params.winglets=1"}),
      doctest::Contains("unknown system parameter"), ConfigError);
  // The block only exists at the top level; nesting it under task is a typo.
  CHECK_THROWS_WITH_AS(defaults({"task.system_params.gravity=12.0"}),
                       doctest::Contains("unknown config key"), ConfigError);
}

TEST_CASE("the task u_max overrides the plant's own bound") {
  const ExperimentConfig cfg = defaults();
  CHECK(build_system(cfg.task)->u_max() == 10.0);
  const ExperimentConfig keep = defaults({"task.u_max=0"});
  CHECK(build_system(keep.task)->u_max() ==
        default_params("pendulum").u_max);
}

TEST_CASE("build_cost assembles the diagonal weights") {
  const ExperimentConfig cfg = defaults();
  const CostSpec cost = build_cost(cfg.task);
  CHECK(cost.horizon == 30);
  CHECK(cost.W.isZero(0.0));
  CHECK(cost.W_T(0, 0) == 200.0);
  CHECK(cost.W_T(0, 1) == 0.0);
  CHECK(cost.R_u(0, 0) == 1e-3);
  CHECK(cost.angle_dims == std::vector<int>{0});
  cost.validate(2, 1);
}

TEST_CASE("config validation rejects inconsistent documents") {
  CHECK_THROWS_WITH_AS(defaults({"task.horizon=0"}),
                       doctest::Contains("horizon must be >= 1"), ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"task.x0=[1,2,3]"}),
                       doctest::Contains("task.x0"), ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"workers=0"}),
                       doctest::Contains("workers must be >= 1"), ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"studies.seeds=[1]"}),
                       doctest::Contains("at least 2 seeds"), ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"sampling.split_ratio=1.0"}),
                       doctest::Contains("split_ratio"), ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"mlp.lr=0"}),
                       doctest::Contains("mlp.lr"), ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"system=quadrotor"}),
                       doctest::Contains("unknown system 'quadrotor'"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(defaults({"schema=optlab.config.v2"}),
                       doctest::Contains("unsupported config schema"),
                       ConfigError);
}

TEST_CASE("a config file merges over the defaults") {
  const fs::path dir = scratch_dir("config_file");
  write_text_file(dir / "cfg.json",
                  "{\"system\": \"cartpole\", \"task\": {\"horizon\": 40},\n"
                  " \"workers\": 2}\n");
  const ExperimentConfig cfg =
      load_experiment_config((dir / "cfg.json").string(), {}, "elsewhere");
  CHECK(cfg.task.system == "cartpole");
  CHECK(cfg.task.horizon == 40);
  CHECK(cfg.task.u_max == 10.0);  // untouched defaults remain
  CHECK(cfg.workers == 2);
  CHECK(cfg.out_dir == "elsewhere");

  write_text_file(dir / "broken.json", "{\"task\": [1,2]}\n");
  CHECK_THROWS_AS(
      load_experiment_config((dir / "broken.json").string(), {}, ""),
      ConfigError);
  write_text_file(dir / "scalar.json", "\"pendulum\"\n");
  CHECK_THROWS_WITH_AS(
      load_experiment_config((dir / "scalar.json").string(), {}, ""),
      doctest::Contains("not a JSON object"), ConfigError);
  write_text_file(dir / "garbage.json", "pendulum\n");
  CHECK_THROWS_WITH_AS(
      load_experiment_config((dir / "garbage.json").string(), {}, ""),
      doctest::Contains("cannot parse config"), ConfigError);
}

TEST_CASE("the config hash tracks substance, not destination") {
  const ExperimentConfig a = defaults();
  const ExperimentConfig b = defaults();
  CHECK(a.config_hash == b.config_hash);
  CHECK(a.canonical_json == b.canonical_json);

  const ExperimentConfig moved = load_experiment_config("", {}, "other/dir");
  CHECK(moved.config_hash == a.config_hash);
  const ExperimentConfig rescheduled = defaults({"workers=9"});
  CHECK(rescheduled.config_hash == a.config_hash);

  const ExperimentConfig changed = defaults({"task.horizon=29"});
  CHECK(changed.config_hash != a.config_hash);

  const auto doc = nlohmann::json::parse(a.canonical_json);
  CHECK(doc.at("schema") == "optlab.config.v1");
}

TEST_CASE("state names follow the named system with an indexed fallback") {
  CHECK(state_names("pendulum", 2) ==
        std::vector<std::string>{"theta", "omega"});
  CHECK(state_names("cartpole", 4) ==
        std::vector<std::string>{"x", "theta", "xdot", "thetadot"});
  CHECK(state_names("other", 3) ==
        std::vector<std::string>{"x0", "x1", "x2"});
  CHECK(state_names("pendulum", 1) == std::vector<std::string>{"theta"});
}

}  // TEST_SUITE
