#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "optlab/basis.hpp"
#include "optlab/config.hpp"
#include "optlab/errors.hpp"
#include "optlab/experiments.hpp"
#include "optlab/io.hpp"

using namespace optlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("optlab_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Desk-scale defaults shrunk to seconds for the test suite.
ExperimentConfig small_cfg(const fs::path& out,
                           std::vector<std::string> extra = {}) {
  std::vector<std::string> overrides = {
      "workers=2",
      "sampling.n_trajectories=60",
      "mlp.hidden=[6]",
      "mlp.epochs=6",
      "mlp.batch_size=0",
      "studies.seeds=[1,2,3]",
      "studies.bench_seeds=[1]",
      "studies.sindy_variance_levels=[0.1]",
      "studies.mlp_variance_levels=[0.05]",
      "studies.mlp_variance_trajectories=20",
      "studies.mlp_conditioning_levels=[0.05]",
      "studies.mlp_probe_epochs=[0,2]",
      "studies.conditioning_orders=[1,2,3,4,5]",
      "studies.conditioning_samples=50000",
      "control_bench.train_trajectories=40",
      "control_bench.init_seeds=[1,2]",
  };
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return load_experiment_config("", overrides, out.string());
}

int find_row(const CsvData& data, const std::string& col,
             const std::string& value) {
  const int c = data.column_index(col);
  REQUIRE(c >= 0);
  for (std::size_t i = 0; i < data.rows.size(); ++i)
    if (data.rows[i][c] == value) return static_cast<int>(i);
  return -1;
}

double cell(const CsvData& data, int row, const std::string& col) {
  return std::stod(data.rows[row][data.column_index(col)]);
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("swingup emits the solution set under a validating manifest") {
  const fs::path dir = scratch_dir("swingup");
  const ExperimentConfig cfg = small_cfg(dir);
  CHECK(run_subcommand("swingup", cfg) == 0);

  const RunManifest m = RunManifest::load(dir);
  CHECK(m.config_hash() == cfg.config_hash);
  CHECK(m.has_artifact("swingup/solution.json"));
  CHECK(m.has_artifact("swingup/cost_history.csv"));
  CHECK(m.has_artifact("swingup/trajectory.csv"));
  CHECK(m.validate().empty());
  CHECK(m.failures().empty());

  const auto sol =
      nlohmann::json::parse(read_text_file(dir / "swingup/solution.json"));
  CHECK(sol.at("converged").get<bool>());

  const CsvData traj = read_csv(dir / "swingup/trajectory.csv");
  CHECK(traj.schema == "optlab.trajectory.v1");
  CHECK(traj.columns ==
        std::vector<std::string>{"t", "time", "theta", "omega", "u"});
  CHECK(traj.rows.size() == 31);
  CHECK(traj.rows.back()[4] == "");  // no control at the terminal state
  const double theta_T = cell(traj, 30, "theta");
  CHECK(std::abs(theta_T - std::numbers::pi / 3.0) < 0.05);
}

TEST_CASE("surrogate bench scores all three models against the nominal") {
  const fs::path dir = scratch_dir("bench");
  const ExperimentConfig cfg =
      small_cfg(dir, {"studies.perturbation_levels=[0,0.1]"});
  REQUIRE(run_subcommand("swingup", cfg) == 0);
  CHECK(run_subcommand("surrogate-bench", cfg) == 0);

  const CsvData summary = read_csv(dir / "surrogate_bench/summary.csv");
  CHECK(summary.rows.size() == 6);  // 2 levels x 3 models
  for (const std::string level : {"0", "0.1"}) {
    const int lr = find_row(summary, "level", level);
    REQUIRE(lr >= 0);
    // Rows come in ltv, sindy, mlp order per level.
    const double ltv_rmse = cell(summary, lr, "median_rmse");
    const double sindy_rmse = cell(summary, lr + 1, "median_rmse");
    CHECK(summary.rows[lr][1] == "ltv");
    CHECK(ltv_rmse == 0.0);  // the LTV deviation model is exact on its nominal
    CHECK(sindy_rmse >= 0.0);
    // The local model never loses to the global fits on its own nominal.
    CHECK(ltv_rmse <= sindy_rmse);
    CHECK(ltv_rmse <= cell(summary, lr + 2, "median_rmse"));
  }
  // A dictionary fit on unperturbed data reproduces the trajectory it saw.
  const int l0 = find_row(summary, "level", "0");
  CHECK(cell(summary, l0 + 1, "median_rmse") < 1e-4);

  const CsvData pred =
      read_csv(dir / "surrogate_bench/predictions_level_0.1.csv");
  CHECK(pred.column_index("true_theta") >= 0);
  CHECK(pred.column_index("ltv_omega") >= 0);
  CHECK(pred.column_index("sindy_theta") >= 0);
  CHECK(pred.column_index("mlp_theta") >= 0);
  CHECK(pred.rows.size() == 31);
}

TEST_CASE("conditioning study emits spectra and monotone order growth") {
  const fs::path dir = scratch_dir("conditioning");
  const ExperimentConfig cfg = small_cfg(dir);
  CHECK(run_subcommand("conditioning", cfg) == 0);

  const CsvData orders =
      read_csv(dir / "conditioning/conditioning_monomial_orders.csv");
  CHECK(orders.rows.size() == 5);
  const auto emp = orders.numeric("empirical_cond");
  const auto ratio = orders.numeric("ratio");
  for (std::size_t i = 1; i < emp.size(); ++i) CHECK(emp[i] > emp[i - 1]);
  for (double r : ratio) {
    CHECK(r > 1.0 / 3.0);
    CHECK(r < 3.0);
  }

  CHECK(fs::exists(dir /
                   "conditioning/conditioning_sindy_poly_trig_3_angles_0.csv"));
  CHECK(fs::exists(dir / "conditioning/conditioning_sindy_monomial_4.csv"));
  const CsvData spec =
      read_csv(dir / "conditioning/conditioning_sindy_monomial_4.csv");
  const auto sv = spec.numeric("singular_value");
  for (std::size_t i = 1; i < sv.size(); ++i) CHECK(sv[i] <= sv[i - 1]);

  for (const char* epoch : {"0", "2"}) {
    CHECK(fs::exists(dir / ("conditioning/conditioning_mlp_level_0.05_epoch_" +
                            std::string(epoch) + ".csv")));
  }
  const CsvData summary = read_csv(dir / "conditioning/conditioning_summary.csv");
  CHECK(find_row(summary, "kind", "sindy") >= 0);
  CHECK(find_row(summary, "kind", "mlp") >= 0);
  CHECK(find_row(summary, "kind", "monomial") >= 0);
}

TEST_CASE("variance study tracks per-seed fits and their dispersion") {
  const fs::path dir = scratch_dir("variance");
  const ExperimentConfig cfg = small_cfg(dir);
  CHECK(run_subcommand("variance", cfg) == 0);

  const CsvData summary = read_csv(dir / "variance/variance_summary.csv");
  const int sr = find_row(summary, "model", "sindy");
  const int mr = find_row(summary, "model", "mlp");
  REQUIRE(sr >= 0);
  REQUIRE(mr >= 0);
  CHECK(cell(summary, sr, "n_ok") == 3.0);
  CHECK(cell(summary, sr, "median_coeff_std") > 0.0);
  const double mean_cos = cell(summary, mr, "mean_forcing_cosine");
  CHECK(mean_cos >= -1.0 - 1e-12);
  CHECK(mean_cos <= 1.0 + 1e-12);

  const BasisSet basis = BasisSet::parse(cfg.sindy.basis, 3);
  const CsvData coeffs =
      read_csv(dir / "variance/convergence_sindy_level_0.1_coefficients.csv");
  CHECK(static_cast<int>(coeffs.rows.size()) == 2 * basis.size());
  CHECK(coeffs.rows[0][1] == "theta:" + basis.feature_name(0));

  const CsvData preds =
      read_csv(dir / "variance/convergence_sindy_level_0.1_predictions.csv");
  CHECK(preds.columns.size() == 2 + 3 * 2);  // t, time, 3 seeds x 2 states
  CHECK(preds.columns[2] == "seed1_theta");
  CHECK(preds.rows.size() == 31);

  const CsvData cosines =
      read_csv(dir / "variance/mlp_forcing_cosine_level_0.05.csv");
  CHECK(cosines.rows.size() == 3);  // 3 seeds -> 3 pairs
  for (double c : cosines.numeric("cosine")) {
    CHECK(c >= -1.0 - 1e-12);
    CHECK(c <= 1.0 + 1e-12);
  }
}

TEST_CASE("control bench compares planning through each model class") {
  const fs::path dir = scratch_dir("control_bench");
  const ExperimentConfig cfg = small_cfg(dir);
  CHECK(run_subcommand("control-bench", cfg) == 0);

  const CsvData multi = read_csv(dir / "control_bench/ltv_multistart.csv");
  CHECK(multi.rows.size() == 2);
  for (double conv : multi.numeric("converged")) CHECK(conv == 1.0);

  const CsvData summary = read_csv(dir / "control_bench/summary.csv");
  const int lr = find_row(summary, "mode", "ltv");
  REQUIRE(lr >= 0);
  CHECK(cell(summary, lr, "converged") == 1.0);
  CHECK(cell(summary, lr, "cost_ratio_vs_ltv") == 1.0);
  CHECK(find_row(summary, "mode", "sindy") >= 0);
  CHECK(find_row(summary, "mode", "mlp") >= 0);

  const CsvData curves = read_csv(dir / "control_bench/cost_curves.csv");
  CHECK(find_row(curves, "mode", "ltv") >= 0);
  CHECK(fs::exists(dir / "control_bench/trajectory_ltv.csv"));
}

TEST_CASE("plots render from everything the manifest lists") {
  const fs::path dir = scratch_dir("plots");
  const ExperimentConfig cfg = small_cfg(dir);
  REQUIRE(run_subcommand("swingup", cfg) == 0);
  REQUIRE(run_subcommand("control-bench", cfg) == 0);
  CHECK(run_subcommand("plots", cfg) == 0);

  for (const char* name :
       {"swingup_theta", "swingup_phase", "swingup_cost",
        "control_bench_cost", "control_bench_trajectory_ltv"}) {
    const fs::path svg = dir / "plots" / (std::string(name) + ".svg");
    CHECK(fs::exists(svg));
    CHECK(read_text_file(svg).rfind("<svg", 0) == 0);
  }
  const RunManifest m = RunManifest::load(dir);
  CHECK(m.has_artifact("plots/swingup_theta.svg"));
  CHECK(m.has_artifact("swingup/solution.json"));  // carried across runs
  CHECK(m.validate().empty());
}

TEST_CASE("plots without a manifest warn and write nothing") {
  const fs::path dir = scratch_dir("plots_empty");
  const ExperimentConfig cfg = small_cfg(dir);
  CHECK(run_subcommand("plots", cfg) == 0);
  CHECK(!fs::exists(dir / "manifest.json"));
  CHECK(!fs::exists(dir / "plots"));
}

TEST_CASE("plots refuse a manifest from a different configuration") {
  const fs::path dir = scratch_dir("plots_mismatch");
  REQUIRE(run_subcommand("swingup", small_cfg(dir)) == 0);
  const ExperimentConfig other =
      small_cfg(dir, {"task.horizon=29"});
  CHECK_THROWS_WITH_AS(run_subcommand("plots", other),
                       doctest::Contains("different configuration"),
                       ConfigError);
}

TEST_CASE("a changed configuration starts the directory's record over") {
  const fs::path dir = scratch_dir("restart");
  REQUIRE(run_subcommand("control-bench", small_cfg(dir)) == 0);
  const ExperimentConfig changed = small_cfg(dir, {"task.horizon=29"});
  REQUIRE(run_subcommand("swingup", changed) == 0);

  const RunManifest m = RunManifest::load(dir);
  CHECK(m.config_hash() == changed.config_hash);
  CHECK(m.has_artifact("swingup/solution.json"));
  CHECK(!m.has_artifact("control_bench/summary.csv"));  // stale, unclaimed
}

TEST_CASE("identical configurations produce identical artifact bytes") {
  const fs::path a = scratch_dir("det_a");
  const fs::path b = scratch_dir("det_b");
  REQUIRE(run_subcommand("swingup", small_cfg(a)) == 0);
  REQUIRE(run_subcommand("swingup", small_cfg(b)) == 0);
  for (const char* rel :
       {"swingup/solution.json", "swingup/cost_history.csv",
        "swingup/trajectory.csv"}) {
    CHECK(read_text_file(a / rel) == read_text_file(b / rel));
  }
  const RunManifest ma = RunManifest::load(a);
  const RunManifest mb = RunManifest::load(b);
  REQUIRE(ma.artifacts().size() == mb.artifacts().size());
  for (std::size_t i = 0; i < ma.artifacts().size(); ++i)
    CHECK(ma.artifacts()[i].checksum == mb.artifacts()[i].checksum);
}

TEST_CASE("an unreachable task is a recorded failure and exit code 3") {
  const fs::path dir = scratch_dir("nonconverged");
  const ExperimentConfig cfg = small_cfg(dir, {"ilqr.max_iterations=1"});
  CHECK(run_subcommand("swingup", cfg) == 3);
  const RunManifest m = RunManifest::load(dir);
  REQUIRE(!m.failures().empty());
  CHECK(m.failures()[0].name.rfind("fatal", 0) == 0);
  CHECK(m.has_artifact("swingup/solution.json"));  // partial results kept
}

TEST_CASE("unknown subcommands are a configuration error") {
  const fs::path dir = scratch_dir("unknown_sub");
  CHECK_THROWS_WITH_AS(run_subcommand("swingdown", small_cfg(dir)),
                       doctest::Contains("unknown subcommand"), ConfigError);
}

}  // TEST_SUITE
