#include "optlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <thread>
#include <utility>

#include "json.hpp"
#include "optlab/basis.hpp"
#include "optlab/diagnostics.hpp"
#include "optlab/dynamics.hpp"
#include "optlab/errors.hpp"
#include "optlab/ilqr.hpp"
#include "optlab/ltv.hpp"
#include "optlab/mlp.hpp"
#include "optlab/regress.hpp"
#include "optlab/rng.hpp"
#include "optlab/sampling.hpp"
#include "optlab/sindy.hpp"
#include "optlab/svg.hpp"

namespace optlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Failure names carrying this prefix flip the process exit code; everything
// else is an isolated item a study recovered from.
constexpr const char* kFatal = "fatal ";

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

// Work is pulled by index, so results land in caller-owned slots and output
// assembly stays in input order no matter which thread ran what.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string level_tag(double level) { return format_double(level); }

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ':' || c == '=' || c == ',') c = '_';
  return s;
}

double median_of(std::vector<double> values) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t h = values.size() / 2;
  if (values.size() % 2 == 1) return values[h];
  return 0.5 * (values[h - 1] + values[h]);
}

std::vector<Eigen::VectorXd> zero_controls(int horizon, int n_u) {
  return std::vector<Eigen::VectorXd>(horizon, Eigen::VectorXd::Zero(n_u));
}

double effective_u_max(const TaskSection& task, const System& system) {
  return task.u_max > 0.0 ? task.u_max : system.u_max();
}

// Steps the model open loop until it leaves the finite range; the returned
// prefix always contains at least the initial state.
std::vector<Eigen::VectorXd> open_loop_predict(
    const DynamicsModel& model, const Eigen::VectorXd& x0,
    const std::vector<Eigen::VectorXd>& controls) {
  std::vector<Eigen::VectorXd> out{x0};
  Eigen::VectorXd x = x0;
  for (const auto& u : controls) {
    Eigen::VectorXd xn;
    try {
      xn = model.step(x, u);
    } catch (const std::exception&) {
      break;
    }
    if (!xn.allFinite()) break;
    out.push_back(xn);
    x = std::move(xn);
  }
  return out;
}

std::vector<Eigen::VectorXd> ltv_open_loop(const LtvModel& ltv,
                                           const Trajectory& nominal) {
  std::vector<Eigen::VectorXd> out{nominal.states[0]};
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(ltv.state_dim());
  const Eigen::VectorXd du = Eigen::VectorXd::Zero(ltv.control_dim());
  for (int t = 0; t < ltv.horizon(); ++t) {
    dx = ltv.predict(t, dx, du);
    out.push_back(nominal.states[t + 1] + dx);
  }
  return out;
}

double prediction_rmse(const std::vector<Eigen::VectorXd>& pred,
                       const std::vector<Eigen::VectorXd>& truth) {
  const std::size_t n = std::min(pred.size(), truth.size());
  if (n < 2) return kInf;
  double sq = 0.0;
  long long count = 0;
  for (std::size_t t = 1; t < n; ++t) {
    sq += (pred[t] - truth[t]).squaredNorm();
    count += truth[t].size();
  }
  return std::sqrt(sq / static_cast<double>(count));
}

double terminal_error(const std::vector<Eigen::VectorXd>& pred,
                      const std::vector<Eigen::VectorXd>& truth) {
  if (pred.size() < truth.size()) return kInf;
  return (pred.back() - truth.back()).norm();
}

std::vector<int> mlp_widths(const MlpSection& mlp, int n_x, int n_u) {
  std::vector<int> widths{n_x + n_u};
  widths.insert(widths.end(), mlp.hidden.begin(), mlp.hidden.end());
  widths.push_back(n_x);
  return widths;
}

TrainHyper mlp_hyper(const MlpSection& mlp) {
  TrainHyper hyper;
  hyper.lr = mlp.lr;
  hyper.epochs = mlp.epochs;
  hyper.batch_size = mlp.batch_size;
  hyper.seed = mlp.shuffle_seed;
  return hyper;
}

std::pair<Dataset, Dataset> sample_and_split(const System& system,
                                             const Trajectory& nominal,
                                             SamplingSpec spec) {
  const Dataset ds = generate_dataset(system, nominal, spec);
  // The split stream sits past every per-trajectory substream.
  Rng split_rng = Rng(spec.seed).substream(spec.n_trajectories);
  return split_dataset(ds, spec.split_ratio, split_rng);
}

CsvFile trajectory_csv(const Trajectory& traj,
                       const std::vector<std::string>& names) {
  std::vector<std::string> cols{"t", "time"};
  cols.insert(cols.end(), names.begin(), names.end());
  cols.emplace_back("u");
  CsvFile csv("optlab.trajectory.v1", cols);
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    std::vector<std::string> row{std::to_string(t),
                                 format_double(traj.dt * (double)t)};
    for (int i = 0; i < traj.states[t].size(); ++i)
      row.push_back(format_double(traj.states[t][i]));
    row.push_back(t < traj.controls.size()
                      ? format_double(traj.controls[t][0])
                      : std::string());
    csv.add_row(std::move(row));
  }
  return csv;
}

IlqrSolution solve_configured_task(const TaskSection& task_cfg,
                                   const IlqrOptions& opts_in,
                                   const System& system,
                                   std::vector<Eigen::VectorXd> u_init) {
  IlqrTask task;
  task.model = &system;
  task.x0 = task_cfg.x0;
  task.cost = build_cost(task_cfg);
  task.u_max = effective_u_max(task_cfg, system);
  task.u_init = std::move(u_init);
  if (task.u_init.empty())
    task.u_init = zero_controls(task_cfg.horizon, system.control_dim());
  IlqrOptions opts = opts_in;
  opts.source = ModelSource::TrueSystemLtv;
  return solve_ilqr(task, opts);
}

Trajectory nominal_from_solution_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    const nlohmann::json& nom = j.at("nominal");
    Trajectory traj;
    traj.dt = nom.at("dt").get<double>();
    for (const auto& row : nom.at("states")) {
      const auto v = row.get<std::vector<double>>();
      traj.states.push_back(Eigen::Map<const Eigen::VectorXd>(
          v.data(), static_cast<Eigen::Index>(v.size())));
    }
    for (const auto& row : nom.at("controls")) {
      const auto v = row.get<std::vector<double>>();
      traj.controls.push_back(Eigen::Map<const Eigen::VectorXd>(
          v.data(), static_cast<Eigen::Index>(v.size())));
    }
    if (traj.states.size() != traj.controls.size() + 1)
      throw ConfigError("stored solution has inconsistent horizon");
    return traj;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed stored solution: ") + e.what());
  }
}

// Downstream studies sample around the stored swingup solution when one
// exists, and otherwise solve the task in memory without emitting artifacts.
Trajectory load_or_solve_nominal(const ExperimentConfig& cfg,
                                 const System& system, RunManifest& m) {
  const auto path =
      std::filesystem::path(cfg.out_dir) / "swingup" / "solution.json";
  if (std::filesystem::exists(path))
    return nominal_from_solution_json(read_text_file(path));
  Timer timer;
  const IlqrSolution sol = solve_configured_task(cfg.task, cfg.ilqr, system, {});
  m.record_timing("nominal-solve", timer.seconds());
  if (!sol.converged)
    m.record_failure("nominal-solve", "task solve did not converge");
  return sol.nominal;
}

Eigen::VectorXd spectrum_of(const Eigen::MatrixXd& G) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(G).singularValues();
}

CsvFile spectrum_csv(const Eigen::VectorXd& values) {
  CsvFile csv("optlab.spectrum.v1", {"index", "singular_value"});
  for (int i = 0; i < values.size(); ++i)
    csv.add_row({std::to_string(i), format_double(values[i])});
  return csv;
}

}  // namespace

RunManifest run_swingup(const ExperimentConfig& cfg) {
  RunManifest m(cfg.out_dir, cfg.config_hash);
  Timer timer;
  const auto system = build_system(cfg.task);
  const IlqrSolution sol =
      solve_configured_task(cfg.task, cfg.ilqr, *system, {});

  m.emit("swingup/solution.json", sol.to_json_string() + "\n");

  CsvFile cost("optlab.cost-history.v1",
               {"iteration", "cost", "alpha", "mu", "accepted"});
  for (const auto& rec : sol.iterates)
    cost.add_row({std::to_string(rec.iteration), format_double(rec.cost),
                  format_double(rec.alpha), format_double(rec.mu),
                  rec.accepted ? "1" : "0"});
  m.emit("swingup/cost_history.csv", cost.str());

  const auto names = state_names(cfg.task.system, system->state_dim());
  m.emit("swingup/trajectory.csv", trajectory_csv(sol.nominal, names).str());

  m.record_timing("swingup", timer.seconds());
  if (!sol.converged)
    m.record_failure(std::string(kFatal) + "swingup",
                     "solver did not converge within " +
                         std::to_string(cfg.ilqr.max_iterations) +
                         " iterations");
  return m;
}

RunManifest run_surrogate_bench(const ExperimentConfig& cfg) {
  RunManifest m(cfg.out_dir, cfg.config_hash);
  Timer timer;
  const auto system = build_system(cfg.task);
  const Trajectory nominal = load_or_solve_nominal(cfg, *system, m);
  const int n_x = system->state_dim();
  const int n_u = system->control_dim();
  const auto names = state_names(cfg.task.system, n_x);
  const BasisSet basis = BasisSet::parse(cfg.sindy.basis, n_x + n_u);

  const auto& levels = cfg.studies.perturbation_levels;
  const auto& seeds = cfg.studies.bench_seeds;

  struct ModelRun {
    bool ok = false;
    std::string error;
    double rmse = kNaN;
    double terminal = kNaN;
    std::vector<Eigen::VectorXd> prediction;  // kept for the first seed only
  };
  struct Job {
    ModelRun ltv, sindy, mlp;
  };
  const int n_jobs = static_cast<int>(levels.size() * seeds.size());
  std::vector<Job> jobs(n_jobs);

  parallel_for(n_jobs, cfg.workers, [&](int ji) {
    const double level = levels[ji / seeds.size()];
    const std::uint64_t seed = seeds[ji % seeds.size()];
    const bool keep_pred = ji % seeds.size() == 0;
    Job& job = jobs[ji];

    SamplingSpec sp = cfg.sampling;
    sp.perturbation_level = level;
    sp.seed = seed;
    Dataset train, test;
    try {
      std::tie(train, test) = sample_and_split(*system, nominal, sp);
    } catch (const std::exception& e) {
      const std::string msg = std::string("dataset: ") + e.what();
      job.ltv.error = job.sindy.error = job.mlp.error = msg;
      return;
    }

    auto score = [&](ModelRun& run, std::vector<Eigen::VectorXd> pred) {
      run.rmse = prediction_rmse(pred, nominal.states);
      run.terminal = terminal_error(pred, nominal.states);
      if (keep_pred) run.prediction = std::move(pred);
      run.ok = true;
    };

    try {
      const LtvModel ltv =
          identify_ltv(*system, nominal, cfg.ltv.n_rollouts,
                       cfg.ltv.state_scale, cfg.ltv.control_scale,
                       cfg.ltv.seed, cfg.ltv.mode, cfg.ltv.noise);
      score(job.ltv, ltv_open_loop(ltv, nominal));
    } catch (const std::exception& e) {
      job.ltv.error = e.what();
    }
    try {
      const SindyModel sindy =
          fit_sindy(train, basis, cfg.sindy.threshold, cfg.sindy.svd_cutoff);
      score(job.sindy,
            open_loop_predict(sindy, nominal.states[0], nominal.controls));
    } catch (const std::exception& e) {
      job.sindy.error = e.what();
    }
    try {
      auto [mlp, report] =
          train_mlp(init_mlp(mlp_widths(cfg.mlp, n_x, n_u), cfg.mlp.init_seed),
                    train, test, mlp_hyper(cfg.mlp));
      score(job.mlp,
            open_loop_predict(mlp, nominal.states[0], nominal.controls));
    } catch (const std::exception& e) {
      job.mlp.error = e.what();
    }
  });

  const char* model_names[] = {"ltv", "sindy", "mlp"};
  auto model_of = [](Job& j, int k) -> ModelRun& {
    return k == 0 ? j.ltv : k == 1 ? j.sindy : j.mlp;
  };

  CsvFile summary("optlab.surrogate-bench.v1",
                  {"level", "model", "n_ok", "median_rmse",
                   "median_terminal_error"});
  int total_ok = 0;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    for (int k = 0; k < 3; ++k) {
      std::vector<double> rmses, terms;
      int n_ok = 0;
      for (std::size_t si = 0; si < seeds.size(); ++si) {
        ModelRun& run = model_of(jobs[li * seeds.size() + si], k);
        if (!run.ok) {
          m.record_failure("surrogate-bench level " + level_tag(levels[li]) +
                               " seed " + std::to_string(seeds[si]) + " " +
                               model_names[k],
                           run.error);
          continue;
        }
        ++n_ok;
        ++total_ok;
        rmses.push_back(run.rmse);
        terms.push_back(run.terminal);
      }
      summary.add_row({level_tag(levels[li]), model_names[k],
                       std::to_string(n_ok), format_double(median_of(rmses)),
                       format_double(median_of(terms))});
    }

    // Overlay of the first bench seed's open-loop predictions.
    std::vector<std::string> cols{"t", "time"};
    for (const char* mn : {"true", "ltv", "sindy", "mlp"})
      for (const auto& sn : names) cols.push_back(std::string(mn) + "_" + sn);
    CsvFile pred("optlab.predictions.v1", cols);
    Job& first = jobs[li * seeds.size()];
    for (std::size_t t = 0; t < nominal.states.size(); ++t) {
      std::vector<std::string> row{std::to_string(t),
                                   format_double(nominal.dt * (double)t)};
      for (int i = 0; i < n_x; ++i)
        row.push_back(format_double(nominal.states[t][i]));
      for (int k = 0; k < 3; ++k) {
        const auto& p = model_of(first, k).prediction;
        for (int i = 0; i < n_x; ++i)
          row.push_back(t < p.size() ? format_double(p[t][i])
                                     : std::string());
      }
      pred.add_row(std::move(row));
    }
    m.emit("surrogate_bench/predictions_level_" + level_tag(levels[li]) +
               ".csv",
           pred.str());
  }
  m.emit("surrogate_bench/summary.csv", summary.str());
  if (total_ok == 0 && n_jobs > 0)
    m.record_failure(std::string(kFatal) + "surrogate-bench",
                     "every level and seed failed");
  m.record_timing("surrogate-bench", timer.seconds());
  return m;
}

RunManifest run_conditioning_study(const ExperimentConfig& cfg) {
  RunManifest m(cfg.out_dir, cfg.config_hash);
  Timer timer;
  const auto system = build_system(cfg.task);
  const Trajectory nominal = load_or_solve_nominal(cfg, *system, m);
  const int n_in = system->state_dim() + system->control_dim();

  CsvFile summary("optlab.conditioning.v1",
                  {"kind", "label", "level", "epoch", "n_features", "cond"});

  // Feature Grams of the configured dictionaries on one dataset.
  {
    SamplingSpec sp = cfg.sampling;
    sp.perturbation_level = cfg.studies.sindy_conditioning_level;
    const Dataset ds = generate_dataset(*system, nominal, sp);
    const auto inputs = ds.stacked_inputs();
    for (const std::string& spec : cfg.studies.conditioning_bases) {
      try {
        const BasisSet basis = BasisSet::parse(spec, n_in);
        const GramMatrix G = gram(basis.design_matrix(inputs));
        const Eigen::VectorXd sv = spectrum_of(G.G);
        m.emit("conditioning/conditioning_sindy_" + sanitize(spec) + ".csv",
               spectrum_csv(sv).str());
        summary.add_row({"sindy", sanitize(spec),
                         level_tag(sp.perturbation_level), "",
                         std::to_string(basis.size()),
                         format_double(sv[0] / sv[sv.size() - 1])});
      } catch (const std::exception& e) {
        m.record_failure("conditioning sindy " + spec, e.what());
      }
    }
  }

  // Network normal-equation Grams probed along one training run per level.
  {
    std::vector<int> probes = cfg.studies.mlp_probe_epochs;
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    const auto& levels = cfg.studies.mlp_conditioning_levels;

    struct Probe {
      int epoch = 0;
      Eigen::VectorXd sv;
      double cond = 0.0;
    };
    std::vector<std::vector<Probe>> results(levels.size());
    std::vector<std::string> errors(levels.size());

    parallel_for(static_cast<int>(levels.size()), cfg.workers, [&](int li) {
      try {
        SamplingSpec sp = cfg.sampling;
        sp.perturbation_level = levels[li];
        auto [train, test] = sample_and_split(*system, nominal, sp);
        MlpModel model = init_mlp(
            mlp_widths(cfg.mlp, system->state_dim(), system->control_dim()),
            cfg.mlp.init_seed);
        int trained = 0;
        for (int epoch : probes) {
          if (epoch > trained) {
            TrainHyper hyper = mlp_hyper(cfg.mlp);
            hyper.epochs = epoch - trained;
            std::tie(model, std::ignore) =
                train_mlp(std::move(model), train, test, hyper);
            trained = epoch;
          }
          const GaussNewtonDiag diag =
              gauss_newton_diag(model, train, {}, epoch);
          results[li].push_back(
              {epoch, spectrum_of(diag.gram), diag.cond});
        }
      } catch (const std::exception& e) {
        errors[li] = e.what();
      }
    });

    for (std::size_t li = 0; li < levels.size(); ++li) {
      if (!errors[li].empty()) {
        m.record_failure("conditioning mlp level " + level_tag(levels[li]),
                         errors[li]);
        continue;
      }
      for (const Probe& p : results[li]) {
        m.emit("conditioning/conditioning_mlp_level_" +
                   level_tag(levels[li]) + "_epoch_" +
                   std::to_string(p.epoch) + ".csv",
               spectrum_csv(p.sv).str());
        summary.add_row({"mlp", "last_layer", level_tag(levels[li]),
                         std::to_string(p.epoch),
                         std::to_string(p.sv.size()),
                         format_double(p.cond)});
      }
    }
  }

  // Synthetic monomial study against the analytic moment Gram.  One sample
  // set serves every order: nested Grams make the empirical condition
  // numbers monotone by eigenvalue interlacing, matching the analytic trend.
  {
    int max_order = 1;
    for (int order : cfg.studies.conditioning_orders)
      max_order = std::max(max_order, order);
    Rng rng(cfg.studies.conditioning_seed);
    std::vector<Eigen::VectorXd> inputs(cfg.studies.conditioning_samples,
                                        Eigen::VectorXd(1));
    for (auto& z : inputs) z[0] = rng.normal();
    const BasisSet basis(BasisFamily::Monomial, max_order, 1);
    const GramMatrix G = gram(basis.design_matrix(inputs));

    CsvFile growth("optlab.conditioning-orders.v1",
                   {"order", "empirical_cond", "analytic_cond", "ratio"});
    for (int order : cfg.studies.conditioning_orders) {
      const double emp =
          condition_number(G.G.topLeftCorner(order + 1, order + 1));
      const double ana = condition_number(
          analytic_gram(BasisFamily::Monomial, order,
                        Distribution::gaussian(1.0)));
      growth.add_row({std::to_string(order), format_double(emp),
                      format_double(ana), format_double(emp / ana)});
      summary.add_row({"monomial", "order_" + std::to_string(order), "", "",
                       std::to_string(order + 1), format_double(emp)});
    }
    m.emit("conditioning/conditioning_monomial_orders.csv", growth.str());
  }

  m.emit("conditioning/conditioning_summary.csv", summary.str());
  m.record_timing("conditioning", timer.seconds());
  return m;
}

RunManifest run_variance_study(const ExperimentConfig& cfg) {
  RunManifest m(cfg.out_dir, cfg.config_hash);
  Timer timer;
  const auto system = build_system(cfg.task);
  const Trajectory nominal = load_or_solve_nominal(cfg, *system, m);
  const int n_x = system->state_dim();
  const int n_u = system->control_dim();
  const auto names = state_names(cfg.task.system, n_x);
  const BasisSet basis = BasisSet::parse(cfg.sindy.basis, n_x + n_u);

  struct VarianceJob {
    std::string model;
    double level = 0.0;
    VarianceStudy study;
    std::map<std::uint64_t, Eigen::VectorXd> forcing;  // mlp only
    std::string error;
  };
  std::vector<VarianceJob> jobs;
  for (double level : cfg.studies.sindy_variance_levels)
    jobs.push_back({"sindy", level, {}, {}, {}});
  for (double level : cfg.studies.mlp_variance_levels)
    jobs.push_back({"mlp", level, {}, {}, {}});

  parallel_for(static_cast<int>(jobs.size()), cfg.workers, [&](int ji) {
    VarianceJob& job = jobs[ji];
    SamplingSpec sp = cfg.sampling;
    sp.perturbation_level = job.level;

    SeedFitFn fit;
    if (job.model == "sindy") {
      fit = [&](const Dataset& train, const Dataset&, std::uint64_t) {
        const SindyModel model = fit_sindy(train, basis, cfg.sindy.threshold,
                                           cfg.sindy.svd_cutoff);
        SeedFitResult r;
        r.ok = true;
        r.coefficients = Eigen::Map<const Eigen::VectorXd>(
            model.xi().data(), model.xi().size());
        r.prediction =
            open_loop_predict(model, nominal.states[0], nominal.controls);
        return r;
      };
    } else {
      sp.n_trajectories = cfg.studies.mlp_variance_trajectories;
      // The init seed stays fixed so only the data seed moves the fit.
      fit = [&job, &cfg, &nominal, n_x, n_u](const Dataset& train,
                                             const Dataset& test,
                                             std::uint64_t seed) {
        auto [model, report] =
            train_mlp(init_mlp(mlp_widths(cfg.mlp, n_x, n_u),
                               cfg.mlp.init_seed),
                      train, test, mlp_hyper(cfg.mlp));
        SeedFitResult r;
        r.ok = true;
        r.coefficients = model.theta();
        r.prediction =
            open_loop_predict(model, nominal.states[0], nominal.controls);
        job.forcing[seed] = gauss_newton_diag(model, train).forcing;
        return r;
      };
    }
    try {
      job.study = seed_variance_study(*system, nominal, sp,
                                      cfg.studies.seeds, job.model, fit);
    } catch (const std::exception& e) {
      job.error = e.what();
    }
  });

  CsvFile summary("optlab.variance-summary.v1",
                  {"model", "level", "n_seeds", "n_ok", "median_coeff_std",
                   "max_prediction_spread", "mean_forcing_cosine"});
  for (VarianceJob& job : jobs) {
    const std::string tag = job.model + "_level_" + level_tag(job.level);
    if (!job.error.empty()) {
      m.record_failure("variance " + tag, job.error);
      continue;
    }
    int n_ok = 0;
    for (const auto& f : job.study.fits) {
      if (f.ok)
        ++n_ok;
      else
        m.record_failure(
            "variance " + tag + " seed " + std::to_string(f.seed), f.error);
    }

    CsvFile coeffs("optlab.coefficient-variance.v1",
                   {"index", "label", "mean", "std"});
    const int n_feat = basis.size();
    for (int i = 0; i < job.study.coeff_mean.size(); ++i) {
      std::string label;
      if (job.model == "sindy")
        label = names[i / n_feat] + ":" + basis.feature_name(i % n_feat);
      else
        label = "theta" + std::to_string(i);
      coeffs.add_row({std::to_string(i), label,
                      format_double(job.study.coeff_mean[i]),
                      format_double(job.study.coeff_std[i])});
    }
    m.emit("variance/convergence_" + tag + "_coefficients.csv",
           coeffs.str());

    std::vector<std::string> cols{"t", "time"};
    for (const auto& f : job.study.fits)
      if (f.ok)
        for (const auto& sn : names)
          cols.push_back("seed" + std::to_string(f.seed) + "_" + sn);
    CsvFile preds("optlab.predictions.v1", cols);
    for (std::size_t t = 0; t < nominal.states.size(); ++t) {
      std::vector<std::string> row{std::to_string(t),
                                   format_double(nominal.dt * (double)t)};
      for (const auto& f : job.study.fits) {
        if (!f.ok) continue;
        for (int i = 0; i < n_x; ++i)
          row.push_back(t < f.prediction.size()
                            ? format_double(f.prediction[t][i])
                            : std::string());
      }
      preds.add_row(std::move(row));
    }
    m.emit("variance/convergence_" + tag + "_predictions.csv", preds.str());

    double mean_cosine = kNaN;
    if (job.model == "mlp" && job.forcing.size() >= 2) {
      std::vector<std::uint64_t> fseeds;
      std::vector<Eigen::VectorXd> fvecs;
      for (const auto& [seed, vec] : job.forcing) {
        fseeds.push_back(seed);
        fvecs.push_back(vec);
      }
      const Eigen::MatrixXd cos = pairwise_cosine(fvecs);
      CsvFile fc("optlab.forcing-cosine.v1", {"seed_a", "seed_b", "cosine"});
      double sum = 0.0;
      int count = 0;
      for (int a = 0; a < cos.rows(); ++a) {
        for (int b = a + 1; b < cos.cols(); ++b) {
          fc.add_row({std::to_string(fseeds[a]), std::to_string(fseeds[b]),
                      format_double(cos(a, b))});
          sum += cos(a, b);
          ++count;
        }
      }
      mean_cosine = sum / count;
      m.emit("variance/mlp_forcing_cosine_level_" + level_tag(job.level) +
                 ".csv",
             fc.str());
    }

    const Eigen::VectorXd& stds = job.study.coeff_std;
    summary.add_row(
        {job.model, level_tag(job.level),
         std::to_string(cfg.studies.seeds.size()), std::to_string(n_ok),
         format_double(median_of(
             std::vector<double>(stds.begin(), stds.end()))),
         format_double(job.study.max_prediction_spread),
         std::isnan(mean_cosine) ? std::string()
                                 : format_double(mean_cosine)});
  }
  m.emit("variance/variance_summary.csv", summary.str());
  m.record_timing("variance", timer.seconds());
  return m;
}

RunManifest run_control_bench(const ExperimentConfig& cfg) {
  RunManifest m(cfg.out_dir, cfg.config_hash);
  Timer timer;
  const ControlBenchSection& cb = cfg.control_bench;
  const auto system = build_system(cb.task);
  const CostSpec cost = build_cost(cb.task);
  const int n_x = system->state_dim();
  const int n_u = system->control_dim();
  const double u_max = effective_u_max(cb.task, *system);
  const auto names = state_names(cb.task.system, n_x);

  auto random_controls = [&](std::uint64_t seed) {
    Rng rng(seed);
    const double span = cb.init_scale * u_max;
    std::vector<Eigen::VectorXd> u(cb.task.horizon, Eigen::VectorXd(n_u));
    for (auto& ut : u)
      for (int j = 0; j < n_u; ++j) ut[j] = rng.uniform(-span, span);
    return u;
  };

  // Sampled-LTV optimization from every configured initial control seed.
  std::vector<IlqrSolution> starts(cb.init_seeds.size());
  parallel_for(static_cast<int>(starts.size()), cfg.workers, [&](int si) {
    starts[si] = solve_configured_task(cb.task, cb.ilqr, *system,
                                       random_controls(cb.init_seeds[si]));
  });

  {
    std::vector<std::string> cols{"seed", "converged", "iterations", "cost"};
    for (const auto& sn : names) cols.push_back("terminal_" + sn);
    CsvFile multi("optlab.multistart.v1", cols);
    for (std::size_t si = 0; si < starts.size(); ++si) {
      const IlqrSolution& sol = starts[si];
      std::vector<std::string> row{std::to_string(cb.init_seeds[si]),
                                   sol.converged ? "1" : "0",
                                   std::to_string(sol.iterations),
                                   format_double(sol.cost_history.back())};
      for (int i = 0; i < n_x; ++i)
        row.push_back(format_double(sol.nominal.states.back()[i]));
      multi.add_row(std::move(row));
      if (!sol.converged && si > 0)
        m.record_failure("control-bench ltv seed " +
                             std::to_string(cb.init_seeds[si]),
                         "did not converge");
    }
    m.emit("control_bench/ltv_multistart.csv", multi.str());
  }

  const IlqrSolution& ltv_sol = starts[0];
  const double ltv_cost = ltv_sol.cost_history.back();
  if (!ltv_sol.converged)
    m.record_failure(std::string(kFatal) + "control-bench",
                     "sampled-ltv mode did not converge from seed " +
                         std::to_string(cb.init_seeds[0]));

  // Frozen surrogates trained on data gathered around the found optimum.
  SamplingSpec sp;
  sp.perturbation_level = cb.train_level;
  sp.n_trajectories = cb.train_trajectories;
  sp.seed = cb.train_seed;
  sp.noise = cfg.sampling.noise;
  sp.split_ratio = cfg.sampling.split_ratio;
  Dataset train, test;
  std::unique_ptr<SindyModel> sindy;
  std::unique_ptr<MlpModel> mlp;
  try {
    std::tie(train, test) = sample_and_split(*system, ltv_sol.nominal, sp);
    try {
      sindy = std::make_unique<SindyModel>(
          fit_sindy(train, BasisSet::parse(cb.sindy_basis, n_x + n_u),
                    cfg.sindy.threshold, cfg.sindy.svd_cutoff));
    } catch (const std::exception& e) {
      m.record_failure("control-bench sindy fit", e.what());
    }
    try {
      auto [model, report] =
          train_mlp(init_mlp(mlp_widths(cfg.mlp, n_x, n_u),
                             cfg.mlp.init_seed),
                    train, test, mlp_hyper(cfg.mlp));
      mlp = std::make_unique<MlpModel>(std::move(model));
    } catch (const std::exception& e) {
      m.record_failure("control-bench mlp training", e.what());
    }
  } catch (const std::exception& e) {
    m.record_failure("control-bench training data", e.what());
  }

  struct Mode {
    std::string tag;
    bool ok = false;
    bool converged = false;
    int iterations = 0;
    double model_cost = kNaN;  // final cost under the planning model
    double true_cost = kNaN;   // rolling the planned controls on the plant
    std::vector<double> cost_curve;
    Trajectory true_traj;
  };
  std::vector<Mode> modes;
  modes.push_back({"ltv", true, ltv_sol.converged, ltv_sol.iterations,
                   ltv_cost, ltv_cost, ltv_sol.cost_history,
                   ltv_sol.nominal});

  for (const auto& [tag, model] :
       std::initializer_list<std::pair<const char*, const DynamicsModel*>>{
           {"sindy", sindy.get()}, {"mlp", mlp.get()}}) {
    Mode mode;
    mode.tag = tag;
    if (model == nullptr) {
      modes.push_back(std::move(mode));
      continue;
    }
    try {
      IlqrTask task;
      task.model = model;
      task.x0 = cb.task.x0;
      task.cost = cost;
      task.u_max = u_max;
      task.u_init = random_controls(cb.init_seeds[0]);
      IlqrOptions opts = cb.ilqr;
      opts.source = ModelSource::Surrogate;
      const IlqrSolution sol = solve_ilqr(task, opts);
      mode.converged = sol.converged;
      mode.iterations = sol.iterations;
      mode.model_cost = sol.cost_history.back();
      mode.cost_curve = sol.cost_history;
      try {
        mode.true_traj =
            rollout(*system, cb.task.x0, sol.nominal.controls);
        mode.true_cost = evaluate_cost(cost, mode.true_traj);
      } catch (const NumericalError& e) {
        mode.true_cost = kInf;
        m.record_failure(std::string("control-bench ") + tag + " rollout",
                         e.what());
      }
      mode.ok = true;
    } catch (const std::exception& e) {
      m.record_failure(std::string("control-bench ") + tag + " solve",
                       e.what());
    }
    modes.push_back(std::move(mode));
  }

  CsvFile curves("optlab.cost-curves.v1", {"mode", "iteration", "cost"});
  for (const Mode& mode : modes)
    for (std::size_t i = 0; i < mode.cost_curve.size(); ++i)
      curves.add_row({mode.tag, std::to_string(i),
                      format_double(mode.cost_curve[i])});
  m.emit("control_bench/cost_curves.csv", curves.str());

  CsvFile summary("optlab.control-bench.v1",
                  {"mode", "converged", "iterations", "model_cost",
                   "true_cost", "cost_ratio_vs_ltv"});
  for (const Mode& mode : modes) {
    summary.add_row({mode.tag, mode.converged ? "1" : "0",
                     std::to_string(mode.iterations),
                     format_double(mode.model_cost),
                     format_double(mode.true_cost),
                     format_double(mode.true_cost / ltv_cost)});
    if (!mode.true_traj.states.empty())
      m.emit("control_bench/trajectory_" + mode.tag + ".csv",
             trajectory_csv(mode.true_traj, names).str());
  }
  m.emit("control_bench/summary.csv", summary.str());
  m.record_timing("control-bench", timer.seconds());
  return m;
}

namespace {

// Angle coordinate and its rate for the phase-style plots.
std::pair<std::string, std::string> angle_pair(const std::string& system) {
  if (system == "cartpole") return {"theta", "thetadot"};
  if (system == "pendulum") return {"theta", "omega"};
  return {"x0", "x1"};
}

bool affix(const std::string& s, const std::string& pre,
           const std::string& suf, std::string* mid) {
  if (s.size() < pre.size() + suf.size()) return false;
  if (s.compare(0, pre.size(), pre) != 0) return false;
  if (s.compare(s.size() - suf.size(), suf.size(), suf) != 0) return false;
  *mid = s.substr(pre.size(), s.size() - pre.size() - suf.size());
  return true;
}

}  // namespace

RunManifest emit_plots(const ExperimentConfig& cfg,
                       const RunManifest& source) {
  RunManifest m(cfg.out_dir, cfg.config_hash);
  Timer timer;
  const std::filesystem::path root(cfg.out_dir);

  auto emit_plot = [&](const std::string& name, SvgPlot& plot) {
    try {
      m.emit("plots/" + name + ".svg", plot.render());
    } catch (const ConfigError& e) {
      m.record_failure("plots " + name, e.what());
    }
  };
  auto load = [&](const std::string& rel, CsvData* out) {
    if (!std::filesystem::exists(root / rel)) {
      m.record_failure("plots", "missing artifact " + rel);
      return false;
    }
    try {
      *out = read_csv(root / rel);
    } catch (const ConfigError& e) {
      m.record_failure("plots " + rel, e.what());
      return false;
    }
    return true;
  };

  // Grouped spectra accumulate across artifacts before rendering.
  SvgPlot sindy_spectra("feature Gram spectra", "singular value index",
                        "singular value");
  sindy_spectra.set_log_y(true);
  SvgPlot mlp_spectra("normal-equation Gram spectra, output layer",
                      "singular value index", "singular value");
  mlp_spectra.set_log_y(true);

  for (const ArtifactEntry& a : source.artifacts()) {
    const std::string& path = a.path;
    std::string tag;
    CsvData csv;

    if (path == "swingup/trajectory.csv") {
      if (!load(path, &csv)) continue;
      const auto [angle, rate] = angle_pair(cfg.task.system);
      SvgPlot theta("swingup: angle trajectory", "time [s]",
                    angle + " [rad]");
      theta.add_line(csv.numeric("time"), csv.numeric(angle), angle);
      if (!cfg.task.angle_dims.empty())
        theta.add_hline(cfg.task.target[cfg.task.angle_dims[0]]);
      emit_plot("swingup_theta", theta);

      SvgPlot phase("swingup: phase plane", angle + " [rad]",
                    rate + " [rad/s]");
      phase.add_line(csv.numeric(angle), csv.numeric(rate), "");
      emit_plot("swingup_phase", phase);
    } else if (path == "swingup/cost_history.csv") {
      if (!load(path, &csv)) continue;
      const auto it = csv.numeric("iteration");
      const auto cost = csv.numeric("cost");
      const auto acc = csv.numeric("accepted");
      std::vector<double> ax, ay, rx, ry;
      for (std::size_t i = 0; i < it.size(); ++i) {
        (acc[i] == 1.0 ? ax : rx).push_back(it[i]);
        (acc[i] == 1.0 ? ay : ry).push_back(cost[i]);
      }
      SvgPlot plot("swingup: cost per iteration", "iteration", "cost");
      plot.set_log_y(true);
      plot.add_line(std::move(ax), std::move(ay), "accepted");
      plot.add_scatter(std::move(rx), std::move(ry), "rejected");
      emit_plot("swingup_cost", plot);
    } else if (affix(path, "surrogate_bench/predictions_level_", ".csv",
                     &tag)) {
      if (!load(path, &csv)) continue;
      const auto [angle, rate] = angle_pair(cfg.task.system);
      SvgPlot plot("open-loop prediction, perturbation " + tag, "time [s]",
                   angle + " [rad]");
      const auto time = csv.numeric("time");
      for (const char* mn : {"true", "ltv", "sindy", "mlp"})
        if (csv.column_index(std::string(mn) + "_" + angle) >= 0)
          plot.add_line(time, csv.numeric(std::string(mn) + "_" + angle), mn);
      emit_plot("surrogate_bench_level_" + tag, plot);
    } else if (affix(path, "conditioning/conditioning_sindy_", ".csv",
                     &tag)) {
      if (!load(path, &csv)) continue;
      sindy_spectra.add_line(csv.numeric("index"),
                             csv.numeric("singular_value"), tag);
    } else if (affix(path, "conditioning/conditioning_mlp_", ".csv", &tag)) {
      if (!load(path, &csv)) continue;
      mlp_spectra.add_line(csv.numeric("index"),
                           csv.numeric("singular_value"), tag);
    } else if (path == "conditioning/conditioning_monomial_orders.csv") {
      if (!load(path, &csv)) continue;
      SvgPlot plot("monomial Gram conditioning vs order", "order",
                   "condition number");
      plot.set_log_y(true);
      plot.add_line(csv.numeric("order"), csv.numeric("empirical_cond"),
                    "empirical");
      plot.add_line(csv.numeric("order"), csv.numeric("analytic_cond"),
                    "analytic");
      emit_plot("conditioning_monomial", plot);
    } else if (affix(path, "variance/convergence_", "_predictions.csv",
                     &tag)) {
      if (!load(path, &csv)) continue;
      const auto [angle, rate] = angle_pair(cfg.task.system);
      SvgPlot plot("per-seed open-loop predictions, " + tag, "time [s]",
                   angle + " [rad]");
      const auto time = csv.numeric("time");
      for (const auto& col : csv.columns) {
        std::string seed;
        if (affix(col, "seed", "_" + angle, &seed))
          plot.add_line(time, csv.numeric(col), "seed " + seed);
      }
      emit_plot("variance_" + tag, plot);
    } else if (path == "control_bench/cost_curves.csv") {
      if (!load(path, &csv)) continue;
      SvgPlot plot("planning cost per iteration", "iteration", "cost");
      plot.set_log_y(true);
      std::map<std::string, std::pair<std::vector<double>,
                                      std::vector<double>>> series;
      const int mc = csv.column_index("mode");
      const auto it = csv.numeric("iteration");
      const auto cost = csv.numeric("cost");
      for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        auto& [xs, ys] = series[csv.rows[i][mc]];
        xs.push_back(it[i]);
        ys.push_back(cost[i]);
      }
      for (auto& [mode, xy] : series)
        plot.add_line(std::move(xy.first), std::move(xy.second), mode);
      emit_plot("control_bench_cost", plot);
    } else if (affix(path, "control_bench/trajectory_", ".csv", &tag)) {
      if (!load(path, &csv)) continue;
      const auto [angle, rate] = angle_pair(cfg.control_bench.task.system);
      SvgPlot plot("control benchmark: true-plant rollout, " + tag,
                   "time [s]", angle + " [rad]");
      plot.add_line(csv.numeric("time"), csv.numeric(angle), tag);
      if (!cfg.control_bench.task.angle_dims.empty())
        plot.add_hline(cfg.control_bench.task
                           .target[cfg.control_bench.task.angle_dims[0]]);
      emit_plot("control_bench_trajectory_" + tag, plot);
    }
  }

  if (sindy_spectra.series_count() > 0)
    emit_plot("conditioning_sindy", sindy_spectra);
  if (mlp_spectra.series_count() > 0)
    emit_plot("conditioning_mlp", mlp_spectra);

  m.record_timing("plots", timer.seconds());
  return m;
}

int run_subcommand(const std::string& name, const ExperimentConfig& cfg) {
  using Step = RunManifest (*)(const ExperimentConfig&);
  const std::pair<const char*, Step> steps[] = {
      {"swingup", &run_swingup},
      {"surrogate-bench", &run_surrogate_bench},
      {"conditioning", &run_conditioning_study},
      {"variance", &run_variance_study},
      {"control-bench", &run_control_bench}};

  const bool have_prior = std::filesystem::exists(
      std::filesystem::path(cfg.out_dir) / "manifest.json");
  if (name == "plots" && !have_prior) {
    std::cerr << "warning: no manifest under " << cfg.out_dir
              << ", nothing to plot\n";
    return 0;
  }

  RunManifest total(cfg.out_dir, cfg.config_hash);
  // Artifact and timing records of an earlier same-configuration run carry
  // over, so the studies compose one subcommand at a time into one output
  // directory.  Failures stay scoped to the invocation that hit them, and a
  // changed configuration starts the directory's record over.
  if (have_prior) {
    const RunManifest prior = RunManifest::load(cfg.out_dir);
    const bool same = prior.config_hash() == cfg.config_hash;
    if (!same && name == "plots")
      throw ConfigError(
          "the run under " + cfg.out_dir +
          " was produced by a different configuration; pass the same "
          "--config/--set/--out it was created with");
    if (same) {
      for (const ArtifactEntry& a : prior.artifacts()) total.adopt(a);
      for (const TimingEntry& t : prior.timings())
        total.record_timing(t.name, t.seconds);
    }
  }

  auto run_step = [&](const char* tag, Step fn) {
    try {
      total.absorb(fn(cfg));
    } catch (const ConfigError&) {
      throw;  // misconfiguration aborts the whole invocation
    } catch (const std::exception& e) {
      total.record_failure(std::string(kFatal) + tag, e.what());
    }
  };

  bool matched = false;
  for (const auto& [tag, fn] : steps) {
    if (name == tag) {
      run_step(tag, fn);
      matched = true;
    }
  }
  if (name == "all" || name == "plots") {
    if (name == "all")
      for (const auto& [tag, fn] : steps) run_step(tag, fn);
    total.absorb(emit_plots(cfg, total));
    matched = true;
  }
  if (!matched) throw ConfigError("unknown subcommand '" + name + "'");

  for (const std::string& bad : total.validate())
    total.record_failure(std::string(kFatal) + "manifest",
                         "artifact " + bad + " missing or altered on disk");
  total.write();

  bool fatal = false;
  for (const auto& f : total.failures()) {
    std::cerr << (f.name.rfind(kFatal, 0) == 0 ? "error: " : "warning: ")
              << f.name << ": " << f.error << "\n";
    if (f.name.rfind(kFatal, 0) == 0) fatal = true;
  }
  std::cout << name << ": " << total.artifacts().size() << " artifacts, "
            << total.failures().size() << " failures -> "
            << (std::filesystem::path(cfg.out_dir) / "manifest.json").string()
            << "\n";
  return fatal ? 3 : 0;
}

}  // namespace optlab
