#include "optlab/config.hpp"

#include <cmath>
#include <numbers>

#include "json.hpp"
#include "optlab/errors.hpp"
#include "optlab/hash.hpp"
#include "optlab/io.hpp"

namespace optlab {

namespace {

using nlohmann::json;

json vec_json(std::initializer_list<double> v) { return json(v); }

json task_defaults(const std::string& system) {
  const double pi = std::numbers::pi;
  if (system == "pendulum") {
    return {{"x0", vec_json({pi, 0.0})},
            {"target", vec_json({pi / 3.0, 0.0})},
            {"stage_weights", vec_json({0.0, 0.0})},
            {"control_weight", 1e-3},
            {"terminal_weights", vec_json({200.0, 200.0})},
            {"angle_dims", json::array({0})},
            {"horizon", 30},
            {"u_max", 10.0}};
  }
  if (system == "cartpole") {
    return {{"x0", vec_json({0.0, pi, 0.0, 0.0})},
            {"target", vec_json({0.0, pi / 3.0, 0.0, 0.0})},
            {"stage_weights", vec_json({0.0, 0.0, 0.0, 0.0})},
            {"control_weight", 1e-3},
            {"terminal_weights", vec_json({0.1, 200.0, 0.01, 200.0})},
            {"angle_dims", json::array({1})},
            {"horizon", 30},
            {"u_max", 10.0}};
  }
  throw ConfigError("unknown system '" + system + "'");
}

json ilqr_defaults(double gain_tol, std::uint64_t seed) {
  return {{"epsilon", 1e-7},      {"gain_tol", gain_tol},
          {"alpha_init", 1.0},    {"alpha_decay", 0.5},
          {"alpha_min", 1e-3},    {"mu_first", 1e-6},
          {"mu_factor", 10.0},    {"mu_max", 1e10},
          {"max_iterations", 150}, {"ltv_rollouts", 40},
          {"ltv_state_scale", 1e-3}, {"ltv_control_scale", 0.0},
          {"seed", seed},         {"fd_eps", 1e-6}};
}

json full_defaults(const std::string& system) {
  json j;
  j["schema"] = "optlab.config.v1";
  j["out_dir"] = "runs/lab";
  j["workers"] = 4;
  j["system"] = system;
  j["system_params"] = json::object();
  j["task"] = task_defaults(system);
  j["ilqr"] = ilqr_defaults(system == "cartpole" ? 0.05 : 1e-3, 7);
  j["sampling"] = {{"n_trajectories", 2000},
                   {"noise", "uniform"},
                   {"seed", 1},
                   {"split_ratio", 0.9}};
  const std::string angle = system == "cartpole" ? "1" : "0";
  j["sindy"] = {{"basis", "poly_trig:2:angles=" + angle},
                {"threshold", 0.0},
                {"svd_cutoff", 1e-12}};
  j["mlp"] = {{"hidden", json::array({16, 16})},
              {"lr", 0.05},
              {"epochs", 150},
              {"batch_size", 1024},
              {"init_seed", 3},
              {"shuffle_seed", 4}};
  j["ltv"] = {{"n_rollouts", 40},   {"state_scale", 1e-3},
              {"control_scale", 0.1}, {"mode", "random"},
              {"noise", "gaussian"}, {"seed", 2}};
  j["studies"] = {
      {"perturbation_levels", vec_json({0.1, 0.6})},
      {"seeds", json::array({1, 2, 3, 4, 5, 6, 7, 8, 9, 10})},
      {"bench_seeds", json::array({1, 2, 3})},
      {"sindy_variance_levels", vec_json({0.1, 1.0})},
      {"mlp_variance_levels", vec_json({0.05, 0.25})},
      {"mlp_variance_trajectories", 300},
      {"sindy_conditioning_level", 0.05},
      {"conditioning_bases",
       json::array({"poly_trig:3:angles=" + angle, "monomial:4"})},
      {"mlp_conditioning_levels", vec_json({0.05, 0.15})},
      {"mlp_probe_epochs", json::array({0, 50, 150})},
      {"conditioning_orders", json::array({1, 2, 3, 4, 5, 6, 7, 8})},
      {"conditioning_samples", 1000000},
      {"conditioning_seed", 123}};
  j["control_bench"] = {{"system", "cartpole"},
                        {"system_params", json::object()},
                        {"task", task_defaults("cartpole")},
                        {"ilqr", ilqr_defaults(0.05, 7)},
                        {"sindy_basis", "poly_trig:2:angles=1"},
                        {"train_level", 0.4},
                        {"train_trajectories", 500},
                        {"train_seed", 21},
                        {"init_seeds", json::array({1, 2, 3, 4, 5})},
                        {"init_scale", 0.2}};
  return j;
}

const char* const kParamNames[] = {
    "dt",     "u_max",     "gravity",   "mass",       "length",
    "damping", "cart_mass", "pole_mass", "pole_length"};

// Any key the defaults do not know is a typo, except inside system_params,
// whose optional keys are checked against the physical parameter list.
void check_keys(const json& user, const json& defaults,
                const std::string& prefix) {
  if (!user.is_object()) return;
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (key == "system_params" && defaults.contains(key)) {
      for (const auto& [pk, pv] : value.items()) {
        bool known = false;
        for (const char* name : kParamNames)
          if (pk == name) known = true;
        if (!known)
          throw ConfigError("unknown system parameter '" + path + "." + pk +
                            "'");
        (void)pv;
      }
      continue;
    }
    if (!defaults.contains(key))
      throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object()) check_keys(value, defaults.at(key), path);
  }
}

void merge(json& base, const json& over) {
  if (!over.is_object() || !base.is_object()) {
    base = over;
    return;
  }
  for (const auto& [key, value] : over.items()) {
    if (base.contains(key))
      merge(base[key], value);
    else
      base[key] = value;
  }
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + item + "' is not key.path=value");
    std::string pointer = "/" + item.substr(0, eq);
    for (auto& c : pointer)
      if (c == '.') c = '/';
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // unquoted strings pass through
    }
    try {
      doc[json::json_pointer(pointer)] = value;
    } catch (const json::exception& e) {
      throw ConfigError("cannot apply override '" + item + "': " + e.what());
    }
  }
}

// Readers that turn nlohmann's type errors into messages naming the key.

template <typename T>
T req(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

Eigen::VectorXd req_vec(const json& j, const std::string& key) {
  const auto v = req<std::vector<double>>(j, key);
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

NoiseKind parse_noise(const std::string& s, const std::string& key) {
  if (s == "uniform") return NoiseKind::Uniform;
  if (s == "gaussian") return NoiseKind::Gaussian;
  throw ConfigError("config key '" + key + "': unknown noise kind '" + s +
                    "'");
}

TaskSection parse_task(const json& sys_holder, const json& t) {
  TaskSection task;
  task.system = req<std::string>(sys_holder, "system");
  if (sys_holder.contains("system_params"))
    for (const auto& [k, v] : sys_holder.at("system_params").items())
      task.system_params[k] = v.get<double>();
  task.x0 = req_vec(t, "x0");
  task.target = req_vec(t, "target");
  task.stage_weights = req_vec(t, "stage_weights");
  task.control_weight = req<double>(t, "control_weight");
  task.terminal_weights = req_vec(t, "terminal_weights");
  task.angle_dims = req<std::vector<int>>(t, "angle_dims");
  task.horizon = req<int>(t, "horizon");
  task.u_max = req<double>(t, "u_max");
  return task;
}

IlqrOptions parse_ilqr(const json& j) {
  IlqrOptions o;
  o.epsilon = req<double>(j, "epsilon");
  o.gain_tol = req<double>(j, "gain_tol");
  o.alpha_init = req<double>(j, "alpha_init");
  o.alpha_decay = req<double>(j, "alpha_decay");
  o.alpha_min = req<double>(j, "alpha_min");
  o.mu_first = req<double>(j, "mu_first");
  o.mu_factor = req<double>(j, "mu_factor");
  o.mu_max = req<double>(j, "mu_max");
  o.max_iterations = req<int>(j, "max_iterations");
  o.ltv_rollouts = req<int>(j, "ltv_rollouts");
  o.ltv_state_scale = req<double>(j, "ltv_state_scale");
  o.ltv_control_scale = req<double>(j, "ltv_control_scale");
  o.seed = req<std::uint64_t>(j, "seed");
  o.fd_eps = req<double>(j, "fd_eps");
  return o;
}

void validate_task(const TaskSection& task, const std::string& label) {
  const auto system = build_system(task);  // also checks params and name
  const int n = system->state_dim();
  auto dim_check = [&](const Eigen::VectorXd& v, const char* what) {
    if (v.size() != n)
      throw ConfigError(label + "." + what + " has " +
                        std::to_string(v.size()) + " entries, " + task.system +
                        " has " + std::to_string(n) + " states");
  };
  dim_check(task.x0, "x0");
  dim_check(task.target, "target");
  dim_check(task.stage_weights, "stage_weights");
  dim_check(task.terminal_weights, "terminal_weights");
  for (int d : task.angle_dims)
    if (d < 0 || d >= n)
      throw ConfigError(label + ".angle_dims entry " + std::to_string(d) +
                        " out of range");
  if (task.horizon < 1) throw ConfigError(label + ".horizon must be >= 1");
  if (task.control_weight <= 0.0)
    throw ConfigError(label + ".control_weight must be positive");
  if (task.u_max < 0.0)
    throw ConfigError(label + ".u_max must be nonnegative");
}

}  // namespace

std::string default_config_json(const std::string& system) {
  return full_defaults(system).dump(2) + "\n";
}

ExperimentConfig load_experiment_config(
    const std::string& config_path, const std::vector<std::string>& overrides,
    const std::string& out_dir_override) {
  json user = json::object();
  if (!config_path.empty()) {
    try {
      user = json::parse(read_text_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError("cannot parse config " + config_path + ": " +
                        e.what());
    }
    if (!user.is_object())
      throw ConfigError("config " + config_path + " is not a JSON object");
  }
  apply_overrides(user, overrides);

  std::string system = "pendulum";
  if (user.contains("system")) system = req<std::string>(user, "system");
  json doc = full_defaults(system);
  check_keys(user, doc, "");
  merge(doc, user);
  if (!out_dir_override.empty()) doc["out_dir"] = out_dir_override;
  if (doc.at("schema").get<std::string>() != "optlab.config.v1")
    throw ConfigError("unsupported config schema '" +
                      doc.at("schema").get<std::string>() + "'");

  ExperimentConfig cfg;
  cfg.canonical_json = doc.dump(2) + "\n";
  // The hash identifies what determines the artifact bytes; destination and
  // scheduling do not, so runs of one configuration share a hash wherever
  // and however parallel they execute.
  json hashed = doc;
  hashed.erase("out_dir");
  hashed.erase("workers");
  cfg.config_hash = fnv1a(hashed.dump());
  cfg.out_dir = req<std::string>(doc, "out_dir");
  cfg.workers = req<int>(doc, "workers");
  cfg.task = parse_task(doc, doc.at("task"));
  cfg.ilqr = parse_ilqr(doc.at("ilqr"));

  const json& sampling = doc.at("sampling");
  cfg.sampling.n_trajectories = req<int>(sampling, "n_trajectories");
  cfg.sampling.noise =
      parse_noise(req<std::string>(sampling, "noise"), "sampling.noise");
  cfg.sampling.seed = req<std::uint64_t>(sampling, "seed");
  cfg.sampling.split_ratio = req<double>(sampling, "split_ratio");

  const json& sindy = doc.at("sindy");
  cfg.sindy.basis = req<std::string>(sindy, "basis");
  cfg.sindy.threshold = req<double>(sindy, "threshold");
  cfg.sindy.svd_cutoff = req<double>(sindy, "svd_cutoff");

  const json& mlp = doc.at("mlp");
  cfg.mlp.hidden = req<std::vector<int>>(mlp, "hidden");
  cfg.mlp.lr = req<double>(mlp, "lr");
  cfg.mlp.epochs = req<int>(mlp, "epochs");
  cfg.mlp.batch_size = req<int>(mlp, "batch_size");
  cfg.mlp.init_seed = req<std::uint64_t>(mlp, "init_seed");
  cfg.mlp.shuffle_seed = req<std::uint64_t>(mlp, "shuffle_seed");

  const json& ltv = doc.at("ltv");
  cfg.ltv.n_rollouts = req<int>(ltv, "n_rollouts");
  cfg.ltv.state_scale = req<double>(ltv, "state_scale");
  cfg.ltv.control_scale = req<double>(ltv, "control_scale");
  const std::string mode = req<std::string>(ltv, "mode");
  if (mode == "random")
    cfg.ltv.mode = LtvFitMode::Random;
  else if (mode == "central-diff")
    cfg.ltv.mode = LtvFitMode::CentralDiff;
  else
    throw ConfigError("config key 'ltv.mode': unknown mode '" + mode + "'");
  cfg.ltv.noise = parse_noise(req<std::string>(ltv, "noise"), "ltv.noise");
  cfg.ltv.seed = req<std::uint64_t>(ltv, "seed");

  const json& st = doc.at("studies");
  cfg.studies.perturbation_levels =
      req<std::vector<double>>(st, "perturbation_levels");
  cfg.studies.seeds = req<std::vector<std::uint64_t>>(st, "seeds");
  cfg.studies.bench_seeds = req<std::vector<std::uint64_t>>(st, "bench_seeds");
  cfg.studies.sindy_variance_levels =
      req<std::vector<double>>(st, "sindy_variance_levels");
  cfg.studies.mlp_variance_levels =
      req<std::vector<double>>(st, "mlp_variance_levels");
  cfg.studies.mlp_variance_trajectories =
      req<int>(st, "mlp_variance_trajectories");
  cfg.studies.sindy_conditioning_level =
      req<double>(st, "sindy_conditioning_level");
  cfg.studies.conditioning_bases =
      req<std::vector<std::string>>(st, "conditioning_bases");
  cfg.studies.mlp_conditioning_levels =
      req<std::vector<double>>(st, "mlp_conditioning_levels");
  cfg.studies.mlp_probe_epochs = req<std::vector<int>>(st, "mlp_probe_epochs");
  cfg.studies.conditioning_orders =
      req<std::vector<int>>(st, "conditioning_orders");
  cfg.studies.conditioning_samples =
      req<long long>(st, "conditioning_samples");
  cfg.studies.conditioning_seed = req<std::uint64_t>(st, "conditioning_seed");

  const json& cb = doc.at("control_bench");
  cfg.control_bench.task = parse_task(cb, cb.at("task"));
  cfg.control_bench.ilqr = parse_ilqr(cb.at("ilqr"));
  cfg.control_bench.sindy_basis = req<std::string>(cb, "sindy_basis");
  cfg.control_bench.train_level = req<double>(cb, "train_level");
  cfg.control_bench.train_trajectories = req<int>(cb, "train_trajectories");
  cfg.control_bench.train_seed = req<std::uint64_t>(cb, "train_seed");
  cfg.control_bench.init_seeds =
      req<std::vector<std::uint64_t>>(cb, "init_seeds");
  cfg.control_bench.init_scale = req<double>(cb, "init_scale");

  // Cross-field validation.
  if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  validate_task(cfg.task, "task");
  validate_task(cfg.control_bench.task, "control_bench.task");
  if (cfg.sampling.n_trajectories < 1)
    throw ConfigError("sampling.n_trajectories must be >= 1");
  if (cfg.sampling.split_ratio <= 0.0 || cfg.sampling.split_ratio >= 1.0)
    throw ConfigError("sampling.split_ratio must lie in (0, 1)");
  if (cfg.mlp.hidden.empty())
    throw ConfigError("mlp.hidden must list at least one layer width");
  for (int w : cfg.mlp.hidden)
    if (w < 1) throw ConfigError("mlp.hidden widths must be positive");
  if (cfg.mlp.lr <= 0.0) throw ConfigError("mlp.lr must be positive");
  if (cfg.mlp.epochs < 0) throw ConfigError("mlp.epochs must be >= 0");
  if (cfg.studies.seeds.size() < 2)
    throw ConfigError("studies.seeds needs at least 2 seeds");
  if (cfg.studies.bench_seeds.empty())
    throw ConfigError("studies.bench_seeds must not be empty");
  auto nonneg_levels = [](const std::vector<double>& levels,
                          const char* key) {
    for (double l : levels)
      if (l < 0.0)
        throw ConfigError(std::string(key) + " entries must be >= 0");
  };
  nonneg_levels(cfg.studies.perturbation_levels,
                "studies.perturbation_levels");
  nonneg_levels(cfg.studies.sindy_variance_levels,
                "studies.sindy_variance_levels");
  nonneg_levels(cfg.studies.mlp_variance_levels,
                "studies.mlp_variance_levels");
  nonneg_levels(cfg.studies.mlp_conditioning_levels,
                "studies.mlp_conditioning_levels");
  if (cfg.studies.mlp_variance_trajectories < 1)
    throw ConfigError("studies.mlp_variance_trajectories must be >= 1");
  for (int order : cfg.studies.conditioning_orders)
    if (order < 1)
      throw ConfigError("studies.conditioning_orders must be >= 1");
  if (cfg.studies.conditioning_samples < 10)
    throw ConfigError("studies.conditioning_samples must be >= 10");
  for (int e : cfg.studies.mlp_probe_epochs)
    if (e < 0) throw ConfigError("studies.mlp_probe_epochs must be >= 0");
  if (cfg.control_bench.train_level < 0.0)
    throw ConfigError("control_bench.train_level must be >= 0");
  if (cfg.control_bench.train_trajectories < 1)
    throw ConfigError("control_bench.train_trajectories must be >= 1");
  if (cfg.control_bench.init_seeds.empty())
    throw ConfigError("control_bench.init_seeds must not be empty");
  if (cfg.control_bench.init_scale < 0.0)
    throw ConfigError("control_bench.init_scale must be >= 0");
  return cfg;
}

std::unique_ptr<System> build_system(const TaskSection& task) {
  SystemParams params = default_params(task.system);
  for (const auto& [key, value] : task.system_params) {
    if (key == "dt")
      params.dt = value;
    else if (key == "u_max")
      params.u_max = value;
    else if (key == "gravity")
      params.gravity = value;
    else if (key == "mass")
      params.mass = value;
    else if (key == "length")
      params.length = value;
    else if (key == "damping")
      params.damping = value;
    else if (key == "cart_mass")
      params.cart_mass = value;
    else if (key == "pole_mass")
      params.pole_mass = value;
    else if (key == "pole_length")
      params.pole_length = value;
    else
      throw ConfigError("unknown system parameter '" + key + "'");
  }
  // The solver box and the sampling saturation must describe the same
  // actuator, so a task-level limit overrides the plant's.
  if (task.u_max > 0.0) params.u_max = task.u_max;
  return make_system(task.system, params);
}

CostSpec build_cost(const TaskSection& task) {
  CostSpec cost;
  cost.W = task.stage_weights.asDiagonal();
  cost.R_u = task.control_weight *
             Eigen::MatrixXd::Identity(1, 1);  // both plants are single-input
  cost.W_T = task.terminal_weights.asDiagonal();
  cost.x_target = task.target;
  cost.angle_dims = task.angle_dims;
  cost.horizon = task.horizon;
  return cost;
}

std::vector<std::string> state_names(const std::string& system, int n) {
  std::vector<std::string> names;
  if (system == "pendulum")
    names = {"theta", "omega"};
  else if (system == "cartpole")
    names = {"x", "theta", "xdot", "thetadot"};
  while (static_cast<int>(names.size()) < n)
    names.push_back("x" + std::to_string(names.size()));
  names.resize(n);
  return names;
}

}  // namespace optlab
