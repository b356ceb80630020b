// Batch CLI for stability-constrained linear state-space identification:
// generate benchmark data, fit models, evaluate them, run comparison sweeps,
// and inspect saved models.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "sysid/baseline.hpp"
#include "sysid/model_io.hpp"
#include "sysid/run_config.hpp"
#include "sysid/synth.hpp"
#include "sysid/trainer.hpp"
#include "sysid/version.hpp"

namespace fs = std::filesystem;
using namespace sysid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

/// Run metadata; not part of any byte-compared artifact (it carries timing).
void write_manifest(const fs::path& dir, const std::string& command, const Json& config,
                    std::uint64_t seed, double wall_s) {
  Json m;
  m["command"] = command;
  m["config_hash"] = hex64(fnv1a(config.dump()));
  m["seed"] = seed;
  m["version"] = std::string(kToolName) + " " + kVersion;
  m["wall_time_s"] = wall_s;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::uint64_t env_seed_or(std::uint64_t fallback) {
  if (const char* env = std::getenv("STABLE_SYSID_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return static_cast<std::uint64_t>(v);
    throw ConfigError("STABLE_SYSID_SEED is not an integer");
  }
  return fallback;
}

std::string matrix_lines(const Matrix& m, const std::string& indent) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += indent + "[";
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ", ";
      out += format_double(m(i, j));
    }
    out += "]\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  GeneratorSpec spec;
  std::string out_dir = ".";
  bool seed_given = false;
};

int cmd_generate(GenerateArgs args) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!args.seed_given) args.spec.seed = env_seed_or(0);
  args.spec.validate();
  fs::create_directories(args.out_dir);
  SystemMatrices sys = random_stable_system(args.spec);
  if (args.spec.sparsity_fraction > 0)
    sys = sparsify(sys, args.spec.sparsity_fraction, args.spec.seed);
  DatasetTriple data = generate_dataset(sys, args.spec);
  save_csv(data.train, (fs::path(args.out_dir) / "train.csv").string());
  save_csv(data.val, (fs::path(args.out_dir) / "val.csv").string());
  save_csv(data.test, (fs::path(args.out_dir) / "test.csv").string());
  Json truth = system_to_json(sys);
  truth["spectral_radius_A"] = linalg::spectral_radius(sys.A);
  Json spec_json;
  spec_json["n"] = args.spec.n;
  spec_json["m"] = args.spec.m;
  spec_json["p"] = args.spec.p;
  spec_json["target_spectral_radius"] = args.spec.target_spectral_radius;
  spec_json["sparsity_fraction"] = args.spec.sparsity_fraction;
  spec_json["noise_std"] = args.spec.noise_std;
  spec_json["gbn_switch_prob"] = args.spec.gbn_switch_prob;
  spec_json["trajectory_length"] = args.spec.trajectory_length;
  spec_json["seed"] = args.spec.seed;
  spec_json["state_targets"] = args.spec.state_targets;
  truth["generator"] = spec_json;
  write_text(fs::path(args.out_dir) / "truth.json", truth.dump(2) + "\n");
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(args.out_dir, "generate", spec_json, args.spec.seed, wall);
  std::cout << "wrote train/val/test CSVs and truth.json to " << args.out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

void apply_overrides(Json& config, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    try {
      config[key] = Json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      config[key] = raw;  // bare strings allowed
    }
  }
}

std::string history_csv(const FitResult& res) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < res.train_history.size(); ++e)
    out += std::to_string(e + 1) + "," + format_double(res.train_history[e]) + "," +
           format_double(res.val_history[e]) + "\n";
  return out;
}

struct FitOutput {
  StateSpaceModel model;
  FitResult result;
  RunConfig config;
};

FitOutput run_fit(const Json& config_json) {
  RunConfig cfg = parse_run_config(config_json);
  if (cfg.n == 0) throw ConfigError("key 'n' is required");
  if (cfg.train_data.empty() || cfg.val_data.empty())
    throw ConfigError("train_data and val_data are required");
  TrajectorySet train = load_csv(cfg.train_data);
  TrajectorySet val =
      load_csv(cfg.val_data, CsvDims{train.input_dim, train.target_dim, train.kind});
  TrajectorySet test;
  if (!cfg.test_data.empty())
    test = load_csv(cfg.test_data, CsvDims{train.input_dim, train.target_dim, train.kind});
  if (cfg.input_output != (train.kind == TargetKind::output))
    throw ConfigError(cfg.input_output ? "input_output=true requires y_* data"
                                       : "input_output=false requires x_* data");
  FitOutput out{build_model(cfg, train.input_dim, train.target_dim), FitResult{}, cfg};
  TrainConfig tc = to_train_config(cfg);
  out.result = fit(out.model, train, val, test, tc);
  return out;
}

int cmd_fit(const std::string& config_path, const std::vector<std::string>& sets,
            std::optional<std::uint64_t> seed_flag, std::optional<std::string> out_flag) {
  const auto t0 = std::chrono::steady_clock::now();
  Json config = load_json_file(config_path);
  apply_overrides(config, sets);
  if (seed_flag) config["seed"] = *seed_flag;
  if (out_flag) config["output_dir"] = *out_flag;

  FitOutput out = run_fit(config);
  const fs::path dir(out.config.output_dir);
  fs::create_directories(dir);
  save_model(out.model, (dir / "model.json").string());
  write_text(dir / "history.csv", history_csv(out.result));

  Json metrics;
  metrics["final_train_loss"] = out.result.final_train_loss;
  metrics["best_val_loss"] = out.result.best_val_loss;
  metrics["best_epoch"] = out.result.best_epoch;
  metrics["test_loss"] = out.result.test_loss;
  metrics["spectral_radius_A"] = linalg::spectral_radius(out.result.A);
  if (out.model.a_mode != AMode::free)
    metrics["stability_bound"] = out.model.stability_bound();
  metrics["masked_trajectory_warnings"] = out.result.masked_trajectory_warnings;
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir, "fit", config, to_train_config(out.config).seed, wall);
  std::cout << "best epoch " << out.result.best_epoch << " reached after "
            << format_double(out.result.best_wall_time_s) << " s (total fit time "
            << format_double(wall) << " s)\n"
            << "val " << format_double(out.result.best_val_loss) << ", test "
            << format_double(out.result.test_loss) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& loss_name) {
  StateSpaceModel model = load_model(model_path);
  TrajectorySet data = load_csv(data_path);
  const auto kind = loss_kind_from_string(loss_name);
  EvalResult ev = evaluate(model, data, kind);
  Json j;
  j["loss"] = loss_name;
  j["mean"] = ev.mean;
  Json per = Json::array();
  for (std::size_t i = 0; i < ev.per_trajectory.size(); ++i) {
    Json row;
    row["traj_id"] = data.trajectories[i].id;
    row["value"] = ev.per_trajectory[i];
    per.push_back(row);
  }
  j["per_trajectory"] = per;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& model_path) {
  StateSpaceModel model = load_model(model_path);
  const Matrix a = model.effective_A();
  std::cout << "model: n=" << model.n << " m=" << model.m << " p=" << model.p
            << " a_mode=" << to_string(model.a_mode)
            << (model.input_output ? " input-output" : " input-state")
            << (model.autonomous ? " autonomous" : "") << "\n";
  std::cout << "A (effective):\n" << matrix_lines(a, "  ");
  std::cout << "B:\n" << matrix_lines(model.effective_B(), "  ");
  if (model.input_output) {
    std::cout << "C:\n" << matrix_lines(model.effective_C(), "  ");
    if (model.id_D) std::cout << "D:\n" << matrix_lines(model.effective_D(), "  ");
  }
  std::cout << "eigenvalues of A:\n";
  for (const auto& lam : linalg::eigenvalues(a))
    std::cout << "  " << format_double(lam.real()) << (lam.imag() >= 0 ? " + " : " - ")
              << format_double(std::fabs(lam.imag()))
              << "i  (|.| = " << format_double(std::abs(lam)) << ")\n";
  std::cout << "spectral radius: " << format_double(linalg::spectral_radius(a)) << "\n";
  if (model.a_mode != AMode::free)
    std::cout << "stability bound: " << format_double(model.stability_bound()) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchCell {
  std::size_t system = 0;
  std::string method;
  std::uint64_t seed = 0;
  std::string key;
  double mse = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
  bool from_manifest = false;
};

GeneratorSpec generator_from_json(const Json& j) {
  static const std::set<std::string> known = {"n",           "m",        "p",
                                              "rho",         "sparsity", "noise_std",
                                              "switch_prob", "length",   "seed",
                                              "state_targets"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown system key '" + key + "'");
  GeneratorSpec g;
  if (j.contains("n")) g.n = j.at("n").get<std::size_t>();
  if (j.contains("m")) g.m = j.at("m").get<std::size_t>();
  if (j.contains("p")) g.p = j.at("p").get<std::size_t>();
  if (j.contains("rho")) g.target_spectral_radius = j.at("rho").get<double>();
  if (j.contains("sparsity")) g.sparsity_fraction = j.at("sparsity").get<double>();
  if (j.contains("noise_std")) g.noise_std = j.at("noise_std").get<double>();
  if (j.contains("switch_prob")) g.gbn_switch_prob = j.at("switch_prob").get<double>();
  if (j.contains("length")) g.trajectory_length = j.at("length").get<std::size_t>();
  if (j.contains("seed")) g.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("state_targets")) g.state_targets = j.at("state_targets").get<bool>();
  g.validate();
  return g;
}

Matrix sparsity_pattern(const Matrix& m) {
  Matrix mask(m.rows(), m.cols());
  for (std::size_t k = 0; k < m.size(); ++k) mask[k] = (m[k] != 0.0) ? 1.0 : 0.0;
  return mask;
}

Json matrix_rows_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

int cmd_bench(const std::string& sweep_path, std::optional<std::string> out_flag,
              std::optional<unsigned> jobs_flag) {
  const auto t0 = std::chrono::steady_clock::now();
  Json sweep = load_json_file(sweep_path);
  static const std::set<std::string> known = {"base",       "systems", "methods",
                                              "seeds",      "output_dir", "jobs"};
  for (const auto& [key, _] : sweep.items())
    if (!known.count(key)) throw ConfigError("unknown sweep key '" + key + "'");
  if (!sweep.contains("systems") || !sweep.contains("methods") || !sweep.contains("seeds"))
    throw ConfigError("sweep needs 'systems', 'methods' and 'seeds'");
  const Json base = sweep.value("base", Json::object());
  std::string out_dir = sweep.value("output_dir", std::string("."));
  if (out_flag) out_dir = *out_flag;
  unsigned jobs = sweep.value("jobs", 1u);
  if (jobs_flag) jobs = *jobs_flag;
  if (jobs < 1) jobs = 1;
  fs::create_directories(out_dir);

  struct MethodSpec {
    std::string name;
    Json overrides;
    bool use_true_masks = false;
  };
  std::vector<MethodSpec> methods;
  for (const Json& mj : sweep.at("methods")) {
    MethodSpec ms;
    ms.name = mj.at("name").get<std::string>();
    ms.overrides = mj.value("overrides", Json::object());
    ms.use_true_masks = mj.value("use_true_masks", false);
    methods.push_back(std::move(ms));
  }
  if (methods.size() < 2) throw ConfigError("bench needs at least 2 methods");
  std::vector<std::uint64_t> seeds;
  for (const Json& sj : sweep.at("seeds")) seeds.push_back(sj.get<std::uint64_t>());
  if (seeds.empty()) throw ConfigError("bench needs at least 1 seed");

  // Generate each system once, up front.
  struct SystemData {
    std::string id;
    SystemMatrices sys;
    DatasetTriple data;
  };
  std::vector<SystemData> systems;
  {
    std::size_t idx = 0;
    for (const Json& sj : sweep.at("systems")) {
      GeneratorSpec g = generator_from_json(sj);
      SystemData sd;
      sd.id = "s" + std::to_string(idx++);
      sd.sys = random_stable_system(g);
      if (g.sparsity_fraction > 0) sd.sys = sparsify(sd.sys, g.sparsity_fraction, g.seed);
      sd.data = generate_dataset(sd.sys, g);
      systems.push_back(std::move(sd));
    }
  }

  // Resumable cell manifest.
  const fs::path manifest_path = fs::path(out_dir) / "results_manifest.json";
  Json old_cells = Json::object();
  if (fs::exists(manifest_path)) {
    Json prev = load_json_file(manifest_path.string());
    if (prev.contains("cells")) old_cells = prev.at("cells");
  }

  std::vector<BenchCell> cells;
  for (std::size_t si = 0; si < systems.size(); ++si)
    for (const auto& ms : methods)
      for (std::uint64_t seed : seeds) {
        BenchCell c;
        c.system = si;
        c.method = ms.name;
        c.seed = seed;
        c.key = systems[si].id + "|" + ms.name + "|seed" + std::to_string(seed);
        if (old_cells.contains(c.key)) {
          const Json& prev = old_cells.at(c.key);
          c.from_manifest = true;
          c.ok = prev.value("status", "") == std::string("ok");
          if (c.ok) c.mse = prev.at("mse").get<double>();
          if (prev.contains("error")) c.error = prev.at("error").get<std::string>();
        }
        cells.push_back(std::move(c));
      }

  auto method_by_name = [&](const std::string& name) -> const MethodSpec& {
    for (const auto& ms : methods)
      if (ms.name == name) return ms;
    throw Error("method lookup failed");
  };

  auto run_cell = [&](BenchCell& cell) {
    try {
      const SystemData& sd = systems[cell.system];
      const MethodSpec& ms = method_by_name(cell.method);
      Json config = base;
      for (const auto& [k, v] : ms.overrides.items()) config[k] = v;
      config["seed"] = cell.seed;
      if (ms.use_true_masks) {
        config["mask_A"] = matrix_rows_json(sparsity_pattern(sd.sys.A));
        config["mask_B"] = matrix_rows_json(sparsity_pattern(sd.sys.B));
        if (config.value("input_output", true)) {
          config["mask_C"] = matrix_rows_json(sparsity_pattern(sd.sys.C));
          config["mask_D"] = matrix_rows_json(sparsity_pattern(sd.sys.D));
        }
      }
      RunConfig cfg = parse_run_config(config);
      if (cfg.n == 0) throw ConfigError("bench base config needs 'n'");
      const TrajectorySet& train = sd.data.train;
      if (cell.method == "ls") {
        LsInit ls = ls_initialize(train);
        StateSpaceModel model(cfg.n, train.input_dim, 0);
        model.input_output = false;
        model.A.value = ls.A;
        model.B.value = ls.B;
        cell.mse = mean_multistep_mse(model, sd.data.test);
      } else {
        StateSpaceModel model = build_model(cfg, train.input_dim, train.target_dim);
        TrainConfig tc = to_train_config(cfg);
        tc.seed = cell.seed;
        FitResult res = fit(model, train, sd.data.val, sd.data.test, tc);
        cell.mse = res.test_loss;
      }
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  };

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> executed{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      if (cells[i].from_manifest) continue;  // resume: skip completed cells
      run_cell(cells[i]);
      ++executed;
    }
  };
  {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Deterministic manifest, keyed by cell (no timing data, so reruns diff empty).
  Json cells_json = Json::object();
  for (const auto& c : cells) {
    Json cj;
    cj["status"] = c.ok ? "ok" : "failed";
    if (c.ok) cj["mse"] = c.mse;
    if (!c.error.empty()) cj["error"] = c.error;
    cells_json[c.key] = cj;
  }
  Json manifest;
  manifest["config_hash"] = hex64(fnv1a(sweep.dump()));
  manifest["version"] = std::string(kToolName) + " " + kVersion;
  manifest["cells"] = cells_json;
  write_text(manifest_path, manifest.dump(2) + "\n");

  // Aggregations: best seed per (system, method), then normalized tables.
  std::vector<std::string> method_names;
  for (const auto& ms : methods) method_names.push_back(ms.name);
  std::vector<std::string> system_ids;
  for (const auto& sd : systems) system_ids.push_back(sd.id);
  Matrix best(methods.size(), systems.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& c : cells) {
    if (!c.ok) continue;
    std::size_t mi = 0;
    while (method_names[mi] != c.method) ++mi;
    double& slot = best(mi, c.system);
    if (std::isnan(slot) || c.mse < slot) slot = c.mse;
  }
  for (std::size_t k = 0; k < best.size(); ++k)
    if (std::isnan(best[k]))
      throw NumericalError("bench: a (system, method) pair has no successful run; see " +
                           manifest_path.string());
  ComparisonTable table = build_comparison(method_names, system_ids, best);
  write_text(fs::path(out_dir) / "comparison.csv", comparison_csv(table));
  write_text(fs::path(out_dir) / "quantiles.csv", quantiles_csv(table));

  // All-seed table, normalized by each system's best attained value.
  std::string all = "system_id,method,seed,mse,normalized_mse\n";
  for (const auto& c : cells) {
    if (!c.ok) continue;
    double best_of_system = std::numeric_limits<double>::infinity();
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
      best_of_system = std::min(best_of_system, best(mi, c.system));
    all += systems[c.system].id + "," + c.method + "," + std::to_string(c.seed) + "," +
           format_double(c.mse) + "," + format_double(c.mse / best_of_system) + "\n";
  }
  write_text(fs::path(out_dir) / "comparison_all_seeds.csv", all);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(out_dir, "bench", sweep, seeds.front(), wall);
  std::cout << "bench: " << executed.load() << " cells executed, "
            << (cells.size() - executed.load()) << " reused; tables written to " << out_dir
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kToolName) +
               " - stability-constrained linear state-space system identification"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write seeded benchmark CSVs + truth model");
  generate->add_option("--n", gen.spec.n, "state dimension")->required();
  generate->add_option("--m", gen.spec.m, "input dimension")->required();
  generate->add_option("--p", gen.spec.p, "output dimension")->required();
  generate->add_option("--length", gen.spec.trajectory_length, "steps per trajectory");
  generate->add_option("--noise-std", gen.spec.noise_std, "training-target noise std");
  generate->add_option("--switch-prob", gen.spec.gbn_switch_prob, "GBN flip probability");
  generate->add_option("--rho", gen.spec.target_spectral_radius, "spectral radius of A");
  generate->add_option("--sparsity", gen.spec.sparsity_fraction, "fraction of zeroed entries");
  generate->add_flag("--state-targets", gen.spec.state_targets, "emit x instead of y");
  auto* gen_seed = generate->add_option("--seed", gen.spec.seed, "generator seed");
  generate->add_option("--out", gen.out_dir, "output directory");

  std::string fit_config;
  std::vector<std::string> fit_sets;
  std::optional<std::uint64_t> fit_seed;
  std::optional<std::string> fit_out;
  auto* fit_cmd = app.add_subcommand("fit", "train a model from a JSON run config");
  fit_cmd->add_option("--config", fit_config, "run config JSON")->required();
  fit_cmd->add_option("--set", fit_sets, "override a config key, key=value (repeatable)");
  fit_cmd->add_option("--seed", fit_seed, "override the seed");
  fit_cmd->add_option("--output-dir", fit_out, "override the output directory");

  std::string eval_model, eval_data, eval_loss = "mse";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on a CSV data set");
  eval_cmd->add_option("--model", eval_model, "model JSON")->required();
  eval_cmd->add_option("--data", eval_data, "trajectory CSV")->required();
  eval_cmd->add_option("--loss", eval_loss, "mse | mae | mape");

  std::string bench_sweep;
  std::optional<std::string> bench_out;
  std::optional<unsigned> bench_jobs;
  auto* bench_cmd = app.add_subcommand("bench", "run a (system x method x seed) sweep");
  bench_cmd->add_option("--sweep", bench_sweep, "sweep config JSON")->required();
  bench_cmd->add_option("--out", bench_out, "output directory");
  bench_cmd->add_option("--jobs", bench_jobs, "worker threads");

  std::string inspect_model;
  auto* inspect_cmd = app.add_subcommand("inspect", "print a model's matrices and eigenvalues");
  inspect_cmd->add_option("--model", inspect_model, "model JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\nRun with --help for usage.\n";
    return kExitConfig;
  }

  try {
    gen.seed_given = gen_seed->count() > 0;
    if (generate->parsed()) return cmd_generate(gen);
    if (fit_cmd->parsed()) return cmd_fit(fit_config, fit_sets, fit_seed, fit_out);
    if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_data, eval_loss);
    if (bench_cmd->parsed()) return cmd_bench(bench_sweep, bench_out, bench_jobs);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_model);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
