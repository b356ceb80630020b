// Acceptance suite. Each numbered criterion runs at its stated tolerance and
// prints exactly one [PASS]/[FAIL] line; the process exits nonzero if any
// executed criterion failed. Run with no arguments for all criteria or with
// an index (1..8) for a single one.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "sysid/baseline.hpp"
#include "sysid/model_io.hpp"
#include "sysid/run_config.hpp"
#include "sysid/synth.hpp"
#include "sysid/trainer.hpp"

namespace fs = std::filesystem;
using namespace sysid;

namespace {

std::string g_binary;  // CLI under test (criteria 7 and 8)

struct Outcome {
  bool pass = false;
  std::string detail;
};

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double std = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = rng.gaussian(0, std);
  return m;
}

Matrix random_mask(std::size_t n, double zero_fraction, Rng& rng) {
  Matrix m = Matrix::ones(n, n);
  const std::size_t zeros =
      static_cast<std::size_t>(std::llround(zero_fraction * static_cast<double>(n * n)));
  std::vector<std::size_t> idx(n * n);
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  for (std::size_t k = 0; k < zeros; ++k) {
    const std::size_t j = k + rng.below(idx.size() - k);
    std::swap(idx[k], idx[j]);
    m[idx[k]] = 0.0;
  }
  return m;
}

Matrix random_schur(std::size_t n, double rho, Rng& rng) {
  for (;;) {
    Matrix a = random_matrix(n, n, rng);
    const double r = linalg::spectral_radius(a);
    if (r > 0) return (rho / r) * a;
  }
}

std::string fmt(double v) { return format_double(v); }

/// Concurrency for the training-heavy criteria: one worker per core, capped.
unsigned worker_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1u, std::min(hw, 4u));
}

// ---------------------------------------------------------------------------
// 1. Stability by design
// ---------------------------------------------------------------------------

Outcome criterion1() {
  Rng rng(20260801);
  const std::size_t dims[] = {2, 5, 10};
  const double gammas[] = {0.3, 0.8, 1.0};
  std::size_t draws = 0, violations = 0, mask_violations = 0;
  double worst_margin = -1e9;  // max over draws of rho - bound (must stay < 1e-9)

  auto check = [&](StableAParametrization& p) {
    const Matrix a = p.materialize();
    const double rho = linalg::spectral_radius(a);
    const double bound = p.stability_bound();
    worst_margin = std::max(worst_margin, rho - bound);
    ++draws;
    if (!(rho < bound + 1e-9)) ++violations;
    if (p.mode == AMode::sparse_lmi || p.mode == AMode::scaled) {
      for (std::size_t k = 0; k < a.size(); ++k)
        if (p.mask[k] == 0.0 && a[k] != 0.0) ++mask_violations;
    }
  };

  for (std::size_t n : dims) {
    for (double gamma : gammas)
      for (int t = 0; t < 1000; ++t) {
        auto p = StableAParametrization::make(AMode::generic, n, gamma);
        p.randomize(rng, 1.0);
        check(p);
      }
    for (int t = 0; t < 1000; ++t) {
      auto p = StableAParametrization::make(AMode::near_identity, n);
      p.randomize(rng, 1.0);
      check(p);
    }
    for (int t = 0; t < 1000; ++t) {
      auto p = StableAParametrization::make(AMode::sparse_lmi, n, 1.0, 1e-6, 1.0,
                                            random_mask(n, 0.6, rng));
      p.randomize(rng, 1.0);
      check(p);
    }
    for (double gamma : gammas)
      for (int t = 0; t < 1000; ++t) {
        Matrix mask = random_mask(n, 0.6, rng);
        auto p = StableAParametrization::make(AMode::scaled, n, gamma, 1e-6, 1.0, mask);
        p.randomize(rng, 1.0);
        if (hadamard(p.mask, p.V.value).max_abs() == 0.0) continue;
        check(p);
      }
  }
  Outcome out;
  out.pass = violations == 0 && mask_violations == 0;
  out.detail = std::to_string(draws) + " draws, " + std::to_string(violations) +
               " stability violations, " + std::to_string(mask_violations) +
               " sparsity violations, worst rho-bound margin " + fmt(worst_margin);
  return out;
}

// ---------------------------------------------------------------------------
// 2. Completeness round-trips
// ---------------------------------------------------------------------------

Outcome criterion2() {
  Rng rng(20260802);
  const double rhos[] = {0.3, 0.9, 0.99};
  double worst_generic = 0, worst_near = 0, worst_scaled = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(7);  // n <= 8
    const double rho = rhos[t % 3];
    const Matrix a0 = random_schur(n, rho, rng);

    auto g = construct_generic_params(a0);
    auto pg = StableAParametrization::make(AMode::generic, n, g.gamma);
    pg.W.value = g.W;
    pg.V.value = g.V;
    worst_generic = std::max(worst_generic,
                             (pg.materialize() - a0).frobenius_norm() / a0.frobenius_norm());

    auto ni = construct_near_identity_params(a0);
    auto pn = StableAParametrization::make(AMode::near_identity, n);
    pn.W.value = ni.W;
    pn.V.value = ni.V;
    worst_near = std::max(worst_near,
                          (pn.materialize() - a0).frobenius_norm() / a0.frobenius_norm());

    auto sc = construct_scaled_params(a0);
    auto ps = StableAParametrization::make(AMode::scaled, n, sc.gamma, 1e-6, 1.0, sc.mask);
    ps.V.value = sc.V;
    ps.eta.value(0, 0) = sc.eta;
    worst_scaled = std::max(worst_scaled,
                            (ps.materialize() - a0).max_abs() / std::max(1.0, a0.max_abs()));
  }
  Outcome out;
  out.pass = worst_generic <= 1e-6 && worst_near <= 1e-6 && worst_scaled <= 1e-12;
  out.detail = "worst relative reconstruction error: generic " + fmt(worst_generic) +
               " (<=1e-6), near-identity " + fmt(worst_near) + " (<=1e-6), scaled " +
               fmt(worst_scaled) + " (<=1e-12), 100 matrices each";
  return out;
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness
// ---------------------------------------------------------------------------

Outcome criterion3() {
  Rng rng(20260803);
  double worst = 0;
  std::size_t checks = 0;

  auto fd_check = [&](const std::function<Tensor(GradientTape&, std::vector<Tensor>&)>& op,
                      std::vector<Matrix> inputs) {
    std::vector<Parameter> params;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      params.emplace_back("p" + std::to_string(i), inputs[i]);
    GradientTape probe;
    std::vector<Tensor> pt;
    for (auto& p : params) pt.push_back(probe.watch(p));
    Tensor probe_out = op(probe, pt);
    Matrix projection = random_matrix(probe_out.rows(), probe_out.cols(), rng);
    auto scalar = [&](GradientTape& tape) {
      std::vector<Tensor> ts;
      for (auto& p : params) ts.push_back(tape.watch(p));
      Tensor o = op(tape, ts);
      return tape.sum_over_all(tape.mul_elem(o, tape.constant(projection)));
    };
    GradientTape tape;
    Tensor loss = scalar(tape);
    tape.backward(loss);
    for (auto& p : params) {
      auto f = [&]() {
        GradientTape t2;
        return scalar(t2).value(0, 0);
      };
      Matrix fd = testoracle::finite_difference(f, p.value, 1e-5);
      worst = std::max(worst, testoracle::max_rel_error(p.grad, fd));
      ++checks;
    }
  };

  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(5), m = 2 + rng.below(5);
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.add(in[0], in[1]); },
             {random_matrix(n, m, rng), random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.sub(in[0], in[1]); },
             {random_matrix(n, m, rng), random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.matmul(in[0], in[1]); },
             {random_matrix(n, m, rng), random_matrix(m, n, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.mul_elem(in[0], in[1]); },
             {random_matrix(n, m, rng), random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.transpose(in[0]); },
             {random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.scale(in[0], 2.5); },
             {random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.sigmoid(in[0]); },
             {random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.neg(in[0]); },
             {random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.mean_over_all(in[0]); },
             {random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.sum_over_all(in[0]); },
             {random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.abs(in[0]); },
             {random_matrix(n, m, rng)});
    fd_check([](GradientTape& t_, std::vector<Tensor>& in) { return t_.record_inverse(in[0]); },
             {random_matrix(n, n, rng) + 4.0 * Matrix::identity(n)});
    Matrix sr = random_matrix(n, n, rng);
    if (!linalg::spectral_radius_with_gradient(sr).degenerate)
      fd_check(
          [](GradientTape& t_, std::vector<Tensor>& in) { return t_.spectral_radius(in[0]); },
          {sr});
  }

  // composite materialize-then-loss graphs, all four stable modes
  const std::size_t n = 3, m = 2;
  for (AMode mode : {AMode::generic, AMode::near_identity, AMode::sparse_lmi, AMode::scaled}) {
    int done = 0;
    for (int t = 0; t < 200 && done < 50; ++t) {
      Matrix inputs = random_matrix(8, m, rng);
      Matrix targets = random_matrix(8, n, rng);
      TrajectorySet set;
      set.kind = TargetKind::state;
      set.input_dim = m;
      set.target_dim = n;
      set.trajectories.push_back(Trajectory{"t", inputs, targets, false, Matrix()});

      StateSpaceModel model(n, m, 0);
      model.input_output = false;
      model.use_stable_parametrization(mode, 0.8, 1e-6, 1.0, random_mask(n, 0.3, rng));
      Rng init(9000 + t);
      model.randomize(init);
      if (mode == AMode::scaled) {
        Matrix mv = hadamard(model.stable.mask, model.stable.V.value);
        if (mv.max_abs() == 0.0 || linalg::spectral_radius_with_gradient(mv).degenerate) continue;
      }
      LossSpec spec;
      auto loss_value = [&]() {
        GradientTape t2;
        Rng d(0);
        return masked_multistep_loss(t2, model, set, {0}, spec, d).value.value(0, 0);
      };
      GradientTape tape;
      Rng dropout(0);
      auto loss = masked_multistep_loss(tape, model, set, {0}, spec, dropout);
      auto params = model.trainable_parameters();
      for (auto* p : params) p->zero_grad();
      tape.backward(loss.value);
      for (auto* p : params) {
        Matrix fd = testoracle::finite_difference(loss_value, p->value, 1e-5);
        worst = std::max(worst, testoracle::max_rel_error(p->grad, fd));
        ++checks;
      }
      ++done;
    }
    if (done < 50) {
      Outcome out;
      out.detail = "could not assemble 50 composite configs for mode " + to_string(mode);
      return out;
    }
  }
  Outcome out;
  out.pass = worst <= 1e-4;
  out.detail = std::to_string(checks) + " gradient checks, worst relative error " + fmt(worst) +
               " (<=1e-4)";
  return out;
}

// ---------------------------------------------------------------------------
// 4. Input-state training beats least squares
// ---------------------------------------------------------------------------

Outcome criterion4() {
  const int kSeeds = 10;
  std::vector<double> ls_mse(kSeeds), gd_mse(kSeeds);
  std::vector<std::string> errors(kSeeds);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= kSeeds) return;
      try {
        GeneratorSpec g;
        g.n = 6;
        g.m = 3;
        g.p = 3;
        g.target_spectral_radius = 0.95;
        g.noise_std = 0.1;
        g.trajectory_length = 300;
        g.state_targets = true;
        g.seed = 100 + static_cast<std::uint64_t>(i);
        auto sys = random_stable_system(g);
        auto data = generate_dataset(sys, g);

        LsInit ls = ls_initialize(data.train);
        StateSpaceModel ls_model(g.n, g.m, 0);
        ls_model.input_output = false;
        ls_model.A.value = ls.A;
        ls_model.B.value = ls.B;
        ls_mse[i] = mean_multistep_mse(ls_model, data.test);

        StateSpaceModel model(g.n, g.m, 0);
        model.input_output = false;
        model.use_stable_parametrization(AMode::near_identity, 1.0, 1e-6, 1.0, Matrix());
        TrainConfig tc;
        tc.max_epochs = 4000;
        tc.batch_size = 291;  // full batch of horizon-10 segments
        tc.learning_rate = 3e-3;
        tc.segmentation.horizon = 10;
        tc.segmentation.stride = 1;
        tc.seed = 100 + static_cast<std::uint64_t>(i);
        FitResult res = fit(model, data.train, data.val, data.test, tc);
        gd_mse[i] = res.test_loss;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < worker_count(); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) return Outcome{false, "seed failed: " + e};

  int wins = 0;
  std::vector<double> improvements;
  for (int i = 0; i < kSeeds; ++i) {
    if (gd_mse[i] < ls_mse[i]) ++wins;
    improvements.push_back(improvement_pct(gd_mse[i], ls_mse[i]));
  }
  const double median = quantile_type7(improvements, 0.5);
  Outcome out;
  out.pass = wins >= 7 && median >= 20.0;
  std::string imps;
  for (double v : improvements) imps += (imps.empty() ? "" : ", ") + fmt(v);
  out.detail = "multi-step model beat least squares on " + std::to_string(wins) +
               "/10 seeds (need >=7), median improvement " + fmt(median) +
               "% (need >=20%); per-seed improvements [" + imps + "]";
  return out;
}

// ---------------------------------------------------------------------------
// 5. Sparse input-output systems with true masks
// ---------------------------------------------------------------------------

Outcome criterion5() {
  const int kSystems = 5;
  struct Row {
    double masked = 0, unconstrained = 0, sparse_lmi = 0;
    bool exact_sparsity = true;
    std::string error;
  };
  std::vector<Row> rows(kSystems);
  std::atomic<int> next{0};

  auto sparsity_of = [](const Matrix& m) {
    Matrix mask(m.rows(), m.cols());
    for (std::size_t k = 0; k < m.size(); ++k) mask[k] = (m[k] != 0.0) ? 1.0 : 0.0;
    return mask;
  };

  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= kSystems) return;
      try {
        GeneratorSpec g;
        g.n = 7;
        g.m = 6;
        g.p = 5;
        g.target_spectral_radius = 0.9;
        g.sparsity_fraction = 0.6;
        g.noise_std = 0.5;
        g.trajectory_length = 500;
        g.seed = 200 + static_cast<std::uint64_t>(i);
        auto sys = sparsify(random_stable_system(g), g.sparsity_fraction, g.seed);
        auto data = generate_dataset(sys, g);
        const Matrix mask_a = sparsity_of(sys.A), mask_b = sparsity_of(sys.B),
                     mask_c = sparsity_of(sys.C), mask_d = sparsity_of(sys.D);

        TrainConfig tc;
        tc.max_epochs = 6000;
        tc.batch_size = 1;
        tc.learning_rate = 3e-3;

        // best of 3 random seeds per method, as in the multi-seed protocol
        auto run_best = [&](AMode mode, bool masks, FitResult* best_out = nullptr) {
          double best = std::numeric_limits<double>::infinity();
          for (std::uint64_t s = 0; s < 3; ++s) {
            StateSpaceModel model(g.n, g.m, g.p);
            if (mode != AMode::free)
              model.use_stable_parametrization(mode, 1.0, 1e-6, 1.0, masks ? mask_a : Matrix());
            if (masks) {
              model.mask_B = mask_b;
              model.mask_C = mask_c;
              model.mask_D = mask_d;
            }
            tc.seed = 200 + static_cast<std::uint64_t>(i) + 1000 * s;
            FitResult res = fit(model, data.train, data.val, data.test, tc);
            if (res.test_loss < best) {
              best = res.test_loss;
              if (best_out) *best_out = res;
            }
          }
          return best;
        };

        FitResult masked;
        rows[i].masked = run_best(AMode::scaled, true, &masked);
        auto exact = [&](const Matrix& value, const Matrix& mask) {
          for (std::size_t k = 0; k < value.size(); ++k)
            if (mask[k] == 0.0 && value[k] != 0.0) return false;
          return true;
        };
        rows[i].exact_sparsity = exact(masked.A, mask_a) && exact(masked.B, mask_b) &&
                                 exact(masked.C, mask_c) && exact(masked.D, mask_d);
        rows[i].unconstrained = run_best(AMode::free, false);
        rows[i].sparse_lmi = run_best(AMode::sparse_lmi, true);
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
    }
  };
  {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < worker_count(); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& r : rows)
    if (!r.error.empty()) return Outcome{false, "system failed: " + r.error};

  int within = 0;
  bool sparsity_ok = true;
  std::string ratios, lmi_ratios;
  for (const auto& r : rows) {
    const double ratio = r.masked / r.unconstrained;
    if (ratio <= 2.0) ++within;
    sparsity_ok = sparsity_ok && r.exact_sparsity;
    ratios += (ratios.empty() ? "" : ", ") + fmt(ratio);
    lmi_ratios += (lmi_ratios.empty() ? "" : ", ") + fmt(r.sparse_lmi / r.unconstrained);
  }
  Outcome out;
  out.pass = within >= 4 && sparsity_ok;
  out.detail = "best-of-3-seed scaled-with-true-masks within 2x of unconstrained on " + std::to_string(within) +
               "/5 systems (need >=4), exact sparsity " + (sparsity_ok ? "held" : "VIOLATED") +
               "; masked/unconstrained ratios [" + ratios +
               "]; recorded sparse-certificate ratios (no threshold) [" + lmi_ratios + "]";
  return out;
}

// ---------------------------------------------------------------------------
// 6. Missing data and dropout contracts
// ---------------------------------------------------------------------------

Outcome criterion6() {
  Rng data_rng(20260806);
  StateSpaceModel model(3, 2, 2);
  model.A.value = random_schur(3, 0.8, data_rng);
  model.B.value = random_matrix(3, 2, data_rng);
  model.C.value = random_matrix(2, 3, data_rng);
  model.D.value = random_matrix(2, 2, data_rng);
  TrajectorySet set;
  set.kind = TargetKind::output;
  set.input_dim = 2;
  set.target_dim = 2;
  set.trajectories.push_back(
      Trajectory{"t", random_matrix(40, 2, data_rng), random_matrix(40, 2, data_rng), false,
                 Matrix()});

  LossSpec with_dropout;
  with_dropout.dropout_p = 0.35;
  const std::uint64_t seed = 424242;
  auto loss_of = [&](const TrajectorySet& s, const LossSpec& spec, std::uint64_t sd) {
    GradientTape tape;
    Rng rng(sd);
    return masked_multistep_loss(tape, model, s, {0}, spec, rng).value.value(0, 0);
  };

  const double base = loss_of(set, with_dropout, seed);

  // replay the dropout stream to find the dropped steps, then poison exactly
  // those targets with NaN
  Rng replay(seed);
  TrajectorySet poisoned = set;
  std::size_t dropped = 0;
  for (std::size_t k = 0; k < 40; ++k)
    if (replay.bernoulli(with_dropout.dropout_p)) {
      for (std::size_t j = 0; j < 2; ++j)
        poisoned.trajectories[0].targets(k, j) = std::numeric_limits<double>::quiet_NaN();
      ++dropped;
    }
  const double poisoned_loss = loss_of(poisoned, with_dropout, seed);
  const bool nan_invariant = poisoned_loss == base;

  LossSpec no_dropout;
  const double plain = loss_of(set, no_dropout, 1);
  const bool zero_dropout_ok = plain == evaluate(model, set, LossSpec::Kind::mse).mean &&
                               loss_of(set, no_dropout, 999) == plain;

  const bool seeded_ok =
      loss_of(set, with_dropout, seed) == base && loss_of(set, with_dropout, seed + 1) != base;

  Outcome out;
  out.pass = nan_invariant && zero_dropout_ok && seeded_ok && dropped > 0;
  out.detail = std::string("NaN at the ") + std::to_string(dropped) +
               " dropout-masked points changed no loss digit: " +
               (nan_invariant ? "yes" : "NO") +
               "; dropout 0 reproduces the unmasked loss: " + (zero_dropout_ok ? "yes" : "NO") +
               "; fixed seed reproduces the pattern bit-exactly: " + (seeded_ok ? "yes" : "NO");
  return out;
}

// ---------------------------------------------------------------------------
// 7/8 helpers: drive the CLI
// ---------------------------------------------------------------------------

int run_cli(const std::string& args, std::string* output = nullptr) {
  FILE* pipe = popen((g_binary + " " + args + " 2>&1").c_str(), "r");
  if (!pipe) return -1;
  char buf[4096];
  std::string text;
  while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) text.append(buf, got);
  if (output) *output = text;
  return WEXITSTATUS(pclose(pipe));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// ---------------------------------------------------------------------------
// 7. Byte-identical reruns
// ---------------------------------------------------------------------------

Outcome criterion7() {
  TempDir wd("acceptance_c7");
  if (run_cli("generate --n 3 --m 2 --p 2 --length 80 --seed 70 --out " +
              (wd.path / "data").string()) != 0)
    return {false, "generate failed"};
  Json cfg;
  cfg["n"] = 3;
  cfg["train_data"] = (wd.path / "data" / "train.csv").string();
  cfg["val_data"] = (wd.path / "data" / "val.csv").string();
  cfg["test_data"] = (wd.path / "data" / "test.csv").string();
  cfg["stable_A"] = true;
  cfg["naive_A"] = true;
  cfg["learn_x0"] = true;
  cfg["dropout"] = 0.1;
  cfg["max_epochs"] = 60;
  cfg["batch_size"] = 1;
  cfg["seed"] = 7;
  write_file(wd.path / "cfg.json", cfg.dump());

  std::string log;
  if (run_cli("fit --config " + (wd.path / "cfg.json").string() + " --output-dir " +
                  (wd.path / "r1").string(),
              &log) != 0)
    return {false, "first fit failed: " + log};
  if (run_cli("fit --config " + (wd.path / "cfg.json").string() + " --output-dir " +
                  (wd.path / "r2").string(),
              &log) != 0)
    return {false, "second fit failed: " + log};

  const bool model_same = slurp(wd.path / "r1" / "model.json") ==
                          slurp(wd.path / "r2" / "model.json");
  const bool history_same = slurp(wd.path / "r1" / "history.csv") ==
                            slurp(wd.path / "r2" / "history.csv");
  const bool metrics_same = slurp(wd.path / "r1" / "metrics.json") ==
                            slurp(wd.path / "r2" / "metrics.json");
  Outcome out;
  out.pass = model_same && history_same && metrics_same;
  out.detail = std::string("model.json byte-identical: ") + (model_same ? "yes" : "NO") +
               ", history.csv: " + (history_same ? "yes" : "NO") +
               ", metrics.json: " + (metrics_same ? "yes" : "NO");
  return out;
}

// ---------------------------------------------------------------------------
// 8. Table reporting arithmetic vs brute-force quantile oracle
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Outcome criterion8() {
  TempDir wd("acceptance_c8");
  Json sweep;
  sweep["base"] = {{"n", 2},           {"input_output", false}, {"max_epochs", 25},
                   {"batch_size", 16}, {"horizon", 6},          {"stride", 2},
                   {"learning_rate", 0.005}};
  sweep["systems"] = Json::array();
  for (int s = 0; s < 4; ++s)
    sweep["systems"].push_back({{"n", 2},
                                {"m", 1},
                                {"p", 1},
                                {"length", 80},
                                {"noise_std", 0.1},
                                {"seed", 300 + s},
                                {"state_targets", true}});
  sweep["methods"] = Json::array();
  sweep["methods"].push_back({{"name", "ls"}});
  sweep["methods"].push_back(
      {{"name", "generic"}, {"overrides", {{"stable_A", true}, {"LMI_A", true}}}});
  sweep["methods"].push_back(
      {{"name", "scaled"}, {"overrides", {{"stable_A", true}, {"naive_A", true}}}});
  sweep["seeds"] = {0, 1};
  write_file(wd.path / "sweep.json", sweep.dump());

  std::string log;
  if (run_cli("bench --sweep " + (wd.path / "sweep.json").string() + " --out " +
                  (wd.path / "out").string() + " --jobs 4",
              &log) != 0)
    return {false, "bench failed: " + log};

  auto comparison = read_csv_rows(wd.path / "out" / "comparison.csv");
  auto quantiles = read_csv_rows(wd.path / "out" / "quantiles.csv");
  if (comparison.size() != 1 + 4 * 3 || quantiles.size() != 1 + 3)
    return {false, "unexpected table shapes"};

  // oracle pass over the stored per-cell results
  std::map<std::string, std::map<std::string, double>> mse;  // system -> method -> value
  for (std::size_t r = 1; r < comparison.size(); ++r)
    mse[comparison[r][0]][comparison[r][1]] = std::strtod(comparison[r][2].c_str(), nullptr);

  std::size_t checked = 0;
  for (std::size_t r = 1; r < comparison.size(); ++r) {
    const auto& row = comparison[r];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [method, value] : mse[row[0]]) best = std::min(best, value);
    const double expected = std::strtod(row[2].c_str(), nullptr) / best;
    const double stored = std::strtod(row[3].c_str(), nullptr);
    if (stored != expected) return {false, "normalized value mismatch in row " + row[0] + "," +
                                               row[1]};
    ++checked;
  }
  for (std::size_t r = 1; r < quantiles.size(); ++r) {
    const std::string method = quantiles[r][0];
    std::vector<double> normalized;
    for (const auto& [system, by_method] : mse) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [_, value] : by_method) best = std::min(best, value);
      normalized.push_back(by_method.at(method) / best);
    }
    const double q25 = testoracle::quantile_type7(normalized, 0.25);
    const double q50 = testoracle::quantile_type7(normalized, 0.5);
    const double q75 = testoracle::quantile_type7(normalized, 0.75);
    if (std::strtod(quantiles[r][1].c_str(), nullptr) != q25 ||
        std::strtod(quantiles[r][2].c_str(), nullptr) != q50 ||
        std::strtod(quantiles[r][3].c_str(), nullptr) != q75)
      return {false, "quantile mismatch for method " + method};
    checked += 3;
  }
  Outcome out;
  out.pass = true;
  out.detail = std::to_string(checked) +
               " table entries matched the brute-force oracle exactly (12 cells, 3 methods)";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    const char* name;
    std::function<Outcome()> run;
    double budget_s;  // 0 = no stated runtime bound
  };
  const std::vector<Entry> criteria = {
      {"stability-by-design", criterion1, 120},
      {"completeness-round-trips", criterion2, 60},
      {"gradient-correctness", criterion3, 120},
      {"input-state-vs-least-squares", criterion4, 900},
      {"sparse-systems-with-true-masks", criterion5, 1800},
      {"missing-data-and-dropout", criterion6, 0},
      {"determinism", criterion7, 0},
      {"table-reporting", criterion8, 0},
  };

  if (const char* env = std::getenv("STABLE_SYSID_BIN")) {
    g_binary = env;
  } else {
    // default: tools/stable-sysid next to this binary's directory
    fs::path self(argv[0]);
    g_binary = (self.parent_path().parent_path() / "tools" / "stable-sysid").string();
  }

  int first = 1, last = 8;
  if (argc > 1) {
    first = last = std::atoi(argv[1]);
    if (first < 1 || first > 8) {
      std::cerr << "usage: acceptance [criterion 1..8]\n";
      return 2;
    }
  }

  bool all_pass = true;
  for (int i = first; i <= last; ++i) {
    const Entry& entry = criteria[static_cast<std::size_t>(i - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = entry.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (entry.budget_s > 0 && secs > entry.budget_s) {
      out.pass = false;
      out.detail += " [RUNTIME " + format_double(secs) + " s exceeded the " +
                    format_double(entry.budget_s) + " s budget]";
    }
    std::printf("[%s] criterion %d (%s): %s (%.1f s%s)\n", out.pass ? "PASS" : "FAIL", i,
                entry.name, out.detail.c_str(), secs,
                entry.budget_s > 0
                    ? (" < " + format_double(entry.budget_s) + " s budget").c_str()
                    : "");
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  return all_pass ? 0 : 1;
}
