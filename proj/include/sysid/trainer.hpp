#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sysid/state_space.hpp"
#include "sysid/trajectory.hpp"

namespace sysid {

struct TrainConfig {
  std::size_t max_epochs = 1000;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double init_learning_rate = 1e-3;
  std::size_t init_epochs = 2000;
  double grad_clip = 100.0;
  double init_grad_clip = 0.1;
  LossSpec train_loss;
  LossSpec::Kind val_loss = LossSpec::Kind::mse;
  LossSpec::Kind init_loss = LossSpec::Kind::mse;
  bool init_from_ls = false;
  std::uint64_t seed = 0;
  std::optional<std::size_t> patience;  // early stopping, off by default
  SegmentationSpec segmentation;

  // Fixed starting values; they survive the random initialization. A target
  // A is projected onto the stable parametrization when one is active.
  std::optional<Matrix> a_init, b_init, c_init, d_init;

  /// Test hook, invoked after every optimizer step.
  std::function<void(std::size_t epoch, std::size_t step, const StateSpaceModel&)> on_step;

  void validate() const {
    if (max_epochs < 1) throw ContractError("TrainConfig: max_epochs must be >= 1");
    if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0) || !(init_learning_rate > 0))
      throw ContractError("TrainConfig: learning rates must be positive");
    if (!(grad_clip > 0) || !(init_grad_clip > 0))
      throw ContractError("TrainConfig: gradient clips must be positive");
    train_loss.validate();
    segmentation.validate();
  }
};

struct FitResult {
  Matrix A, B, C, D;  // effective matrices of the validation-best snapshot
  std::vector<double> train_history;
  std::vector<double> val_history;
  std::size_t best_epoch = 0;  // 1-based epoch of the best validation loss
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_wall_time_s = 0;
  double final_train_loss = 0;
  double test_loss = 0;
  std::size_t masked_trajectory_warnings = 0;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamState {
  Matrix m, v;
  std::size_t t = 0;
};

/// Adaptive-moment update with decay 0.9/0.999, bias correction and 1e-8
/// divisor floor, applied in place from param.grad.
inline void adaptive_moment_step(Parameter& param, AdamState& state, double lr) {
  if (!param.trainable) return;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps_opt = 1e-8;
  if (state.m.empty()) {
    state.m = Matrix(param.value.rows(), param.value.cols());
    state.v = Matrix(param.value.rows(), param.value.cols());
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < param.value.size(); ++k) {
    const double g = param.grad[k];
    state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g;
    state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g;
    const double mhat = state.m[k] / c1;
    const double vhat = state.v[k] / c2;
    param.value[k] -= lr * mhat / (std::sqrt(vhat) + eps_opt);
  }
}

/// Pointwise gradient saturation to [-clip, clip].
inline void clip_gradients(const std::vector<Parameter*>& params, double clip) {
  for (Parameter* p : params)
    for (std::size_t k = 0; k < p->grad.size(); ++k) {
      if (p->grad[k] > clip) p->grad[k] = clip;
      if (p->grad[k] < -clip) p->grad[k] = -clip;
    }
}

// ---------------------------------------------------------------------------
// Least-squares initialization (input-state data)
// ---------------------------------------------------------------------------

struct LsInit {
  Matrix A, B;
  bool rank_deficient = false;
  double residual = 0;
};

/**
 * One-step least squares over all transitions, min sum ||x(k+1) - A x(k) -
 * B u(k)||^2, solved by Householder QR; transitions touching missing states
 * are skipped, and a rank-deficient regressor yields the minimum-norm
 * solution (flagged in the result).
 */
inline LsInit ls_initialize(const TrajectorySet& set) {
  if (set.kind != TargetKind::state)
    throw ContractError("ls_initialize: requires input-state data");
  const std::size_t n = set.target_dim, m = set.input_dim;
  std::vector<double> regressor, target;
  std::size_t rows = 0;
  for (const auto& t : set.trajectories) {
    for (std::size_t k = 0; k + 1 < t.length(); ++k) {
      bool usable = true;
      for (std::size_t j = 0; j < n && usable; ++j)
        if (std::isnan(t.targets(k, j)) || std::isnan(t.targets(k + 1, j))) usable = false;
      if (!usable) continue;
      for (std::size_t j = 0; j < n; ++j) regressor.push_back(t.targets(k, j));
      for (std::size_t j = 0; j < m; ++j) regressor.push_back(t.inputs(k, j));
      for (std::size_t j = 0; j < n; ++j) target.push_back(t.targets(k + 1, j));
      ++rows;
    }
  }
  if (rows < n + m)
    throw ContractError("ls_initialize: only " + std::to_string(rows) +
                        " usable transitions, need at least " + std::to_string(n + m));
  Matrix z(rows, n + m, std::move(regressor));
  Matrix x_next(rows, n, std::move(target));
  auto ls = linalg::least_squares(z, x_next);
  LsInit out;
  out.rank_deficient = ls.rank_deficient;
  out.A = Matrix(n, n);
  out.B = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.A(i, j) = ls.solution(j, i);
    for (std::size_t j = 0; j < m; ++j) out.B(i, j) = ls.solution(n + j, i);
  }
  out.residual = (z * ls.solution - x_next).frobenius_norm();
  return out;
}

// ---------------------------------------------------------------------------
// Projection of a target A onto a stable parametrization
// ---------------------------------------------------------------------------

/**
 * Best-effort approximation of A* inside the given parametrization by
 * gradient descent on the init loss; for the scaled mode with gamma >
 * rho(A*) and a compatible mask the inversion is exact. The achieved
 * mismatch is reported through final_error, never raised.
 */
inline StableAParametrization project_A_to_parametrization(const Matrix& a_star,
                                                           StableAParametrization proto,
                                                           const TrainConfig& config, Rng& rng,
                                                           double* final_error = nullptr) {
  const double rho = linalg::spectral_radius(a_star);
  if (proto.mode == AMode::scaled && rho > 0 && rho < proto.gamma) {
    bool mask_compatible = true;
    for (std::size_t k = 0; k < a_star.size(); ++k)
      if (proto.mask[k] == 0.0 && a_star[k] != 0.0) mask_compatible = false;
    if (mask_compatible) {
      proto.V.value = a_star;
      const double x = rho / proto.gamma;
      proto.eta.value(0, 0) = std::log(x / (1.0 - x));
      if (final_error) {
        const Matrix rec = proto.materialize();
        *final_error = (rec - a_star).frobenius_norm() /
                       std::max(1e-300, a_star.frobenius_norm());
      }
      return proto;
    }
  }
  proto.randomize(rng, std::sqrt(0.1));
  auto params = proto.parameters();
  std::vector<AdamState> states(params.size());
  double best_loss = std::numeric_limits<double>::infinity();
  StableAParametrization best = proto;
  const Matrix target = a_star;
  for (std::size_t it = 0; it < config.init_epochs; ++it) {
    GradientTape tape;
    Tensor a = proto.materialize(tape);
    Tensor diff = tape.sub(a, tape.constant(target));
    Tensor loss;
    if (config.init_loss == LossSpec::Kind::mae)
      loss = tape.mean_over_all(tape.abs(diff));
    else
      loss = tape.mean_over_all(tape.mul_elem(diff, diff));
    const double value = loss.value(0, 0);
    if (value < best_loss) {
      best_loss = value;
      best = proto;
    }
    for (auto* p : params) p->zero_grad();
    tape.backward(loss);
    clip_gradients(params, config.init_grad_clip);
    for (std::size_t i = 0; i < params.size(); ++i)
      adaptive_moment_step(*params[i], states[i], config.init_learning_rate);
  }
  if (final_error) {
    const Matrix rec = best.materialize();
    *final_error =
        (rec - target).frobenius_norm() / std::max(1e-300, target.frobenius_norm());
  }
  return best;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

namespace detail {

inline std::string parameter_norms(const std::vector<Parameter*>& params) {
  std::string s;
  for (const auto* p : params) {
    if (!s.empty()) s += ", ";
    s += p->name + "=" + format_double(p->value.frobenius_norm());
  }
  return s;
}

}  // namespace detail

/**
 * The full training pipeline: optional LS / target-matrix initialization,
 * epoch loop with seeded shuffling and dropout, pointwise gradient clipping,
 * adaptive-moment updates, per-epoch validation, and strict-improvement
 * snapshots. Returns the validation-best model (also restored into `model`)
 * evaluated once on the test set. Deterministic given (config, seed).
 */
inline FitResult fit(StateSpaceModel& model, const TrajectorySet& train_in,
                     const TrajectorySet& val_in, const TrajectorySet& test,
                     const TrainConfig& config) {
  config.validate();
  if (train_in.empty()) throw ContractError("fit: empty training set");
  if (val_in.empty()) throw ContractError("fit: empty validation set");
  const std::size_t expected_dim = model.input_output ? model.p : model.n;
  if (train_in.target_dim != expected_dim)
    throw ContractError("fit: training target dimension " + std::to_string(train_in.target_dim) +
                        " does not match the model's " + std::to_string(expected_dim));
  if (!model.autonomous && train_in.input_dim != model.m)
    throw ContractError("fit: training input dimension mismatch");

  Rng init_rng = Rng::derive(config.seed, 101);
  Rng batch_rng = Rng::derive(config.seed, 102);
  Rng dropout_rng = Rng::derive(config.seed, 103);
  Rng project_rng = Rng::derive(config.seed, 104);

  model.randomize(init_rng);
  if (config.b_init) model.B.value = *config.b_init;
  if (config.c_init) model.C.value = *config.c_init;
  if (config.d_init) model.D.value = *config.d_init;

  // Optional warm start: explicit target matrices win over least squares.
  std::optional<Matrix> a_target = config.a_init;
  if (!a_target && config.init_from_ls) {
    if (train_in.kind != TargetKind::state)
      throw ContractError("fit: init_from_ls needs input-state training data");
    LsInit ls = ls_initialize(train_in);
    a_target = ls.A;
    if (!model.autonomous && !config.b_init) model.B.value = ls.B;
  }
  if (a_target) {
    if (model.a_mode == AMode::free)
      model.A.value = *a_target;
    else
      model.stable =
          project_A_to_parametrization(*a_target, model.stable, config, project_rng, nullptr);
  }

  FitResult result;
  SegmentationSpec train_seg;
  train_seg.horizon = config.segmentation.horizon;
  train_seg.stride = config.segmentation.stride;
  SegmentationSpec val_seg;
  val_seg.horizon = config.segmentation.horizon_val;
  val_seg.stride = config.segmentation.stride_val;
  std::size_t seg_warnings = 0;
  const TrajectorySet train = segment(train_in, train_seg, &seg_warnings);
  const TrajectorySet val = segment(val_in, val_seg, &seg_warnings);
  if (train.empty()) throw ContractError("fit: segmentation left no training segments");

  if (model.learn_x0)
    for (const auto& t : train.trajectories) model.x0_parameter(t);

  auto params = model.trainable_parameters();
  if (params.empty()) throw ContractError("fit: nothing to train (all parameters fixed)");
  std::vector<AdamState> adam(params.size());

  StateSpaceModel best = model;
  const auto t_start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double epoch_loss = 0;
    std::size_t steps = 0;
    for (const auto& batch : batches(train.size(), config.batch_size, batch_rng)) {
      GradientTape tape;
      LossValue loss = masked_multistep_loss(tape, model, train, batch, config.train_loss,
                                             dropout_rng);
      result.masked_trajectory_warnings += loss.fully_masked_trajectories;
      const double value = loss.value.value(0, 0);
      if (!std::isfinite(value))
        throw NumericalError("fit: non-finite training loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(steps) + "; parameter norms: " +
                             detail::parameter_norms(params));
      epoch_loss += value;
      for (auto* p : params) p->zero_grad();
      tape.backward(loss.value);
      clip_gradients(params, config.grad_clip);
      for (std::size_t i = 0; i < params.size(); ++i)
        adaptive_moment_step(*params[i], adam[i], config.learning_rate);
      ++steps;
      if (config.on_step) config.on_step(epoch, steps, model);
    }
    result.train_history.push_back(epoch_loss / static_cast<double>(steps));
    const double val_loss = evaluate(model, val, config.val_loss).mean;
    result.val_history.push_back(val_loss);
    if (val_loss < result.best_val_loss) {  // strict improvement only
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = model;
      result.best_wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    }
    if (config.patience && epoch >= result.best_epoch + *config.patience) break;
  }
  model = best;
  result.A = model.effective_A();
  result.B = model.effective_B();
  result.C = model.effective_C();
  result.D = model.effective_D();
  result.final_train_loss = result.train_history.back();
  result.test_loss = test.empty() ? 0.0 : evaluate(model, test, config.val_loss).mean;
  return result;
}

}  // namespace sysid
