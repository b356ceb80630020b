#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sysid/schur_param.hpp"
#include "sysid/tensor.hpp"
#include "sysid/trajectory.hpp"

namespace sysid {

struct LossSpec {
  enum class Kind { mse, mae, mape, custom };
  Kind kind = Kind::mse;
  double dropout_p = 0.0;
  /// Custom per-step hook: given the prediction (q x 1, on tape), the raw
  /// target column (NaN where missing) and the 0/1 cell mask, return the
  /// step's scalar loss contribution as a 1x1 tensor.
  std::function<Tensor(GradientTape&, const Tensor&, const Matrix&, const Matrix&)> custom;

  void validate() const {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
      throw ContractError("LossSpec: dropout_p must lie in [0, 1)");
    if (kind == Kind::custom && !custom)
      throw ContractError("LossSpec: custom kind requires a hook");
  }
};

inline LossSpec::Kind loss_kind_from_string(const std::string& s) {
  if (s == "mse") return LossSpec::Kind::mse;
  if (s == "mae") return LossSpec::Kind::mae;
  if (s == "mape") return LossSpec::Kind::mape;
  throw ConfigError("unknown loss kind '" + s + "' (expected mse, mae or mape)");
}

inline std::string to_string(LossSpec::Kind k) {
  switch (k) {
    case LossSpec::Kind::mse: return "mse";
    case LossSpec::Kind::mae: return "mae";
    case LossSpec::Kind::mape: return "mape";
    case LossSpec::Kind::custom: return "custom";
  }
  return "?";
}

/**
 * Discrete-time linear state-space model
 *   x_{k+1} = A x_k + (M_B .* B) u_k
 *   y_k     = (M_C .* C) x_k + (M_D .* D) u_k
 * with A either a raw (optionally masked) parameter or produced by a stable
 * parametrization. Flags follow the identification setup: input_output
 * selects y- vs x-targets, autonomous drops the input term, id_D drops D,
 * learn_x0 turns per-trajectory initial states into parameters.
 */
class StateSpaceModel {
 public:
  std::size_t n = 0, m = 0, p = 0;
  bool input_output = true;
  bool autonomous = false;
  bool id_D = true;
  bool learn_x0 = false;

  AMode a_mode = AMode::free;
  Parameter A;
  Matrix mask_A;  // only for free-mode A; stable modes carry their own mask
  StableAParametrization stable;

  Parameter B, C, D;
  Matrix mask_B, mask_C, mask_D;
  bool learn_A = true, learn_B = true, learn_C = true, learn_D = true;

  std::map<std::string, Parameter> x0_table;

  StateSpaceModel() = default;
  StateSpaceModel(std::size_t n_, std::size_t m_, std::size_t p_)
      : n(n_), m(m_), p(p_),
        A("A", Matrix(n_, n_)),
        B("B", Matrix(n_, m_)),
        C("C", Matrix(p_, n_)),
        D("D", Matrix(p_, m_)) {}

  void use_stable_parametrization(AMode mode, double gamma, double epsilon, double delta,
                                  Matrix mask) {
    a_mode = mode;
    stable = StableAParametrization::make(mode, n, gamma, epsilon, delta, std::move(mask));
  }

  double stability_bound() const { return stable.stability_bound(); }

  std::size_t target_dim() const { return input_output ? p : n; }

  // ---- effective matrices (plain) ----

  Matrix effective_A() const {
    if (a_mode != AMode::free) return stable.materialize();
    return mask_A.empty() ? A.value : hadamard(mask_A, A.value);
  }
  Matrix effective_B() const { return mask_B.empty() ? B.value : hadamard(mask_B, B.value); }
  Matrix effective_C() const { return mask_C.empty() ? C.value : hadamard(mask_C, C.value); }
  Matrix effective_D() const { return mask_D.empty() ? D.value : hadamard(mask_D, D.value); }

  // ---- effective matrices (recorded) ----

  Tensor effective_A(GradientTape& tape) {
    if (a_mode != AMode::free) return stable.materialize(tape);
    Tensor a = tape.watch(A);
    return mask_A.empty() ? a : tape.mul_elem(tape.constant(mask_A), a);
  }
  Tensor effective_B(GradientTape& tape) {
    Tensor b = tape.watch(B);
    return mask_B.empty() ? b : tape.mul_elem(tape.constant(mask_B), b);
  }
  Tensor effective_C(GradientTape& tape) {
    Tensor c = tape.watch(C);
    return mask_C.empty() ? c : tape.mul_elem(tape.constant(mask_C), c);
  }
  Tensor effective_D(GradientTape& tape) {
    Tensor d = tape.watch(D);
    return mask_D.empty() ? d : tape.mul_elem(tape.constant(mask_D), d);
  }

  std::vector<Parameter*> trainable_parameters() {
    std::vector<Parameter*> out;
    if (learn_A) {
      if (a_mode == AMode::free) {
        out.push_back(&A);
      } else {
        for (auto* q : stable.parameters()) out.push_back(q);
      }
    }
    if (!autonomous && learn_B) out.push_back(&B);
    if (input_output && learn_C) out.push_back(&C);
    if (input_output && id_D && learn_D) out.push_back(&D);
    if (learn_x0)
      for (auto& [_, param] : x0_table) out.push_back(&param);
    return out;
  }

  Parameter& x0_parameter(const Trajectory& t) {
    auto it = x0_table.find(t.id);
    if (it != x0_table.end()) return it->second;
    Matrix init(n, 1);
    if (t.has_x0) init = t.x0;
    auto [ins, _] = x0_table.emplace(t.id, Parameter("x0:" + t.id, std::move(init)));
    return ins->second;
  }

  /// Random initialization: free matrices ~ N(0, 1/n); stable-mode free
  /// parameters ~ N(0, 0.1).
  void randomize(Rng& rng) {
    const double std_free = 1.0 / std::sqrt(static_cast<double>(n));
    auto fill = [&](Matrix& mat) {
      for (auto& x : mat.data()) x = rng.gaussian(0, std_free);
    };
    if (a_mode == AMode::free)
      fill(A.value);
    else
      stable.randomize(rng, std::sqrt(0.1));
    fill(B.value);
    fill(C.value);
    fill(D.value);
  }
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct Rollout {
  std::vector<Tensor> states;   // x_0 .. x_{l-1}
  std::vector<Tensor> outputs;  // y_0 .. y_{l-1} (input_output models only)
};

/// Roll the model forward on the tape; the whole trajectory is recorded so
/// the multi-step loss differentiates through every step.
inline Rollout simulate(GradientTape& tape, StateSpaceModel& model, const Matrix& inputs,
                        const Tensor& x0, std::size_t steps) {
  if (!model.autonomous && inputs.cols() != model.m)
    throw DimensionError("simulate: input has " + std::to_string(inputs.cols()) +
                         " columns, model expects " + std::to_string(model.m));
  Tensor a = model.effective_A(tape);
  Tensor b = model.autonomous ? Tensor{} : model.effective_B(tape);
  Tensor c, d;
  if (model.input_output) {
    c = model.effective_C(tape);
    if (model.id_D) d = model.effective_D(tape);
  }
  Rollout r;
  Tensor x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    r.states.push_back(x);
    if (model.input_output) {
      Tensor u;
      if (model.id_D) {
        Matrix uk(model.m, 1);
        for (std::size_t j = 0; j < model.m; ++j) uk(j, 0) = inputs(k, j);
        u = tape.constant(std::move(uk));
      }
      Tensor y = tape.matmul(c, x);
      if (model.id_D) y = tape.add(y, tape.matmul(d, u));
      r.outputs.push_back(y);
    }
    if (k + 1 < steps) {
      Tensor next = tape.matmul(a, x);
      if (!model.autonomous) {
        Matrix uk(model.m, 1);
        for (std::size_t j = 0; j < model.m; ++j) uk(j, 0) = inputs(k, j);
        next = tape.add(next, tape.matmul(b, tape.constant(std::move(uk))));
      }
      x = next;
    }
  }
  return r;
}

struct PlainRollout {
  std::vector<Matrix> states;
  std::vector<Matrix> outputs;
};

/// Tape-free twin of simulate(); same arithmetic, no recording.
inline PlainRollout simulate_plain(const StateSpaceModel& model, const Matrix& inputs,
                                   const Matrix& x0, std::size_t steps) {
  PlainRollout r;
  const Matrix a = model.effective_A();
  const Matrix b = model.autonomous ? Matrix() : model.effective_B();
  Matrix c, d;
  if (model.input_output) {
    c = model.effective_C();
    if (model.id_D) d = model.effective_D();
  }
  Matrix x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    r.states.push_back(x);
    if (model.input_output) {
      Matrix y = c * x;
      if (model.id_D) {
        Matrix uk(model.m, 1);
        for (std::size_t j = 0; j < model.m; ++j) uk(j, 0) = inputs(k, j);
        y = y + d * uk;
      }
      r.outputs.push_back(y);
    }
    if (k + 1 < steps) {
      Matrix next = a * x;
      if (!model.autonomous) {
        Matrix uk(model.m, 1);
        for (std::size_t j = 0; j < model.m; ++j) uk(j, 0) = inputs(k, j);
        next = next + b * uk;
      }
      x = next;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Masked multi-step objectives
// ---------------------------------------------------------------------------

namespace detail {

/// Cell mask and weights for one step: 0 where the target is missing (and,
/// for MAPE, where |target| < 1e-8). Targets are copied with NaN replaced by
/// zero so masked residuals stay finite.
struct StepTarget {
  Matrix target;   // q x 1, NaN replaced by 0
  Matrix mask;     // q x 1 in {0,1}
  Matrix weights;  // q x 1, mask / |target| (mape only)
  bool any = false;
};

inline StepTarget step_target(const Matrix& targets, std::size_t k, LossSpec::Kind kind) {
  const std::size_t q = targets.cols();
  StepTarget st{Matrix(q, 1), Matrix(q, 1), Matrix(q, 1), false};
  for (std::size_t j = 0; j < q; ++j) {
    const double t = targets(k, j);
    if (std::isnan(t)) continue;
    if (kind == LossSpec::Kind::mape && std::fabs(t) < 1e-8) continue;
    st.target(j, 0) = t;
    st.mask(j, 0) = 1.0;
    if (kind == LossSpec::Kind::mape) st.weights(j, 0) = 1.0 / std::fabs(t);
    st.any = true;
  }
  return st;
}

inline double plain_step_loss(const Matrix& pred, const StepTarget& st, LossSpec::Kind kind) {
  double acc = 0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const double diff = pred[j] - st.target[j];
    const double masked = diff * st.mask[j];
    switch (kind) {
      case LossSpec::Kind::mse: acc += masked * masked; break;
      case LossSpec::Kind::mae: acc += std::fabs(masked); break;
      case LossSpec::Kind::mape: acc += std::fabs(diff) * st.weights[j]; break;
      case LossSpec::Kind::custom: break;
    }
  }
  return acc;
}

inline Tensor taped_step_loss(GradientTape& tape, const Tensor& pred, const StepTarget& st,
                              const LossSpec& loss) {
  if (loss.kind == LossSpec::Kind::custom) return loss.custom(tape, pred, st.target, st.mask);
  Tensor diff = tape.sub(pred, tape.constant(st.target));
  switch (loss.kind) {
    case LossSpec::Kind::mse: {
      Tensor masked = tape.mul_elem(diff, tape.constant(st.mask));
      return tape.sum_over_all(tape.mul_elem(masked, masked));
    }
    case LossSpec::Kind::mae: {
      Tensor masked = tape.mul_elem(diff, tape.constant(st.mask));
      return tape.sum_over_all(tape.abs(masked));
    }
    case LossSpec::Kind::mape:
      return tape.sum_over_all(tape.mul_elem(tape.abs(diff), tape.constant(st.weights)));
    case LossSpec::Kind::custom: break;
  }
  throw ContractError("taped_step_loss: unreachable");
}

}  // namespace detail

struct LossValue {
  Tensor value;
  std::size_t fully_masked_trajectories = 0;
};

/**
 * Masked multi-step objective over a batch: mean over trajectories of the
 * per-trajectory sum of step losses divided by the number of retained steps.
 * A step is dropped when its target is entirely missing or, with probability
 * dropout_p, by the seeded rng; a trajectory with no retained step
 * contributes zero and bumps the warning counter.
 */
inline LossValue masked_multistep_loss(GradientTape& tape, StateSpaceModel& model,
                                       const TrajectorySet& set,
                                       const std::vector<std::size_t>& batch,
                                       const LossSpec& loss, Rng& dropout_rng) {
  loss.validate();
  if (batch.empty()) throw ContractError("masked_multistep_loss: empty batch");
  LossValue out;
  Tensor total = tape.constant(Matrix(1, 1));
  for (std::size_t idx : batch) {
    const Trajectory& t = set.trajectories[idx];
    Tensor x0;
    if (model.learn_x0) {
      x0 = tape.watch(model.x0_parameter(t));
    } else if (t.has_x0) {
      x0 = tape.constant(t.x0);
    } else {
      x0 = tape.constant(Matrix(model.n, 1));
    }
    Rollout roll = simulate(tape, model, t.inputs, x0, t.length());
    const auto& preds = model.input_output ? roll.outputs : roll.states;
    Tensor acc = tape.constant(Matrix(1, 1));
    std::size_t retained = 0;
    for (std::size_t k = 0; k < t.length(); ++k) {
      if (loss.dropout_p > 0.0 && dropout_rng.bernoulli(loss.dropout_p)) continue;
      auto st = detail::step_target(t.targets, k, loss.kind);
      if (!st.any) continue;
      acc = tape.add(acc, detail::taped_step_loss(tape, preds[k], st, loss));
      ++retained;
    }
    if (retained == 0) {
      ++out.fully_masked_trajectories;
      continue;  // contributes zero
    }
    total = tape.add(total, tape.scale(acc, 1.0 / static_cast<double>(retained)));
  }
  out.value = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  return out;
}

struct EvalResult {
  std::vector<double> per_trajectory;
  double mean = 0;
};

/**
 * Validation/test metric: no dropout, missing targets skipped, no gradient
 * tape. Initial states come from the trajectory when known and are zero
 * otherwise (learned training x0 values are never used here). Returns
 * per-trajectory means and their arithmetic mean.
 */
inline EvalResult evaluate(const StateSpaceModel& model, const TrajectorySet& set,
                           LossSpec::Kind kind) {
  EvalResult out;
  if (set.empty()) return out;
  double total = 0;
  for (const auto& t : set.trajectories) {
    const Matrix x0 = t.has_x0 ? t.x0 : Matrix(model.n, 1);
    PlainRollout roll = simulate_plain(model, t.inputs, x0, t.length());
    const auto& preds = model.input_output ? roll.outputs : roll.states;
    double acc = 0;
    std::size_t retained = 0;
    for (std::size_t k = 0; k < t.length(); ++k) {
      auto st = detail::step_target(t.targets, k, kind);
      if (!st.any) continue;
      acc += detail::plain_step_loss(preds[k], st, kind);
      ++retained;
    }
    const double traj = retained == 0 ? 0.0 : acc * (1.0 / static_cast<double>(retained));
    out.per_trajectory.push_back(traj);
    total += traj;
  }
  out.mean = total * (1.0 / static_cast<double>(set.size()));
  return out;
}

}  // namespace sysid
