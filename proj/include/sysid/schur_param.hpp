#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sysid/linalg.hpp"
#include "sysid/matrix.hpp"
#include "sysid/rng.hpp"
#include "sysid/tensor.hpp"

namespace sysid {

/// How the state matrix A is produced.
enum class AMode { free, generic, near_identity, sparse_lmi, scaled };

inline std::string to_string(AMode m) {
  switch (m) {
    case AMode::free: return "free";
    case AMode::generic: return "generic";
    case AMode::near_identity: return "near_identity";
    case AMode::sparse_lmi: return "sparse_lmi";
    case AMode::scaled: return "scaled";
  }
  return "?";
}

namespace detail {

// The four A constructions are written once against an op vocabulary and
// instantiated both for plain matrices and for the gradient tape, so the two
// paths produce bit-identical forward values.
struct PlainOps {
  using value = Matrix;
  value constant(Matrix m) const { return m; }
  value add(const value& a, const value& b) const { return a + b; }
  value sub(const value& a, const value& b) const { return a - b; }
  value matmul(const value& a, const value& b) const { return a * b; }
  value mul_elem(const value& a, const value& b) const { return hadamard(a, b); }
  value transpose(const value& a) const { return a.transposed(); }
  value scale(const value& a, double c) const { return c * a; }
  value sigmoid(const value& a) const {
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = 1.0 / (1.0 + std::exp(-out[k]));
    return out;
  }
  value inverse(const value& a) const {
    double rcond = 0;
    Matrix inv = linalg::invert(a, &rcond);
    if (rcond < 1e-12)
      throw SingularMatrixError("materialize: reciprocal condition " + format_double(rcond) +
                                " below 1e-12");
    return inv;
  }
  value spectral_radius(const value& a) const { return Matrix(1, 1, linalg::spectral_radius(a)); }
  static const Matrix& val(const value& v) { return v; }
};

struct TapeOps {
  GradientTape* tape;
  using value = Tensor;
  value constant(Matrix m) const { return tape->constant(std::move(m)); }
  value add(const value& a, const value& b) const { return tape->add(a, b); }
  value sub(const value& a, const value& b) const { return tape->sub(a, b); }
  value matmul(const value& a, const value& b) const { return tape->matmul(a, b); }
  value mul_elem(const value& a, const value& b) const { return tape->mul_elem(a, b); }
  value transpose(const value& a) const { return tape->transpose(a); }
  value scale(const value& a, double c) const { return tape->scale(a, c); }
  value sigmoid(const value& a) const { return tape->sigmoid(a); }
  value inverse(const value& a) const { return tape->record_inverse(a); }
  value spectral_radius(const value& a) const { return tape->spectral_radius(a); }
  static const Matrix& val(const value& v) { return v.value; }
};

/// Selector matrix [I; 0] (top) or [0; I] (bottom), 2n x n.
inline Matrix selector(std::size_t n, bool bottom) {
  Matrix p(2 * n, n);
  for (std::size_t i = 0; i < n; ++i) p((bottom ? n : 0) + i, i) = 1.0;
  return p;
}

template <typename Ops>
struct SBlocks {
  typename Ops::value s11, s12, s21, s22;
};

// S = W'W + eps*I with its four n x n blocks.
template <typename Ops>
SBlocks<Ops> build_s_blocks(Ops ops, const typename Ops::value& w, double epsilon) {
  const std::size_t two_n = Ops::val(w).rows();
  const std::size_t n = two_n / 2;
  auto eps_eye = ops.constant(epsilon * Matrix::identity(two_n));
  auto s = ops.add(ops.matmul(ops.transpose(w), w), eps_eye);
  auto top = ops.constant(selector(n, false));
  auto bot = ops.constant(selector(n, true));
  auto top_t = ops.constant(selector(n, false).transposed());
  auto bot_t = ops.constant(selector(n, true).transposed());
  SBlocks<Ops> blocks{ops.matmul(ops.matmul(top_t, s), top), ops.matmul(ops.matmul(top_t, s), bot),
                      ops.matmul(ops.matmul(bot_t, s), top), ops.matmul(ops.matmul(bot_t, s), bot)};
  return blocks;
}

template <typename Ops>
typename Ops::value skew_part(Ops ops, const typename Ops::value& v) {
  return ops.sub(v, ops.transpose(v));
}

template <typename Ops>
typename Ops::value materialize_generic_impl(Ops ops, const typename Ops::value& w,
                                             const typename Ops::value& v, double gamma,
                                             double epsilon) {
  auto s = build_s_blocks(ops, w, epsilon);
  auto inner = ops.add(ops.add(ops.scale(s.s11, 0.5 / (gamma * gamma)), ops.scale(s.s22, 0.5)),
                       skew_part(ops, v));
  return ops.matmul(s.s12, ops.inverse(inner));
}

template <typename Ops>
typename Ops::value materialize_near_identity_impl(Ops ops, const typename Ops::value& w,
                                                   const typename Ops::value& v, double epsilon) {
  auto s = build_s_blocks(ops, w, epsilon);
  const std::size_t n = Ops::val(s.s11).rows();
  auto inner = ops.add(s.s11, skew_part(ops, v));
  auto prod = ops.matmul(ops.matmul(ops.matmul(ops.inverse(inner), s.s12), ops.inverse(s.s22)),
                         s.s21);
  return ops.sub(ops.constant(Matrix::identity(n)), ops.scale(prod, 2.0));
}

template <typename Ops>
typename Ops::value materialize_sparse_lmi_impl(Ops ops, const typename Ops::value& w,
                                                const typename Ops::value& v, const Matrix& mask,
                                                const Matrix& scaling, double epsilon) {
  auto s = build_s_blocks(ops, w, epsilon);
  auto h = ops.add(ops.scale(ops.add(s.s11, s.s22), 0.5), skew_part(ops, v));
  auto d = ops.mul_elem(ops.constant(scaling), h);
  const Matrix& dval = Ops::val(d);
  for (std::size_t i = 0; i < dval.rows(); ++i)
    if (std::fabs(dval(i, i)) < 1e-12)
      throw SingularMatrixError("materialize_sparse_lmi: scaled diagonal entry " +
                                std::to_string(i) + " is " + format_double(dval(i, i)) +
                                ", below 1e-12");
  return ops.mul_elem(ops.constant(mask), ops.matmul(s.s12, ops.inverse(d)));
}

template <typename Ops>
typename Ops::value materialize_scaled_impl(Ops ops, const typename Ops::value& v,
                                            const typename Ops::value& eta, const Matrix& mask,
                                            double gamma) {
  const std::size_t n = Ops::val(v).rows();
  auto mv = ops.mul_elem(ops.constant(mask), v);
  if (Ops::val(mv).max_abs() == 0.0)
    throw ContractError("materialize_scaled: mask .* V is the zero matrix, spectral radius "
                        "divisor undefined");
  auto rho = ops.spectral_radius(mv);
  auto coeff = ops.scale(ops.matmul(ops.sigmoid(eta), ops.inverse(rho)), gamma);
  auto full = ops.matmul(ops.matmul(ops.constant(Matrix::ones(n, 1)), coeff),
                         ops.constant(Matrix::ones(1, n)));
  return ops.mul_elem(mv, full);
}

}  // namespace detail

/// S = W'W + eps*I (symmetric positive definite for eps > 0).
inline Matrix build_S(const Matrix& w, double epsilon) {
  if (epsilon <= 0) throw ContractError("build_S: epsilon must be positive");
  return w.transposed() * w + epsilon * Matrix::identity(w.rows());
}

/**
 * Diagonal scaling N for the sparse parametrization: N_ii is the larger of
 * the i-th row and column sums of the mask, plus eps. The sums include the
 * diagonal entry of the mask, which keeps the block certificate
 * [[N, M], [M', N]] strictly diagonally dominant (hence positive definite)
 * even when the pattern allows nonzero diagonal entries of A.
 */
inline Matrix sparsity_scaling(const Matrix& mask, double epsilon) {
  const std::size_t n = mask.rows();
  if (mask.cols() != n) throw DimensionError("sparsity_scaling: mask not square");
  Matrix scaling(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0, col = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row += mask(i, j);
      col += mask(j, i);
    }
    scaling(i, i) = std::max(row, col) + epsilon;
  }
  return scaling;
}

inline void validate_mask(const Matrix& mask, const char* where) {
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask[k] != 0.0 && mask[k] != 1.0)
      throw ContractError(std::string(where) + ": mask entries must be 0 or 1");
}

/**
 * Free parameters producing a Schur matrix A by construction. Depending on
 * the mode this uses W and V (generic, near_identity, sparse_lmi) or V and
 * eta (scaled); gamma bounds the eigenvalue moduli for the generic and scaled
 * modes, and materialize() is guaranteed to return a Schur matrix.
 */
struct StableAParametrization {
  AMode mode = AMode::generic;
  std::size_t n = 0;
  Parameter W;    // 2n x 2n
  Parameter V;    // n x n
  Parameter eta;  // 1 x 1
  double gamma = 1.0;
  double epsilon = 1e-6;
  double delta = 1.0;  // discretization-step metadata for near_identity
  Matrix mask;         // n x n binary; all-ones when not restricting

  static StableAParametrization make(AMode mode, std::size_t n, double gamma = 1.0,
                                     double epsilon = 1e-6, double delta = 1.0,
                                     Matrix mask = Matrix()) {
    if (mode == AMode::free) throw ContractError("StableAParametrization: mode must be stable");
    if (epsilon <= 0) throw ContractError("StableAParametrization: epsilon must be positive");
    if (!(gamma > 0 && gamma <= 1))
      throw ContractError("StableAParametrization: gamma must lie in (0, 1]");
    StableAParametrization p;
    p.mode = mode;
    p.n = n;
    p.gamma = gamma;
    p.epsilon = epsilon;
    p.delta = delta;
    p.mask = mask.empty() ? Matrix::ones(n, n) : std::move(mask);
    validate_mask(p.mask, "StableAParametrization");
    p.W = Parameter("W", Matrix(2 * n, 2 * n));
    p.V = Parameter("V", Matrix(n, n));
    p.eta = Parameter("eta", Matrix(1, 1));
    return p;
  }

  void randomize(Rng& rng, double stddev) {
    for (auto& x : W.value.data()) x = rng.gaussian(0, stddev);
    for (auto& x : V.value.data()) x = rng.gaussian(0, stddev);
    eta.value(0, 0) = rng.gaussian(0, stddev);
  }

  std::vector<Parameter*> parameters() {
    if (mode == AMode::scaled) return {&V, &eta};
    return {&W, &V};
  }

  double stability_bound() const {
    return (mode == AMode::generic || mode == AMode::scaled) ? gamma : 1.0;
  }

  Matrix materialize() const {
    detail::PlainOps ops;
    switch (mode) {
      case AMode::generic:
        return detail::materialize_generic_impl(ops, W.value, V.value, gamma, epsilon);
      case AMode::near_identity:
        return detail::materialize_near_identity_impl(ops, W.value, V.value, epsilon);
      case AMode::sparse_lmi:
        return detail::materialize_sparse_lmi_impl(ops, W.value, V.value, mask,
                                                   sparsity_scaling(mask, epsilon), epsilon);
      case AMode::scaled:
        return detail::materialize_scaled_impl(ops, V.value, eta.value, mask, gamma);
      case AMode::free: break;
    }
    throw ContractError("materialize: free mode has no parametrization");
  }

  Tensor materialize(GradientTape& tape) {
    detail::TapeOps ops{&tape};
    switch (mode) {
      case AMode::generic:
        return detail::materialize_generic_impl(ops, tape.watch(W), tape.watch(V), gamma, epsilon);
      case AMode::near_identity:
        return detail::materialize_near_identity_impl(ops, tape.watch(W), tape.watch(V), epsilon);
      case AMode::sparse_lmi:
        return detail::materialize_sparse_lmi_impl(ops, tape.watch(W), tape.watch(V), mask,
                                                   sparsity_scaling(mask, epsilon), epsilon);
      case AMode::scaled:
        return detail::materialize_scaled_impl(ops, tape.watch(V), tape.watch(eta), mask, gamma);
      case AMode::free: break;
    }
    throw ContractError("materialize: free mode has no parametrization");
  }
};

/**
 * Solve Q - A Q A' = RHS by Kronecker vectorization, (I - A(x)A) vec(Q) =
 * vec(RHS). O(n^6), fine at the matrix sizes this library targets; requires
 * rho(A) < 1 and symmetric RHS so the solution is symmetric (and positive
 * definite when RHS is).
 */
inline Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& rhs) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionError("solve_discrete_lyapunov: A not square");
  if (!rhs.same_shape(a)) throw DimensionError("solve_discrete_lyapunov: RHS shape mismatch");
  const double asym = (rhs - rhs.transposed()).max_abs();
  if (asym > 1e-10 * std::max(1.0, rhs.max_abs()))
    throw ContractError("solve_discrete_lyapunov: RHS not symmetric");
  if (linalg::spectral_radius(a) >= 1.0)
    throw ContractError("solve_discrete_lyapunov: spectral radius of A must be < 1");
  Matrix system = Matrix::identity(n * n) - linalg::kron(a, a);
  Matrix q = linalg::unvec_col(linalg::solve(system, linalg::vec_col(rhs)), n, n);
  return 0.5 * (q + q.transposed());
}

struct GenericParams {
  Matrix W, V;
  double gamma = 1.0;
};

/**
 * Constructive completeness for the generic parametrization: given a Schur
 * A0, produce (W, V=0, gamma=1) whose materialization reproduces A0. Uses the
 * Lyapunov certificate Q - A0 Q A0' = I, the congruence scaling
 * alpha = 2 eps / lambda_min(Gamma), and a symmetric square root.
 */
inline GenericParams construct_generic_params(const Matrix& a0, double epsilon = 1e-6) {
  const std::size_t n = a0.rows();
  if (a0.cols() != n) throw DimensionError("construct_generic_params: A0 not square");
  if (linalg::spectral_radius(a0) >= 1.0)
    throw ContractError("construct_generic_params: A0 must be Schur (spectral radius < 1)");
  const Matrix q = solve_discrete_lyapunov(a0, Matrix::identity(n));
  const Matrix aq = a0 * q;
  Matrix gamma_mat(2 * n, 2 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      gamma_mat(i, j) = q(i, j);
      gamma_mat(i, n + j) = aq(i, j);
      gamma_mat(n + i, j) = aq(j, i);
      gamma_mat(n + i, n + j) = q(i, j);
    }
  const double lmin = linalg::lambda_min_sym(gamma_mat);
  if (lmin <= 0)
    throw NumericalError("construct_generic_params: certificate not positive definite");
  const double alpha = 2.0 * epsilon / lmin;
  const Matrix delta = alpha * gamma_mat - epsilon * Matrix::identity(2 * n);
  return GenericParams{linalg::sqrtm_spd(delta), Matrix(n, n), 1.0};
}

struct NearIdentityParams {
  Matrix W, V;
};

/**
 * Constructive completeness for the near-identity parametrization. With the
 * internal discretization step fixed to one, F = A0 - I (invertible for any
 * Schur A0), P solves P - A0' P A0 = I, and the certificate is
 * Gamma = [[-PF - F'P, F'], [F, P^-1]]. The skew part of V must equal
 * alpha (PF - F'P) for the materialization to reproduce A0, so V = alpha PF.
 */
inline NearIdentityParams construct_near_identity_params(const Matrix& a0, double epsilon = 1e-6) {
  const std::size_t n = a0.rows();
  if (a0.cols() != n) throw DimensionError("construct_near_identity_params: A0 not square");
  if (linalg::spectral_radius(a0) >= 1.0)
    throw ContractError("construct_near_identity_params: A0 must be Schur (spectral radius < 1)");
  const Matrix f = a0 - Matrix::identity(n);
  const Matrix p = solve_discrete_lyapunov(a0.transposed(), Matrix::identity(n));
  const Matrix pf = p * f;
  const Matrix p_inv = linalg::invert(p);
  Matrix gamma_mat(2 * n, 2 * n);
  const Matrix top_left = -(pf + pf.transposed());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      gamma_mat(i, j) = top_left(i, j);
      gamma_mat(i, n + j) = f(j, i);
      gamma_mat(n + i, j) = f(i, j);
      gamma_mat(n + i, n + j) = p_inv(i, j);
    }
  const double lmin = linalg::lambda_min_sym(gamma_mat);
  if (lmin <= 0)
    throw NumericalError("construct_near_identity_params: certificate not positive definite");
  const double alpha = 2.0 * epsilon / lmin;
  const Matrix delta = alpha * gamma_mat - epsilon * Matrix::identity(2 * n);
  return NearIdentityParams{linalg::sqrtm_spd(delta), alpha * pf};
}

struct ScaledParams {
  Matrix mask, V;
  double gamma = 1.0;
  double eta = 0.0;
};

/**
 * Exact inversion of the scaled parametrization: mask = sparsity pattern of
 * A0, V = A0, gamma = (1 + rho)/2 clamped to 1, eta = logit(rho / gamma).
 */
inline ScaledParams construct_scaled_params(const Matrix& a0) {
  const std::size_t n = a0.rows();
  if (a0.cols() != n) throw DimensionError("construct_scaled_params: A0 not square");
  const double rho = linalg::spectral_radius(a0);
  if (rho >= 1.0)
    throw ContractError("construct_scaled_params: A0 must be Schur (spectral radius < 1)");
  if (rho <= 0.0)
    throw ContractError("construct_scaled_params: A0 has zero spectral radius, eta undefined");
  ScaledParams out;
  out.mask = Matrix(n, n);
  for (std::size_t k = 0; k < a0.size(); ++k) out.mask[k] = (a0[k] != 0.0) ? 1.0 : 0.0;
  out.V = a0;
  out.gamma = std::min((1.0 + rho) / 2.0, 1.0);
  const double x = rho / out.gamma;
  out.eta = std::log(x / (1.0 - x));
  return out;
}

}  // namespace sysid
