#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sysid/linalg.hpp"
#include "sysid/matrix.hpp"
#include "sysid/rng.hpp"
#include "sysid/trajectory.hpp"

namespace sysid {

/**
 * Recipe for one seeded benchmark system and its train/val/test trajectories.
 * The seed fully determines every draw (system entries, sparsity pattern,
 * inputs, noise), via fixed sub-streams of the xoshiro generator.
 */
struct GeneratorSpec {
  std::size_t n = 5, m = 3, p = 3;
  double target_spectral_radius = 0.9;
  double sparsity_fraction = 0.0;
  double noise_std = 0.5;
  double gbn_switch_prob = 0.1;
  std::size_t trajectory_length = 300;
  std::uint64_t seed = 0;
  bool state_targets = false;  // emit x-measurements instead of y

  void validate() const {
    if (n == 0 || p == 0) throw ContractError("GeneratorSpec: n and p must be positive");
    if (!(target_spectral_radius > 0 && target_spectral_radius < 1))
      throw ContractError("GeneratorSpec: target spectral radius must lie in (0, 1)");
    if (!(sparsity_fraction >= 0 && sparsity_fraction < 1))
      throw ContractError("GeneratorSpec: sparsity fraction must lie in [0, 1)");
    if (noise_std < 0) throw ContractError("GeneratorSpec: noise std must be >= 0");
    if (!(gbn_switch_prob > 0 && gbn_switch_prob < 1))
      throw ContractError("GeneratorSpec: GBN switch probability must lie in (0, 1)");
    if (trajectory_length < 2) throw ContractError("GeneratorSpec: trajectory length must be >= 2");
  }
};

struct SystemMatrices {
  Matrix A, B, C, D;
};

namespace detail {
// sub-stream ids, mixed with the seed through splitmix64
enum : std::uint64_t {
  kStreamSystem = 1,
  kStreamSparsify = 2,
  kStreamTrainInput = 3,
  kStreamValInput = 4,
  kStreamTestInput = 5,
  kStreamNoise = 6,
};

inline Matrix gaussian_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = rng.gaussian();
  return m;
}
}  // namespace detail

/// Standard-normal entries with A rescaled so its spectral radius hits the
/// target exactly (up to eigensolver error).
inline SystemMatrices random_stable_system(const GeneratorSpec& spec) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, detail::kStreamSystem);
  SystemMatrices sys;
  sys.A = detail::gaussian_matrix(spec.n, spec.n, rng);
  const double rho = linalg::spectral_radius(sys.A);
  if (rho > 0) sys.A = (spec.target_spectral_radius / rho) * sys.A;
  sys.B = detail::gaussian_matrix(spec.n, spec.m, rng);
  sys.C = detail::gaussian_matrix(spec.p, spec.n, rng);
  sys.D = detail::gaussian_matrix(spec.p, spec.m, rng);
  return sys;
}

namespace detail {
inline void zero_fraction(Matrix& m, double fraction, Rng& rng) {
  const std::size_t zeros =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m.size())));
  std::vector<std::size_t> idx(m.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  for (std::size_t k = 0; k < zeros; ++k) {
    const std::size_t j = k + rng.below(idx.size() - k);
    std::swap(idx[k], idx[j]);
    m[idx[k]] = 0.0;
  }
}
}  // namespace detail

/**
 * Zero a uniform random fraction of the entries of each matrix (already-zero
 * entries count as eligible picks). The A pattern is resampled until the
 * sparsified A stays Schur, up to 1000 attempts; afterwards A is rescaled to
 * spectral radius 0.95 as a terminating fallback.
 */
inline SystemMatrices sparsify(SystemMatrices sys, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1))
    throw ContractError("sparsify: fraction must lie in [0, 1)");
  if (fraction == 0) return sys;
  Rng rng = Rng::derive(seed, detail::kStreamSparsify);
  const Matrix original_a = sys.A;
  bool stable = false;
  for (int attempt = 0; attempt < 1000 && !stable; ++attempt) {
    sys.A = original_a;
    detail::zero_fraction(sys.A, fraction, rng);
    stable = linalg::spectral_radius(sys.A) < 1.0;
  }
  if (!stable) sys.A = (0.95 / linalg::spectral_radius(sys.A)) * sys.A;
  detail::zero_fraction(sys.B, fraction, rng);
  detail::zero_fraction(sys.C, fraction, rng);
  detail::zero_fraction(sys.D, fraction, rng);
  return sys;
}

/// Generalized binary noise: each channel starts at +-1 (equiprobable) and
/// flips sign with the given probability at every step. Channels are drawn
/// one after the other.
inline Matrix gbn_input(std::size_t length, std::size_t m, double switch_prob, Rng& rng) {
  if (!(switch_prob > 0 && switch_prob < 1))
    throw ContractError("gbn_input: switch probability must lie in (0, 1)");
  Matrix u(length, m);
  for (std::size_t j = 0; j < m; ++j) {
    double level = rng.bernoulli(0.5) ? 1.0 : -1.0;
    for (std::size_t k = 0; k < length; ++k) {
      if (k > 0 && rng.bernoulli(switch_prob)) level = -level;
      u(k, j) = level;
    }
  }
  return u;
}

struct DatasetTriple {
  TrajectorySet train, val, test;
};

namespace detail {

inline Trajectory simulate_trajectory(const SystemMatrices& sys, const GeneratorSpec& spec,
                                      const Matrix& u, const std::string& id) {
  const std::size_t q = spec.state_targets ? spec.n : spec.p;
  Trajectory t;
  t.id = id;
  t.inputs = u;
  t.targets = Matrix(spec.trajectory_length, q);
  t.has_x0 = true;
  t.x0 = Matrix(spec.n, 1);
  Matrix x(spec.n, 1);
  for (std::size_t k = 0; k < spec.trajectory_length; ++k) {
    Matrix uk(spec.m, 1);
    for (std::size_t j = 0; j < spec.m; ++j) uk(j, 0) = u(k, j);
    if (spec.state_targets) {
      for (std::size_t j = 0; j < spec.n; ++j) t.targets(k, j) = x(j, 0);
    } else {
      Matrix y = sys.C * x + sys.D * uk;
      for (std::size_t j = 0; j < spec.p; ++j) t.targets(k, j) = y(j, 0);
    }
    x = sys.A * x + sys.B * uk;
  }
  return t;
}

}  // namespace detail

/**
 * One training, one validation and one test trajectory from x0 = 0 under
 * independent GBN excitations; Gaussian measurement noise (std = noise_std)
 * is added to the training targets only.
 */
inline DatasetTriple generate_dataset(const SystemMatrices& sys, const GeneratorSpec& spec) {
  spec.validate();
  DatasetTriple out;
  auto make_set = [&](std::uint64_t stream, const std::string& id) {
    Rng rng = Rng::derive(spec.seed, stream);
    Matrix u = gbn_input(spec.trajectory_length, spec.m, spec.gbn_switch_prob, rng);
    TrajectorySet set;
    set.kind = spec.state_targets ? TargetKind::state : TargetKind::output;
    set.input_dim = spec.m;
    set.target_dim = spec.state_targets ? spec.n : spec.p;
    set.trajectories.push_back(detail::simulate_trajectory(sys, spec, u, id));
    return set;
  };
  out.train = make_set(detail::kStreamTrainInput, "train0");
  out.val = make_set(detail::kStreamValInput, "val0");
  out.test = make_set(detail::kStreamTestInput, "test0");
  if (spec.noise_std > 0) {
    Rng noise = Rng::derive(spec.seed, detail::kStreamNoise);
    for (auto& t : out.train.trajectories)
      for (auto& v : t.targets.data()) v += noise.gaussian(0, spec.noise_std);
  }
  return out;
}

}  // namespace sysid
