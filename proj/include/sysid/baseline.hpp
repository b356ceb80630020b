#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sysid/state_space.hpp"

namespace sysid {

/// Full-trajectory rollout MSE per trajectory (initial state from the
/// trajectory when known, zero otherwise); identical arithmetic to the
/// masked multi-step MSE loss with dropout 0 and retained-count
/// normalization.
inline std::vector<double> multistep_mse(const StateSpaceModel& model, const TrajectorySet& set) {
  return evaluate(model, set, LossSpec::Kind::mse).per_trajectory;
}

inline double mean_multistep_mse(const StateSpaceModel& model, const TrajectorySet& set) {
  return evaluate(model, set, LossSpec::Kind::mse).mean;
}

inline double improvement_pct(double candidate_mse, double reference_mse) {
  if (!(reference_mse > 0)) throw ContractError("improvement_pct: reference MSE must be positive");
  return 100.0 * (1.0 - candidate_mse / reference_mse);
}

/// Type-7 quantile (linear interpolation between order statistics).
inline double quantile_type7(std::vector<double> values, double prob) {
  if (values.empty()) throw ContractError("quantile_type7: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - std::floor(h)) * (values[lo + 1] - values[lo]);
}

/**
 * Per-system test MSEs for a set of methods, the same values normalized by
 * each system's best method, and per-method quantile summaries of the
 * normalized columns. Normalized values are >= 1; on exact ties the method
 * that comes first by name is reported as the system's best.
 */
struct ComparisonTable {
  std::vector<std::string> methods;  // rows
  std::vector<std::string> systems;  // columns
  Matrix mse;                        // methods x systems
  Matrix normalized;                 // methods x systems
  std::vector<std::string> best_method;  // per system

  struct Quantiles {
    double q25 = 0, median = 0, q75 = 0;
  };
  std::vector<Quantiles> summary;  // per method, across systems
};

inline ComparisonTable build_comparison(std::vector<std::string> methods,
                                        std::vector<std::string> systems, Matrix mse) {
  if (methods.size() < 2) throw ContractError("build_comparison: need at least 2 methods");
  if (mse.rows() != methods.size() || mse.cols() != systems.size())
    throw DimensionError("build_comparison: MSE matrix shape mismatch");
  ComparisonTable t;
  t.methods = std::move(methods);
  t.systems = std::move(systems);
  t.mse = std::move(mse);
  t.normalized = Matrix(t.mse.rows(), t.mse.cols());
  t.best_method.resize(t.systems.size());
  for (std::size_t j = 0; j < t.systems.size(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.methods.size(); ++i) {
      if (t.mse(i, j) < t.mse(best, j) ||
          (t.mse(i, j) == t.mse(best, j) && t.methods[i] < t.methods[best]))
        best = i;
    }
    t.best_method[j] = t.methods[best];
    const double denom = t.mse(best, j);
    for (std::size_t i = 0; i < t.methods.size(); ++i)
      t.normalized(i, j) = denom > 0 ? t.mse(i, j) / denom : 1.0;
  }
  for (std::size_t i = 0; i < t.methods.size(); ++i) {
    std::vector<double> row(t.systems.size());
    for (std::size_t j = 0; j < t.systems.size(); ++j) row[j] = t.normalized(i, j);
    t.summary.push_back({quantile_type7(row, 0.25), quantile_type7(row, 0.5),
                         quantile_type7(row, 0.75)});
  }
  return t;
}

/// `system_id, method, mse, normalized_mse` rows in system-major order.
inline std::string comparison_csv(const ComparisonTable& t) {
  std::string out = "system_id,method,mse,normalized_mse\n";
  for (std::size_t j = 0; j < t.systems.size(); ++j)
    for (std::size_t i = 0; i < t.methods.size(); ++i)
      out += t.systems[j] + "," + t.methods[i] + "," + format_double(t.mse(i, j)) + "," +
             format_double(t.normalized(i, j)) + "\n";
  return out;
}

inline std::string quantiles_csv(const ComparisonTable& t) {
  std::string out = "method,q25,median,q75\n";
  for (std::size_t i = 0; i < t.methods.size(); ++i)
    out += t.methods[i] + "," + format_double(t.summary[i].q25) + "," +
           format_double(t.summary[i].median) + "," + format_double(t.summary[i].q75) + "\n";
  return out;
}

}  // namespace sysid
