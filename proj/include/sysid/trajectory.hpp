#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/matrix.hpp"
#include "sysid/rng.hpp"

namespace sysid {

enum class TargetKind { output, state };

/// One measured rollout: complete exogenous inputs and (possibly incomplete)
/// targets, which are outputs y or direct state measurements x. Missing
/// target cells are NaN.
struct Trajectory {
  std::string id;
  Matrix inputs;   // l x m
  Matrix targets;  // l x q, NaN marks a missing cell
  bool has_x0 = false;
  Matrix x0;  // n x 1 when known

  std::size_t length() const { return targets.rows(); }
};

struct TrajectorySet {
  TargetKind kind = TargetKind::output;
  std::size_t input_dim = 0;
  std::size_t target_dim = 0;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  bool empty() const { return trajectories.empty(); }
};

struct SegmentationSpec {
  std::optional<std::size_t> horizon;  // >= 2 when set
  std::size_t stride = 1;
  std::optional<std::size_t> horizon_val;
  std::size_t stride_val = 1;

  void validate() const {
    if (horizon && *horizon < 2)
      throw ContractError("SegmentationSpec: horizon must be >= 2 (one transition)");
    if (horizon_val && *horizon_val < 2)
      throw ContractError("SegmentationSpec: horizon_val must be >= 2");
    if (stride < 1 || stride_val < 1) throw ContractError("SegmentationSpec: stride must be >= 1");
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline bool is_nan_literal(const std::string& s) {
  return s.size() == 3 && (s[0] == 'n' || s[0] == 'N') && (s[1] == 'a' || s[1] == 'A') &&
         (s[2] == 'n' || s[2] == 'N');
}

inline double parse_cell(const std::string& raw, std::size_t line_no, const std::string& col) {
  const std::string s = trim(raw);
  if (s.empty())
    throw ParseError("line " + std::to_string(line_no) + ": empty cell in column " + col);
  if (is_nan_literal(s)) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + s + "' in column " +
                     col);
  return v;
}

}  // namespace detail

struct CsvDims {
  std::optional<std::size_t> inputs;
  std::optional<std::size_t> targets;
  std::optional<TargetKind> kind;
};

/**
 * Load trajectories from CSV with header
 *   traj_id, step, u_0..u_{m-1}, y_0..y_{p-1}   (or x_0..x_{n-1})
 * Rows are grouped by traj_id; steps must run 0,1,2,... within each
 * trajectory. `NaN` (any case) marks a missing target; NaN inputs are
 * rejected since inputs are exogenous and must be complete.
 */
inline TrajectorySet load_csv(const std::string& path, const CsvDims& expected = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  if (header.size() < 3 || header[0] != "traj_id" || header[1] != "step")
    throw ParseError(path + ": line 1: header must start with 'traj_id, step'");
  std::size_t m = 0;
  std::size_t col = 2;
  while (col < header.size() && header[col] == "u_" + std::to_string(m)) {
    ++m;
    ++col;
  }
  TargetKind kind;
  std::string target_prefix;
  if (col < header.size() && header[col] == "y_0") {
    kind = TargetKind::output;
    target_prefix = "y_";
  } else if (col < header.size() && header[col] == "x_0") {
    kind = TargetKind::state;
    target_prefix = "x_";
  } else {
    throw ParseError(path + ": line 1: expected y_0 or x_0 after input columns");
  }
  std::size_t q = 0;
  while (col < header.size() && header[col] == target_prefix + std::to_string(q)) {
    ++q;
    ++col;
  }
  if (col != header.size())
    throw ParseError(path + ": line 1: unexpected trailing column '" + header[col] + "'");
  if (expected.inputs && *expected.inputs != m)
    throw ParseError(path + ": expected " + std::to_string(*expected.inputs) +
                     " input columns, found " + std::to_string(m));
  if (expected.targets && *expected.targets != q)
    throw ParseError(path + ": expected " + std::to_string(*expected.targets) +
                     " target columns, found " + std::to_string(q));
  if (expected.kind && *expected.kind != kind)
    throw ParseError(path + ": target kind mismatch (y_* vs x_*)");

  struct Buffer {
    std::vector<double> inputs, targets;
    std::size_t steps = 0;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Buffer> buffers;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    const std::string id = detail::trim(cells[0]);
    auto [it, inserted] = buffers.try_emplace(id);
    if (inserted) order.push_back(id);
    Buffer& buf = it->second;
    const double step = detail::parse_cell(cells[1], line_no, "step");
    if (step != static_cast<double>(buf.steps))
      throw ParseError(path + ": line " + std::to_string(line_no) + ": non-contiguous step " +
                       detail::trim(cells[1]) + " for trajectory '" + id + "' (expected " +
                       std::to_string(buf.steps) + ")");
    for (std::size_t j = 0; j < m; ++j) {
      const double v = detail::parse_cell(cells[2 + j], line_no, header[2 + j]);
      if (std::isnan(v))
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": NaN input in column " + header[2 + j] + " (inputs must be complete)");
      buf.inputs.push_back(v);
    }
    for (std::size_t j = 0; j < q; ++j)
      buf.targets.push_back(detail::parse_cell(cells[2 + m + j], line_no, header[2 + m + j]));
    ++buf.steps;
  }
  TrajectorySet set;
  set.kind = kind;
  set.input_dim = m;
  set.target_dim = q;
  for (const auto& id : order) {
    Buffer& buf = buffers[id];
    Trajectory t;
    t.id = id;
    t.inputs = Matrix(buf.steps, m, std::move(buf.inputs));
    t.targets = Matrix(buf.steps, q, std::move(buf.targets));
    set.trajectories.push_back(std::move(t));
  }
  return set;
}

inline void save_csv(const TrajectorySet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "traj_id,step";
  for (std::size_t j = 0; j < set.input_dim; ++j) out << ",u_" << j;
  const char* prefix = set.kind == TargetKind::output ? ",y_" : ",x_";
  for (std::size_t j = 0; j < set.target_dim; ++j) out << prefix << j;
  out << "\n";
  for (const auto& t : set.trajectories) {
    for (std::size_t k = 0; k < t.length(); ++k) {
      out << t.id << "," << k;
      for (std::size_t j = 0; j < set.input_dim; ++j) out << "," << format_double(t.inputs(k, j));
      for (std::size_t j = 0; j < set.target_dim; ++j) out << "," << format_double(t.targets(k, j));
      out << "\n";
    }
  }
}

/**
 * Cut state trajectories into overlapping segments of `horizon` steps whose
 * starts are `stride` apart; each segment anchors its own initial state at
 * the measured state where it begins. A trajectory of length l yields
 * floor((l - horizon)/stride) + 1 segments. No horizon returns the set
 * unchanged; too-short trajectories contribute zero segments and bump the
 * warning counter, as do segments whose anchor state has missing entries.
 */
inline TrajectorySet segment(const TrajectorySet& set, const SegmentationSpec& spec,
                             std::size_t* warnings = nullptr) {
  spec.validate();
  if (!spec.horizon) return set;
  if (set.kind != TargetKind::state)
    throw ContractError("segment: only input-state trajectories can be segmented");
  const std::size_t horizon = *spec.horizon;
  TrajectorySet out;
  out.kind = set.kind;
  out.input_dim = set.input_dim;
  out.target_dim = set.target_dim;
  for (const auto& t : set.trajectories) {
    if (t.length() < horizon) {
      if (warnings) ++*warnings;
      continue;
    }
    const std::size_t count = (t.length() - horizon) / spec.stride + 1;
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t start = j * spec.stride;
      Trajectory seg;
      seg.id = t.id + "#" + std::to_string(j);
      seg.inputs = Matrix(horizon, set.input_dim);
      seg.targets = Matrix(horizon, set.target_dim);
      for (std::size_t k = 0; k < horizon; ++k) {
        for (std::size_t c = 0; c < set.input_dim; ++c) seg.inputs(k, c) = t.inputs(start + k, c);
        for (std::size_t c = 0; c < set.target_dim; ++c)
          seg.targets(k, c) = t.targets(start + k, c);
      }
      bool anchor_ok = true;
      for (std::size_t c = 0; c < set.target_dim; ++c)
        if (std::isnan(t.targets(start, c))) anchor_ok = false;
      if (!anchor_ok) {
        if (warnings) ++*warnings;
        continue;
      }
      seg.has_x0 = true;
      seg.x0 = Matrix(set.target_dim, 1);
      for (std::size_t c = 0; c < set.target_dim; ++c) seg.x0(c, 0) = t.targets(start, c);
      out.trajectories.push_back(std::move(seg));
    }
  }
  return out;
}

/// Seeded random partition of {0..count-1} into batches; the final partial
/// batch is emitted, so every epoch covers the whole set exactly once.
inline std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size,
                                                     Rng& rng) {
  if (batch_size < 1) throw ContractError("batches: batch_size must be >= 1");
  std::vector<std::size_t> perm(count);
  for (std::size_t i = 0; i < count; ++i) perm[i] = i;
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const std::size_t j = i + rng.below(count - i);
    std::swap(perm[i], perm[j]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t at = 0; at < count; at += batch_size) {
    const std::size_t end = std::min(count, at + batch_size);
    out.emplace_back(perm.begin() + at, perm.begin() + end);
  }
  return out;
}

/**
 * Per-dimension affine rescaling record. Dimensions with standard deviation
 * below 1e-12 are left untouched (mean 0, scale 1) and counted as warnings.
 */
struct Scaler {
  std::vector<double> input_mean, input_std;
  std::vector<double> target_mean, target_std;
  std::size_t degenerate_dimensions = 0;

  TrajectorySet apply(const TrajectorySet& set) const {
    TrajectorySet out = set;
    for (auto& t : out.trajectories) {
      for (std::size_t k = 0; k < t.length(); ++k) {
        for (std::size_t j = 0; j < set.input_dim; ++j)
          t.inputs(k, j) = (t.inputs(k, j) - input_mean[j]) / input_std[j];
        for (std::size_t j = 0; j < set.target_dim; ++j)
          t.targets(k, j) = (t.targets(k, j) - target_mean[j]) / target_std[j];
      }
      if (t.has_x0 && set.kind == TargetKind::state)
        for (std::size_t j = 0; j < set.target_dim; ++j)
          t.x0(j, 0) = (t.x0(j, 0) - target_mean[j]) / target_std[j];
    }
    return out;
  }

  TrajectorySet invert(const TrajectorySet& set) const {
    TrajectorySet out = set;
    for (auto& t : out.trajectories) {
      for (std::size_t k = 0; k < t.length(); ++k) {
        for (std::size_t j = 0; j < set.input_dim; ++j)
          t.inputs(k, j) = t.inputs(k, j) * input_std[j] + input_mean[j];
        for (std::size_t j = 0; j < set.target_dim; ++j)
          t.targets(k, j) = t.targets(k, j) * target_std[j] + target_mean[j];
      }
      if (t.has_x0 && set.kind == TargetKind::state)
        for (std::size_t j = 0; j < set.target_dim; ++j)
          t.x0(j, 0) = t.x0(j, 0) * target_std[j] + target_mean[j];
    }
    return out;
  }
};

inline std::pair<TrajectorySet, Scaler> standardize(const TrajectorySet& set) {
  Scaler s;
  auto stats = [&](bool targets, std::size_t dim, std::vector<double>& means,
                   std::vector<double>& stds) {
    means.assign(dim, 0.0);
    stds.assign(dim, 1.0);
    for (std::size_t j = 0; j < dim; ++j) {
      double sum = 0, count = 0;
      for (const auto& t : set.trajectories)
        for (std::size_t k = 0; k < t.length(); ++k) {
          const double v = targets ? t.targets(k, j) : t.inputs(k, j);
          if (std::isnan(v)) continue;
          sum += v;
          count += 1;
        }
      if (count == 0) {
        ++s.degenerate_dimensions;
        continue;
      }
      const double mean = sum / count;
      double var = 0;
      for (const auto& t : set.trajectories)
        for (std::size_t k = 0; k < t.length(); ++k) {
          const double v = targets ? t.targets(k, j) : t.inputs(k, j);
          if (std::isnan(v)) continue;
          var += (v - mean) * (v - mean);
        }
      const double sd = std::sqrt(var / count);
      if (sd < 1e-12) {
        ++s.degenerate_dimensions;  // left unscaled
        continue;
      }
      means[j] = mean;
      stds[j] = sd;
    }
  };
  stats(false, set.input_dim, s.input_mean, s.input_std);
  stats(true, set.target_dim, s.target_mean, s.target_std);
  return {s.apply(set), s};
}

}  // namespace sysid
