#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sysid/linalg.hpp"
#include "sysid/matrix.hpp"

namespace sysid {

/**
 * A value with an optional gradient accumulator. Optimizer steps never touch
 * a parameter whose trainable flag is off; backward() accumulates into grad.
 */
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), trainable(train) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

/// A matrix with an optional handle into the recording tape. A tensor with
/// node < 0 is a constant: backward passes never produce a gradient for it.
struct Tensor {
  Matrix value;
  int node = -1;

  std::size_t rows() const { return value.rows(); }
  std::size_t cols() const { return value.cols(); }
  bool is_constant() const { return node < 0; }
};

enum class BinaryKind { add, sub, matmul, hadamard };
enum class UnaryKind { transpose, scale, sigmoid, neg, mean_over_all, sum_over_all, abs_value };

/**
 * Reverse-mode gradient tape over dense matrices. Operations are recorded in
 * topological order together with the forward values their backward rules
 * need; backward(root) replays them in reverse. Single-threaded per tape;
 * independent tapes may run concurrently.
 */
class GradientTape {
 public:
  using GradientMap = std::unordered_map<int, Matrix>;

  GradientTape() = default;
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  Tensor constant(Matrix m) const { return Tensor{std::move(m), -1}; }

  /// Register a parameter as a leaf; repeated calls return the same node.
  Tensor watch(Parameter& p) {
    auto it = watched_.find(&p);
    if (it != watched_.end()) return Tensor{p.value, it->second};
    Node node;
    node.kind = Kind::leaf;
    node.rows = p.value.rows();
    node.cols = p.value.cols();
    node.param = &p;
    const int id = push(std::move(node));
    watched_.emplace(&p, id);
    return Tensor{p.value, id};
  }

  /// Anonymous differentiable leaf (used by tests and probes).
  Tensor leaf(Matrix m) {
    Node node;
    node.kind = Kind::leaf;
    node.rows = m.rows();
    node.cols = m.cols();
    const int id = push(std::move(node));
    return Tensor{std::move(m), id};
  }

  Tensor record_binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
    Matrix out;
    switch (kind) {
      case BinaryKind::add:
        out = a.value + b.value;
        break;
      case BinaryKind::sub:
        out = a.value - b.value;
        break;
      case BinaryKind::matmul:
        out = a.value * b.value;
        break;
      case BinaryKind::hadamard:
        out = hadamard(a.value, b.value);
        break;
    }
    if (a.is_constant() && b.is_constant()) return constant(std::move(out));
    Node node;
    node.kind = to_kind(kind);
    node.a = a.node;
    node.b = b.node;
    node.rows = out.rows();
    node.cols = out.cols();
    node.a_rows = a.rows();
    node.a_cols = a.cols();
    node.b_rows = b.rows();
    node.b_cols = b.cols();
    if (kind == BinaryKind::matmul || kind == BinaryKind::hadamard) {
      if (b.node >= 0) node.a_val = a.value;  // needed for dB
      if (a.node >= 0) node.b_val = b.value;  // needed for dA
    }
    return Tensor{std::move(out), push(std::move(node))};
  }

  Tensor record_unary(UnaryKind kind, const Tensor& a, double c = 0.0) {
    Matrix out;
    switch (kind) {
      case UnaryKind::transpose:
        out = a.value.transposed();
        break;
      case UnaryKind::scale:
        out = c * a.value;
        break;
      case UnaryKind::sigmoid: {
        out = a.value;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = 1.0 / (1.0 + std::exp(-out[k]));
        break;
      }
      case UnaryKind::neg:
        out = -a.value;
        break;
      case UnaryKind::mean_over_all:
        out = Matrix(1, 1, mean_all(a.value));
        break;
      case UnaryKind::sum_over_all:
        out = Matrix(1, 1, sum_all(a.value));
        break;
      case UnaryKind::abs_value: {
        out = a.value;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::fabs(out[k]);
        break;
      }
    }
    if (a.is_constant()) return constant(std::move(out));
    Node node;
    node.kind = to_kind(kind);
    node.a = a.node;
    node.rows = out.rows();
    node.cols = out.cols();
    node.a_rows = a.rows();
    node.a_cols = a.cols();
    node.scalar = c;
    if (kind == UnaryKind::sigmoid) node.extra = out;       // sigma(x), reused by the backward rule
    if (kind == UnaryKind::abs_value) node.extra = a.value; // sign comes from the input
    return Tensor{std::move(out), push(std::move(node))};
  }

  /// Inverse via LU with partial pivoting; backward is -A^-T G A^-T.
  Tensor record_inverse(const Tensor& a) {
    if (a.rows() != a.cols())
      throw DimensionError("record_inverse: matrix not square, " + a.value.shape_str());
    double rcond = 0;
    Matrix inv;
    try {
      inv = linalg::invert(a.value, &rcond);
    } catch (const SingularMatrixError&) {
      throw SingularMatrixError("record_inverse (tape node #" + std::to_string(nodes_.size()) +
                                "): matrix is exactly singular");
    }
    if (rcond < 1e-12)
      throw SingularMatrixError("record_inverse (tape node #" + std::to_string(nodes_.size()) +
                                "): reciprocal condition " + format_double(rcond) +
                                " below 1e-12");
    if (a.is_constant()) return constant(std::move(inv));
    Node node;
    node.kind = Kind::inverse;
    node.a = a.node;
    node.rows = inv.rows();
    node.cols = inv.cols();
    node.a_rows = a.rows();
    node.a_cols = a.cols();
    node.extra = inv;
    return Tensor{std::move(inv), push(std::move(node))};
  }

  /**
   * Maximum eigenvalue modulus as a 1x1 tensor. When the dominant modulus is
   * attained by two distinct eigenvalue groups (within 1e-8 relative) the
   * value is treated as a constant in the backward pass and the tape is
   * flagged; a complex conjugate pair counts as a single group.
   */
  Tensor spectral_radius(const Tensor& a) {
    if (a.rows() != a.cols())
      throw DimensionError("spectral_radius: matrix not square, " + a.value.shape_str());
    linalg::SpectralRadiusInfo info = linalg::spectral_radius_with_gradient(a.value);
    Matrix out(1, 1, info.value);
    if (a.is_constant()) return constant(std::move(out));
    if (info.degenerate) ++degenerate_eigenvalue_events_;
    Node node;
    node.kind = Kind::spectral_radius;
    node.a = a.node;
    node.rows = 1;
    node.cols = 1;
    node.a_rows = a.rows();
    node.a_cols = a.cols();
    node.extra = info.degenerate ? Matrix(a.rows(), a.cols()) : info.gradient;
    return Tensor{std::move(out), push(std::move(node))};
  }

  // Convenience spellings used throughout the library.
  Tensor add(const Tensor& a, const Tensor& b) { return record_binary(BinaryKind::add, a, b); }
  Tensor sub(const Tensor& a, const Tensor& b) { return record_binary(BinaryKind::sub, a, b); }
  Tensor matmul(const Tensor& a, const Tensor& b) { return record_binary(BinaryKind::matmul, a, b); }
  Tensor mul_elem(const Tensor& a, const Tensor& b) {
    return record_binary(BinaryKind::hadamard, a, b);
  }
  Tensor transpose(const Tensor& a) { return record_unary(UnaryKind::transpose, a); }
  Tensor scale(const Tensor& a, double c) { return record_unary(UnaryKind::scale, a, c); }
  Tensor sigmoid(const Tensor& a) { return record_unary(UnaryKind::sigmoid, a); }
  Tensor neg(const Tensor& a) { return record_unary(UnaryKind::neg, a); }
  Tensor mean_over_all(const Tensor& a) { return record_unary(UnaryKind::mean_over_all, a); }
  Tensor sum_over_all(const Tensor& a) { return record_unary(UnaryKind::sum_over_all, a); }
  Tensor abs(const Tensor& a) { return record_unary(UnaryKind::abs_value, a); }

  /**
   * Reverse sweep from a scalar root. Gradients are accumulated into every
   * trainable Parameter reachable from the root, and the returned map holds
   * one gradient per tape node (zeros for nodes the root does not reach).
   */
  GradientMap backward(const Tensor& root) {
    if (root.rows() != 1 || root.cols() != 1)
      throw ContractError("backward: root must be scalar (1x1), got " + root.value.shape_str());
    GradientMap map;
    if (root.is_constant()) return map;  // constant-only graph
    if (root.node >= static_cast<int>(nodes_.size()))
      throw ContractError("backward: root tensor does not belong to this tape");
    std::vector<Matrix> grads(nodes_.size());
    grads[static_cast<std::size_t>(root.node)] = Matrix(1, 1, 1.0);
    for (int i = root.node; i >= 0; --i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      if (grads[ui].empty()) continue;
      propagate(nodes_[ui], grads[ui], grads);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& node = nodes_[i];
      Matrix g = grads[i].empty() ? Matrix(node.rows, node.cols) : std::move(grads[i]);
      if (node.kind == Kind::leaf && node.param != nullptr && node.param->trainable)
        node.param->grad = node.param->grad + g;
      map.emplace(static_cast<int>(i), std::move(g));
    }
    return map;
  }

  std::size_t size() const { return nodes_.size(); }
  int degenerate_eigenvalue_events() const { return degenerate_eigenvalue_events_; }

 private:
  enum class Kind {
    leaf,
    add,
    sub,
    matmul,
    hadamard,
    transpose,
    scale,
    sigmoid,
    neg,
    mean_over_all,
    sum_over_all,
    abs_value,
    inverse,
    spectral_radius
  };

  struct Node {
    Kind kind = Kind::leaf;
    int a = -1, b = -1;
    std::size_t rows = 0, cols = 0;
    std::size_t a_rows = 0, a_cols = 0, b_rows = 0, b_cols = 0;
    Matrix a_val, b_val, extra;
    double scalar = 0;
    Parameter* param = nullptr;
  };

  static Kind to_kind(BinaryKind k) {
    switch (k) {
      case BinaryKind::add: return Kind::add;
      case BinaryKind::sub: return Kind::sub;
      case BinaryKind::matmul: return Kind::matmul;
      case BinaryKind::hadamard: return Kind::hadamard;
    }
    return Kind::add;
  }
  static Kind to_kind(UnaryKind k) {
    switch (k) {
      case UnaryKind::transpose: return Kind::transpose;
      case UnaryKind::scale: return Kind::scale;
      case UnaryKind::sigmoid: return Kind::sigmoid;
      case UnaryKind::neg: return Kind::neg;
      case UnaryKind::mean_over_all: return Kind::mean_over_all;
      case UnaryKind::sum_over_all: return Kind::sum_over_all;
      case UnaryKind::abs_value: return Kind::abs_value;
    }
    return Kind::neg;
  }

  int push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accumulate(std::vector<Matrix>& grads, int target, std::size_t rows, std::size_t cols,
                  const Matrix& g) {
    if (target < 0) return;
    Matrix& slot = grads[static_cast<std::size_t>(target)];
    if (slot.empty()) slot = Matrix(rows, cols);
    for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += g[k];
  }

  void propagate(const Node& node, const Matrix& g, std::vector<Matrix>& grads) {
    switch (node.kind) {
      case Kind::leaf:
        break;
      case Kind::add:
        accumulate(grads, node.a, node.a_rows, node.a_cols, g);
        accumulate(grads, node.b, node.b_rows, node.b_cols, g);
        break;
      case Kind::sub:
        accumulate(grads, node.a, node.a_rows, node.a_cols, g);
        accumulate(grads, node.b, node.b_rows, node.b_cols, -g);
        break;
      case Kind::matmul:
        if (node.a >= 0) accumulate(grads, node.a, node.a_rows, node.a_cols, g * node.b_val.transposed());
        if (node.b >= 0) accumulate(grads, node.b, node.b_rows, node.b_cols, node.a_val.transposed() * g);
        break;
      case Kind::hadamard:
        if (node.a >= 0) accumulate(grads, node.a, node.a_rows, node.a_cols, hadamard(g, node.b_val));
        if (node.b >= 0) accumulate(grads, node.b, node.b_rows, node.b_cols, hadamard(g, node.a_val));
        break;
      case Kind::transpose:
        accumulate(grads, node.a, node.a_rows, node.a_cols, g.transposed());
        break;
      case Kind::scale:
        accumulate(grads, node.a, node.a_rows, node.a_cols, node.scalar * g);
        break;
      case Kind::sigmoid: {
        Matrix d = g;
        for (std::size_t k = 0; k < d.size(); ++k) {
          const double y = node.extra[k];
          d[k] *= y * (1.0 - y);
        }
        accumulate(grads, node.a, node.a_rows, node.a_cols, d);
        break;
      }
      case Kind::neg:
        accumulate(grads, node.a, node.a_rows, node.a_cols, -g);
        break;
      case Kind::mean_over_all: {
        const double s = g(0, 0) / static_cast<double>(node.a_rows * node.a_cols);
        accumulate(grads, node.a, node.a_rows, node.a_cols, Matrix(node.a_rows, node.a_cols, s));
        break;
      }
      case Kind::sum_over_all:
        accumulate(grads, node.a, node.a_rows, node.a_cols,
                   Matrix(node.a_rows, node.a_cols, g(0, 0)));
        break;
      case Kind::abs_value: {
        Matrix d = g;
        for (std::size_t k = 0; k < d.size(); ++k) {
          const double x = node.extra[k];
          d[k] *= (x > 0) - (x < 0);
        }
        accumulate(grads, node.a, node.a_rows, node.a_cols, d);
        break;
      }
      case Kind::inverse: {
        // dL/dA = -Y^T G Y^T with Y = A^-1
        const Matrix yt = node.extra.transposed();
        accumulate(grads, node.a, node.a_rows, node.a_cols, -(yt * g * yt));
        break;
      }
      case Kind::spectral_radius:
        accumulate(grads, node.a, node.a_rows, node.a_cols, g(0, 0) * node.extra);
        break;
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, int> watched_;
  int degenerate_eigenvalue_events_ = 0;
};

}  // namespace sysid
