#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "otsforge/optree.hpp"

namespace otsforge {

/// Row-major m x n_vars matrix of evaluation points.
class Points {
 public:
  Points() = default;
  Points(std::size_t n_vars, std::vector<double> data)
      : n_vars_(n_vars), data_(std::move(data)) {}

  [[nodiscard]] std::size_t n_vars() const { return n_vars_; }
  [[nodiscard]] std::size_t rows() const {
    return n_vars_ == 0 ? 0 : data_.size() / n_vars_;
  }
  [[nodiscard]] double operator()(std::size_t row, std::size_t var) const {
    return data_[row * n_vars_ + var];
  }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * n_vars_, n_vars_);
  }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }

 private:
  std::size_t n_vars_ = 0;
  std::vector<double> data_;
};

/// Value of one node given its operand values. `c` points at the node's
/// constants. Domain violations (log of x <= 0, sqrt of x < 0, negative base
/// with fractional exponent) yield NaN.
inline double apply_op(OpKind kind, double a, double b, const double* c,
                       double var_value) {
  switch (kind) {
    case OpKind::add: return a + b;
    case OpKind::sub: return a - b;
    case OpKind::mul: return a * b;
    case OpKind::div: return a / b;
    case OpKind::pow: return std::pow(a, b);
    case OpKind::neg: return -a;
    case OpKind::inv: return 1.0 / a;
    case OpKind::sin: return std::sin(a);
    case OpKind::cos: return std::cos(a);
    case OpKind::tan: return std::tan(a);
    case OpKind::exp: return std::exp(a);
    case OpKind::log: return a > 0.0 ? std::log(a) : std::nan("");
    case OpKind::sqrt: return a >= 0.0 ? std::sqrt(a) : std::nan("");
    case OpKind::abs: return std::fabs(a);
    case OpKind::linear: return c[0] * a + c[1];
    case OpKind::constant: return c[0];
    case OpKind::variable: return var_value;
  }
  return std::nan("");
}

/// Serial reference: pointwise recursive evaluation. Kept as the oracle for
/// the tape kernels and used by the finite-difference tests.
std::vector<double> evaluate_reference(const OpTree& tree, const Points& points);
double evaluate_point_reference(const OpTree& tree, std::span<const double> x);

/// Node-major forward/backward tape. Forward values are computed level by
/// level over blocks of points; blocks run in parallel when OpenMP is on.
/// Results are independent of the thread count: blocks are fixed-size and
/// gradient partials are reduced in block order.
class EvalTape {
 public:
  void forward(const OpTree& tree, const Points& points);

  [[nodiscard]] std::span<const double> output() const {
    return std::span<const double>(values_).first(n_points_);
  }
  [[nodiscard]] std::size_t n_points() const { return n_points_; }

  /// Vector-Jacobian product: grad[k] = sum_i weights[i] * d out_i / d c_k.
  /// Points with zero weight are skipped; points whose partials are not
  /// finite are dropped from the sum.
  void backward(const OpTree& tree, std::span<const double> weights,
                std::span<double> grad);

 private:
  std::size_t n_points_ = 0;
  std::size_t n_nodes_ = 0;
  std::vector<double> values_;  // node-major: values_[node * n_points_ + p]
  std::vector<double> partials_;
};

/// Forward evaluation through EvalTape; NaN marks domain violations.
std::vector<double> evaluate(const OpTree& tree, const Points& points);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
  std::size_t n_used = 0;
};

/// Mean squared error over points where both target and prediction are
/// finite, and its gradient with respect to the ConstArray. Throws
/// NoFinitePoints when no point survives.
LossGrad grad_constants(const OpTree& tree, const Points& points,
                        std::span<const double> targets);

}  // namespace otsforge
