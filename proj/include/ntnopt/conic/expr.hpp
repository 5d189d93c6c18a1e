#pragma once

#include <Eigen/Dense>
#include <map>
#include <utility>

namespace ntnopt::conic {

/// Sparse affine expression c0 + sum_i coef_i * x_i over program variables.
/// Ordered map keeps construction and serialization deterministic.
class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(double constant) : constant_(constant) {}  // NOLINT: implicit

  static LinExpr variable(int index, double coef = 1.0) {
    LinExpr e;
    e.coef_[index] = coef;
    return e;
  }

  double constant() const { return constant_; }
  const std::map<int, double>& coefficients() const { return coef_; }

  LinExpr& operator+=(const LinExpr& o) {
    constant_ += o.constant_;
    for (const auto& [i, v] : o.coef_) coef_[i] += v;
    return *this;
  }
  LinExpr& operator-=(const LinExpr& o) {
    constant_ -= o.constant_;
    for (const auto& [i, v] : o.coef_) coef_[i] -= v;
    return *this;
  }
  LinExpr& operator*=(double a) {
    constant_ *= a;
    for (auto& [i, v] : coef_) v *= a;
    return *this;
  }

  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
  friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

  double evaluate(const Eigen::VectorXd& x) const {
    double v = constant_;
    for (const auto& [i, c] : coef_) v += c * x[i];
    return v;
  }

  int max_var_index() const {
    return coef_.empty() ? -1 : coef_.rbegin()->first;
  }

  bool is_constant() const { return coef_.empty(); }

 private:
  double constant_ = 0.0;
  std::map<int, double> coef_;
};

}  // namespace ntnopt::conic
