#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gapkit {

/// Largest supported order k. Bounds the fixed-size derivative buffers.
inline constexpr int kMaxOrder = 8;

namespace expr {

/// Thrown by the parser. `position()` is a 0-based character offset into the source.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { Syntax, UnknownIdentifier, VariableRange, Exponent };
  ParseError(Kind kind, std::size_t position, const std::string& what);
  Kind kind() const { return kind_; }
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

/// Evaluation hit a division by zero or produced a non-finite value.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Tanh, Exp };

struct Instr {
  Op op;
  double constant = 0.0;  // Const
  int index = 0;          // Var: 0-based variable, Pow: integer exponent
};

/// value + gradient, gradient length = arity.
struct Gradient {
  double value = 0.0;
  std::array<double, kMaxOrder> grad{};
};

/// value + gradient + Hessian, row-major.
struct Hessian {
  double value = 0.0;
  std::array<double, kMaxOrder> grad{};
  std::array<double, kMaxOrder * kMaxOrder> hess{};
  double h(int i, int j) const { return hess[i * kMaxOrder + j]; }
};

/// A compiled program in one variable, everything else folded to constants.
class UnivariateProgram {
 public:
  double value(double t) const;
  /// value and derivative
  std::pair<double, double> value_and_derivative(double t) const;
  /// true when the program is a + b t; then slope() and intercept() give b and a
  bool affine() const { return affine_; }
  double slope() const { return slope_; }
  double intercept() const { return intercept_; }

 private:
  friend class Expression;
  std::vector<Instr> code_;
  std::size_t depth_ = 0;
  bool affine_ = false;  // evaluated as intercept_ + slope_ * t
  double slope_ = 0.0, intercept_ = 0.0;
};

/// Parsed expression in x1..xk. Immutable after parsing.
class Expression {
 public:
  Expression() = default;
  static Expression parse(std::string_view text, int arity);

  int arity() const { return arity_; }
  const std::string& source() const { return source_; }
  /// infix rendering, fully parenthesized
  std::string to_string() const;
  bool empty() const { return code_.empty(); }

  double value(std::span<const double> x) const;
  Gradient gradient(std::span<const double> x) const;
  Hessian hessian(std::span<const double> x) const;

  /// Fix every variable except `axis` at `point` and fold.
  UnivariateProgram restrict_to_axis(int axis, std::span<const double> point) const;

  const std::vector<Instr>& code() const { return code_; }

 private:
  std::string source_;
  int arity_ = 0;
  std::vector<Instr> code_;  // postfix
  std::size_t depth_ = 0;
};

/// Sampled bounds on a closed tensor grid. Every entry is a max or min over grid nodes.
struct DerivativeBounds {
  int arity = 0;
  std::vector<double> lo, hi;      // box
  std::vector<int> resolution;     // nodes per axis, endpoints included
  std::vector<double> dsq_min;     // min (d_i phi)^2
  std::vector<double> dsq_max;     // max (d_i phi)^2
  double grad_norm_max = 0.0;      // max |grad phi|
  double hessian_norm_max = 0.0;   // max operator norm of the Hessian
  double grad_d1_norm_max = 0.0;   // max |grad d_1 phi|
  double phi_min = 0.0;
  double phi_max = 0.0;
  std::string second_derivative_method;
};

/// Visit every node of the closed grid on [lo, hi] with its Hessian jet, in lexicographic order.
void for_each_grid_node(const Expression& e, std::span<const double> lo, std::span<const double> hi,
                        std::span<const int> resolution,
                        const std::function<void(std::span<const double>, const Hessian&)>& visit);

DerivativeBounds sampled_derivative_bounds(const Expression& e, std::span<const double> lo,
                                           std::span<const double> hi, std::span<const int> resolution);

}  // namespace expr
}  // namespace gapkit
