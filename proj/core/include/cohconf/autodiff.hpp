#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cohconf::ad {

enum class Op : std::uint8_t {
  Const,
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Pow,
  Sigmoid,
  LogSigmoid,
  Max,
  Min,
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape is
/// alive and not cleared.
class Var {
 public:
  Var() = default;

  double value() const;
  std::uint32_t index() const noexcept { return index_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

/// Append-only scalar reverse-mode tape. Local partial derivatives are
/// recorded at forward time, so the reverse sweep is a single pass of
/// multiply-adds over the arena in reverse append order.
///
/// Every forward value must be finite; a NaN or infinity raises
/// NonFiniteValue at the operation that produced it.
class Tape {
 public:
  static constexpr std::uint32_t kNoParent = 0xFFFFFFFFu;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(double value);
  /// A differentiable input (a parameter).
  Var leaf(double value);

  double value(Var v) const { return nodes_[v.index()].value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(Var v) const { return nodes_[v.index()].op; }
  void clear() { nodes_.clear(); }

  /// Adjoints d(root)/d(node) for every node on the tape.
  /// Throws NonFiniteGradient if any adjoint is NaN or infinite.
  std::vector<double> backward(Var root) const;

  /// d(root)/d(leaf) for each requested leaf, in the given order.
  std::vector<double> gradient(Var root, std::span<const Var> leaves) const;

  // Node constructors used by the free-function operators.
  Var unary(Op op, Var a, double value, double da);
  Var binary(Op op, Var a, Var b, double value, double da, double db);

 private:
  struct Node {
    double value;
    double da;
    double db;
    std::uint32_t a;
    std::uint32_t b;
    Op op;
  };

  Var push(Node node);
  void sweep(Var root, std::vector<double>& adj) const;

  std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var operator-(Var a);

Var exp(Var a);
Var log(Var a);
Var pow(Var a, double exponent);
Var sigmoid(Var a);
/// log(sigmoid(a)) without the underflow of the composed form.
Var log_sigmoid(Var a);
/// Subgradient goes to the left argument on ties.
Var max(Var a, Var b);
/// Subgradient goes to the left argument on ties.
Var min(Var a, Var b);

// Composites.
Var sum(std::span<const Var> xs);
Var max_all(std::span<const Var> xs);
Var min_all(std::span<const Var> xs);
/// Numerically stable softmax; the shift by max(xs) is taken as a constant,
/// which leaves the gradient unchanged.
std::vector<Var> softmax(std::span<const Var> xs);
/// Maps xs to [0,1] by (x - min) / (max - min). A zero range maps every entry
/// to the constant 0.5 (no gradient).
std::vector<Var> min_max_normalize(std::span<const Var> xs);

/// Scalar function of a parameter vector, built on the supplied tape.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares backward() against central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h and returns the largest relative error
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Throws NonFiniteValue when f is not finite around `params`.
double check_gradient(const ScalarFunction& f, std::span<const double> params, double h);

/// Value and gradient of f at params.
double value_and_gradient(const ScalarFunction& f, std::span<const double> params, std::vector<double>& grad);

}  // namespace cohconf::ad
