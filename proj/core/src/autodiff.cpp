#include "cohconf/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "cohconf/error.hpp"

namespace cohconf::ad {

double Var::value() const { return tape_->value(*this); }

namespace {

// Arena storage recycled per thread: training builds one large tape per
// step, and fresh allocations of that size cost more in page faults than
// the arithmetic does.
template <class T>
std::vector<std::vector<T>>& pool() {
  thread_local std::vector<std::vector<T>> p;
  return p;
}

}  // namespace

Tape::Tape() {
  auto& p = pool<Node>();
  if (!p.empty()) {
    nodes_ = std::move(p.back());
    p.pop_back();
    nodes_.clear();
  } else {
    nodes_.reserve(1024);
  }
}

Tape::~Tape() {
  auto& p = pool<Node>();
  if (p.size() < 4) p.push_back(std::move(nodes_));
}

Var Tape::push(Node node) {
  if (!std::isfinite(node.value)) {
    throw Error(ErrorCode::NonFiniteValue, "non-finite forward value at tape node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(node);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(double value) { return push({value, 0.0, 0.0, kNoParent, kNoParent, Op::Const}); }

Var Tape::leaf(double value) { return push({value, 0.0, 0.0, kNoParent, kNoParent, Op::Leaf}); }

Var Tape::unary(Op op, Var a, double value, double da) {
  assert(a.tape() == this);
  return push({value, da, 0.0, a.index(), kNoParent, op});
}

Var Tape::binary(Op op, Var a, Var b, double value, double da, double db) {
  assert(a.tape() == this && b.tape() == this);
  return push({value, da, db, a.index(), b.index(), op});
}

void Tape::sweep(Var root, std::vector<double>& adj) const {
  adj.assign(nodes_.size(), 0.0);
  adj[root.index()] = 1.0;
  for (std::size_t i = root.index() + 1; i-- > 0;) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    if (n.a != kNoParent) adj[n.a] += g * n.da;
    if (n.b != kNoParent) adj[n.b] += g * n.db;
  }
  for (std::size_t i = 0; i < adj.size(); ++i) {
    if (!std::isfinite(adj[i])) {
      throw Error(ErrorCode::NonFiniteGradient, "non-finite adjoint at tape node " + std::to_string(i));
    }
  }
}

std::vector<double> Tape::backward(Var root) const {
  std::vector<double> adj;
  sweep(root, adj);
  return adj;
}

std::vector<double> Tape::gradient(Var root, std::span<const Var> leaves) const {
  thread_local std::vector<double> adj;
  sweep(root, adj);
  std::vector<double> out;
  out.reserve(leaves.size());
  for (Var l : leaves) out.push_back(adj[l.index()]);
  return out;
}

Var operator+(Var a, Var b) { return a.tape()->binary(Op::Add, a, b, a.value() + b.value(), 1.0, 1.0); }
Var operator+(Var a, double b) { return a.tape()->unary(Op::Add, a, a.value() + b, 1.0); }
Var operator+(double a, Var b) { return b + a; }
Var operator-(Var a, Var b) { return a.tape()->binary(Op::Sub, a, b, a.value() - b.value(), 1.0, -1.0); }
Var operator-(Var a, double b) { return a.tape()->unary(Op::Sub, a, a.value() - b, 1.0); }
Var operator-(double a, Var b) { return b.tape()->unary(Op::Sub, b, a - b.value(), -1.0); }
Var operator*(Var a, Var b) {
  return a.tape()->binary(Op::Mul, a, b, a.value() * b.value(), b.value(), a.value());
}
Var operator*(Var a, double b) { return a.tape()->unary(Op::Mul, a, a.value() * b, b); }
Var operator*(double a, Var b) { return b * a; }
Var operator/(Var a, Var b) {
  const double bv = b.value();
  return a.tape()->binary(Op::Div, a, b, a.value() / bv, 1.0 / bv, -a.value() / (bv * bv));
}
Var operator/(Var a, double b) { return a.tape()->unary(Op::Div, a, a.value() / b, 1.0 / b); }
Var operator/(double a, Var b) {
  const double bv = b.value();
  return b.tape()->unary(Op::Div, b, a / bv, -a / (bv * bv));
}
Var operator-(Var a) { return a.tape()->unary(Op::Neg, a, -a.value(), -1.0); }

Var exp(Var a) {
  const double e = std::exp(a.value());
  return a.tape()->unary(Op::Exp, a, e, e);
}

Var log(Var a) { return a.tape()->unary(Op::Log, a, std::log(a.value()), 1.0 / a.value()); }

Var pow(Var a, double exponent) {
  const double x = a.value();
  return a.tape()->unary(Op::Pow, a, std::pow(x, exponent), exponent * std::pow(x, exponent - 1.0));
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var sigmoid(Var a) {
  const double s = stable_sigmoid(a.value());
  return a.tape()->unary(Op::Sigmoid, a, s, s * (1.0 - s));
}

Var log_sigmoid(Var a) {
  const double x = a.value();
  // log sigma(x) = -log(1 + exp(-x)) = min(x, 0) - log1p(exp(-|x|))
  const double value = std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
  return a.tape()->unary(Op::LogSigmoid, a, value, stable_sigmoid(-x));
}

Var max(Var a, Var b) {
  const bool left = a.value() >= b.value();
  return a.tape()->binary(Op::Max, a, b, left ? a.value() : b.value(), left ? 1.0 : 0.0, left ? 0.0 : 1.0);
}

Var min(Var a, Var b) {
  const bool left = a.value() <= b.value();
  return a.tape()->binary(Op::Min, a, b, left ? a.value() : b.value(), left ? 1.0 : 0.0, left ? 0.0 : 1.0);
}

Var sum(std::span<const Var> xs) {
  assert(!xs.empty());
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc;
}

Var max_all(std::span<const Var> xs) {
  assert(!xs.empty());
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = max(acc, xs[i]);
  return acc;
}

Var min_all(std::span<const Var> xs) {
  assert(!xs.empty());
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = min(acc, xs[i]);
  return acc;
}

std::vector<Var> softmax(std::span<const Var> xs) {
  assert(!xs.empty());
  double shift = xs[0].value();
  for (Var x : xs) shift = std::max(shift, x.value());
  std::vector<Var> e;
  e.reserve(xs.size());
  for (Var x : xs) e.push_back(exp(x - shift));
  const Var z = sum(e);
  for (Var& ei : e) ei = ei / z;
  return e;
}

std::vector<Var> min_max_normalize(std::span<const Var> xs) {
  assert(!xs.empty());
  const Var lo = min_all(xs);
  const Var hi = max_all(xs);
  std::vector<Var> out;
  out.reserve(xs.size());
  Tape& tape = *xs[0].tape();
  if (!(hi.value() > lo.value())) {
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(tape.constant(0.5));
    return out;
  }
  const Var range = hi - lo;
  for (Var x : xs) out.push_back((x - lo) / range);
  return out;
}

double value_and_gradient(const ScalarFunction& f, std::span<const double> params, std::vector<double>& grad) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (double p : params) leaves.push_back(tape.leaf(p));
  const Var out = f(tape, leaves);
  grad = tape.gradient(out, leaves);
  return out.value();
}

double check_gradient(const ScalarFunction& f, std::span<const double> params, double h) {
  std::vector<double> analytic;
  value_and_gradient(f, params, analytic);

  auto evaluate = [&](const std::vector<double>& x) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(x.size());
    for (double p : x) leaves.push_back(tape.leaf(p));
    return f(tape, leaves).value();
  };

  std::vector<double> x(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = evaluate(x);
    x[i] = orig - h;
    const double down = evaluate(x);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    if (!std::isfinite(numeric)) throw Error(ErrorCode::NonFiniteValue, "central difference is not finite");
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace cohconf::ad
