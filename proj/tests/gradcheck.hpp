#ifndef UAPR_TESTS_GRADCHECK_HPP_
#define UAPR_TESTS_GRADCHECK_HPP_

// Central finite-difference oracle. It only ever evaluates the forward
// function on perturbed inputs and never looks at the backward pass it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "uapr/autodiff.hpp"

namespace uapr::testing {

// Builds a scalar from the given leaves on the supplied tape.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_error = 0.0;
  int probes = 0;
  int failures = 0;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-2) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.constant(t));
  return fn(tape, leaves).value().item();
}

inline std::vector<Tensor> analytic_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.variable(t));
  tape.backward(fn(tape, leaves));
  std::vector<Tensor> grads;
  for (const Var& v : leaves) grads.push_back(tape.grad(v));
  return grads;
}

// One probe: random direction over all inputs, compare directional derivative.
inline double directional_probe(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                                std::mt19937_64& rng, double step) {
  std::normal_distribution<double> normal;
  std::vector<Tensor> dir;
  double sq = 0.0;
  for (const Tensor& t : inputs) {
    Tensor d(t.shape());
    for (Index i = 0; i < d.size(); ++i) d[i] = normal(rng);
    sq += d.values().square().sum();
    dir.push_back(std::move(d));
  }
  for (Tensor& d : dir) d.values() /= std::sqrt(sq);

  const std::vector<Tensor> grads = analytic_gradients(fn, inputs);
  double analytic = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    analytic += (grads[i].values() * dir[i].values()).sum();
  }
  std::vector<Tensor> plus = inputs, minus = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    plus[i].values() += step * dir[i].values();
    minus[i].values() -= step * dir[i].values();
  }
  const double numeric = (evaluate(fn, plus) - evaluate(fn, minus)) / (2.0 * step);
  return relative_error(analytic, numeric);
}

// Runs `probes` directional checks; `make_inputs` draws fresh inputs per probe.
inline GradCheckResult gradcheck(const ScalarFn& fn,
                                 const std::function<std::vector<Tensor>(std::mt19937_64&)>& make_inputs,
                                 int probes, double tolerance, std::uint64_t seed = 7,
                                 double step = 1e-3) {
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (int p = 0; p < probes; ++p) {
    const double err = directional_probe(fn, make_inputs(rng), rng, step);
    r.max_error = std::max(r.max_error, err);
    r.failures += err > tolerance ? 1 : 0;
    ++r.probes;
  }
  return r;
}

inline Tensor uniform_tensor(Shape shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Fixed random projection so tensor-valued outputs reduce to a scalar w.x.
inline Var project(Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const Index n = x.value().size();
  Tape& tape = x.tape();
  Var w = tape.constant(uniform_tensor(Shape{1, n}, rng, -1.0, 1.0));
  return fully_connected(reshape(x, Shape{1, n}), w, tape.constant(Tensor(Shape{1})));
}

}  // namespace uapr::testing

#endif  // UAPR_TESTS_GRADCHECK_HPP_
