#ifndef UAPR_AUTODIFF_HPP_
#define UAPR_AUTODIFF_HPP_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "uapr/tensor.hpp"

namespace uapr {

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardContext {
  const Tensor& output;
  const Tensor& output_grad;
  std::vector<const Tensor*> inputs;
  // Null where the matching input does not require a gradient.
  std::vector<Tensor*> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Records operations in execution order and replays them in reverse to
// accumulate gradients. Nodes are appended only, so ids are topologically
// ordered by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Internal entry point used by the operations below.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1; loss must hold exactly one element.
  void backward(Var loss);
  // Seeds the output gradient explicitly (vector-Jacobian product).
  void backward(Var output, const Tensor& seed);

  void zero_grad();

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool has_grad(Var v) const;
  // Zero-filled tensor when the node has not received a gradient yet.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All inputs must live on the same tape.

/// Cross-correlation of input [N,C,H,W] with kernel [K,C,kh,kw].
Var conv2d(Var input, Var kernel, int stride, int padding);
/// Adds bias [C] along axis 1 of a rank-2 or rank-4 tensor.
Var add_channel_bias(Var input, Var bias);
Var relu(Var x);
/// Global max over H,W: [N,C,H,W] -> [N,C]. Ties resolve to the first position.
Var mac_pool(Var input);
/// Generalized mean over H,W with fixed exponent p >= 1 on non-negative input.
Var gem_pool(Var input, double p);
/// Unit L2 norm along the last axis.
Var l2_normalize(Var x);
/// Align-corners bilinear resampling of [C,H,W] or [N,C,H,W].
Var bilinear_resize(Var input, Index out_h, Index out_w);
/// ||a - b||_2 over all elements; a scalar.
Var euclidean_distance(Var a, Var b);
/// x [N,D] times weight [K,D] transposed plus bias [K].
Var fully_connected(Var x, Var weight, Var bias);
/// Mean softmax cross-entropy of logits [N,K] against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var clamp(Var x, double lo, double hi);
Var sum(Var x);
/// Sum of scalars; an empty list yields a constant zero on `tape`.
Var add_n(Tape& tape, std::span<const Var> terms);
/// Element at flat position i as a scalar.
Var pick(Var x, Index i);
Var reshape(Var x, Shape shape);

}  // namespace uapr

#endif  // UAPR_AUTODIFF_HPP_
