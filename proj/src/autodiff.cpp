#include "uapr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uapr {

using RowMatrix = Tensor::RowMatrix;

// ---------------------------------------------------------------------------
// Var

Tape& Var::tape() const {
  if (!tape_) throw StructureError("variable is not bound to a tape");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

bool Var::requires_grad() const { return tape().requires_grad(*this); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Var Tape::variable(Tensor value) {
  Var v = record(std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite value produced on tape");
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    check_owned(in);
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw StructureError("variable does not belong to this tape");
  }
}

const Tape::Node& Tape::node(Var v) const {
  check_owned(v);
  return nodes_[v.id()];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
bool Tape::has_grad(Var v) const { return node(v).grad.has_value(); }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  return n.grad ? *n.grad : Tensor(n.value.shape());
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.reset();
}

void Tape::backward(Var loss) {
  const Node& n = node(loss);
  if (n.value.size() != 1) {
    throw DimensionError("backward() without a seed needs a single-element loss, got " +
                         n.value.shape().str());
  }
  backward(loss, Tensor(n.value.shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  check_owned(output);
  const std::size_t out = output.id();
  if (seed.shape() != nodes_[out].value.shape()) {
    throw DimensionError("seed shape " + seed.shape().str() + " does not match output " +
                         nodes_[out].value.shape().str());
  }
  if (!nodes_[out].requires_grad) return;

  std::vector<std::optional<Tensor>> pass(out + 1);
  pass[out] = seed;
  for (std::size_t id = out + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!pass[id] || !n.backward) continue;
    BackwardContext ctx{n.value, *pass[id], {}, {}};
    for (std::size_t in : n.inputs) {
      ctx.inputs.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!pass[in]) pass[in] = Tensor(nodes_[in].value.shape());
        ctx.input_grads.push_back(&*pass[in]);
      } else {
        ctx.input_grads.push_back(nullptr);
      }
    }
    n.backward(ctx);
  }

  for (std::size_t id = 0; id <= out; ++id) {
    if (!pass[id] || !nodes_[id].requires_grad) continue;
    if (!pass[id]->all_finite()) throw NumericError("non-finite gradient produced on tape");
    Node& n = nodes_[id];
    if (n.grad) {
      n.grad->values() += pass[id]->values();
    } else {
      n.grad = std::move(*pass[id]);
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw StructureError("operands live on different tapes");
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + t.shape().str());
  }
}

struct ConvGeometry {
  Index n, c, h, w, k, kh, kw, oh, ow;
  int stride, padding;
};

// Unfold one image [C,H,W] into columns [C*kh*kw, oh*ow].
void im2col(const double* img, const ConvGeometry& g, RowMatrix& col) {
  col.setZero(g.c * g.kh * g.kw, g.oh * g.ow);
  for (Index c = 0; c < g.c; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        const Index row = (c * g.kh + i) * g.kw + j;
        for (Index oy = 0; oy < g.oh; ++oy) {
          const Index y = oy * g.stride - g.padding + i;
          if (y < 0 || y >= g.h) continue;
          for (Index ox = 0; ox < g.ow; ++ox) {
            const Index x = ox * g.stride - g.padding + j;
            if (x < 0 || x >= g.w) continue;
            col(row, oy * g.ow + ox) = img[(c * g.h + y) * g.w + x];
          }
        }
      }
    }
  }
}

void col2im(const RowMatrix& col, const ConvGeometry& g, double* img) {
  for (Index c = 0; c < g.c; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        const Index row = (c * g.kh + i) * g.kw + j;
        for (Index oy = 0; oy < g.oh; ++oy) {
          const Index y = oy * g.stride - g.padding + i;
          if (y < 0 || y >= g.h) continue;
          for (Index ox = 0; ox < g.ow; ++ox) {
            const Index x = ox * g.stride - g.padding + j;
            if (x < 0 || x >= g.w) continue;
            img[(c * g.h + y) * g.w + x] += col(row, oy * g.ow + ox);
          }
        }
      }
    }
  }
}

// Per-axis interpolation table for align-corners resampling.
struct AxisTable {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

AxisTable make_axis_table(Index in, Index out) {
  AxisTable t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  const double step = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
  for (Index o = 0; o < out; ++o) {
    const double src = static_cast<double>(o) * step;
    Index lo = std::min<Index>(static_cast<Index>(std::floor(src)), in - 1);
    const auto s = static_cast<std::size_t>(o);
    t.lo[s] = lo;
    t.hi[s] = std::min<Index>(lo + 1, in - 1);
    t.frac[s] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

Var conv2d(Var input, Var kernel, int stride, int padding) {
  require_same_tape(input, kernel);
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  require_rank(x, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
  if (x.dim(1) != k.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) +
                         " channels but kernel expects " + std::to_string(k.dim(1)));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), 0, 0,
                 stride,   padding};
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + k.shape().str() + " exceeds padded input " +
                         x.shape().str());
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

  Tensor out(Shape{g.n, g.k, g.oh, g.ow});
  const auto kmat = k.matrix(g.k, g.c * g.kh * g.kw);
  RowMatrix col;
  const Index in_plane = g.c * g.h * g.w;
  const Index out_plane = g.k * g.oh * g.ow;
  for (Index n = 0; n < g.n; ++n) {
    im2col(x.data() + n * in_plane, g, col);
    Eigen::Map<RowMatrix>(out.data() + n * out_plane, g.k, g.oh * g.ow).noalias() = kmat * col;
  }

  return input.tape().record(std::move(out), {input, kernel}, [g](const BackwardContext& ctx) {
    const Tensor& x = *ctx.inputs[0];
    const auto kmat = ctx.inputs[1]->matrix(g.k, g.c * g.kh * g.kw);
    const Index in_plane = g.c * g.h * g.w;
    const Index out_plane = g.k * g.oh * g.ow;
    RowMatrix col;
    RowMatrix dcol;
    for (Index n = 0; n < g.n; ++n) {
      Eigen::Map<const RowMatrix> gout(ctx.output_grad.data() + n * out_plane, g.k, g.oh * g.ow);
      if (ctx.input_grads[1]) {
        im2col(x.data() + n * in_plane, g, col);
        ctx.input_grads[1]->matrix(g.k, g.c * g.kh * g.kw).noalias() += gout * col.transpose();
      }
      if (ctx.input_grads[0]) {
        dcol.noalias() = kmat.transpose() * gout;
        col2im(dcol, g, ctx.input_grads[0]->data() + n * in_plane);
      }
    }
  });
}

Var add_channel_bias(Var input, Var bias) {
  require_same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& b = bias.value();
  if (x.rank() != 2 && x.rank() != 4) {
    throw DimensionError("add_channel_bias: expected rank 2 or 4 input, got " + x.shape().str());
  }
  if (b.size() != x.dim(1)) {
    throw DimensionError("add_channel_bias: bias " + b.shape().str() + " vs input " +
                         x.shape().str());
  }
  const Index n = x.dim(0), c = x.dim(1), plane = x.size() / (n * c);
  Tensor out = x;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < c; ++j) out.values().segment((i * c + j) * plane, plane) += b[j];
  }
  return input.tape().record(std::move(out), {input, bias},
                             [n, c, plane](const BackwardContext& ctx) {
                               if (ctx.input_grads[0]) {
                                 ctx.input_grads[0]->values() += ctx.output_grad.values();
                               }
                               if (ctx.input_grads[1]) {
                                 for (Index i = 0; i < n; ++i) {
                                   for (Index j = 0; j < c; ++j) {
                                     (*ctx.input_grads[1])[j] +=
                                         ctx.output_grad.values().segment((i * c + j) * plane, plane).sum();
                                   }
                                 }
                               }
                             });
}

Var relu(Var x) {
  Tensor out = x.value();
  out.values() = out.values().max(0.0);
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    ctx.input_grads[0]->values() +=
        (ctx.inputs[0]->values() > 0.0).select(ctx.output_grad.values(), 0.0);
  });
}

Var mac_pool(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 4, "mac_pool");
  const Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor out(Shape{n, c});
  std::vector<Index> argmax(static_cast<std::size_t>(n * c));
  for (Index i = 0; i < n * c; ++i) {
    const double* p = x.data() + i * plane;
    Index best = 0;
    for (Index j = 1; j < plane; ++j) {
      if (p[j] > p[best]) best = j;
    }
    argmax[static_cast<std::size_t>(i)] = i * plane + best;
    out[i] = p[best];
  }
  return input.tape().record(std::move(out), {input},
                             [argmax = std::move(argmax)](const BackwardContext& ctx) {
                               for (std::size_t i = 0; i < argmax.size(); ++i) {
                                 (*ctx.input_grads[0])[argmax[i]] +=
                                     ctx.output_grad[static_cast<Index>(i)];
                               }
                             });
}

Var gem_pool(Var input, double p) {
  const Tensor& x = input.value();
  require_rank(x, 4, "gem_pool");
  if (!(p >= 1.0)) throw DomainError("gem_pool: exponent must be >= 1, got " + std::to_string(p));
  if ((x.values() < 0.0).any()) throw DomainError("gem_pool: negative activation in input");
  const Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor out(Shape{n, c});
  Tensor::Array means(n * c);
  for (Index i = 0; i < n * c; ++i) {
    means[i] = x.values().segment(i * plane, plane).pow(p).mean();
    out[i] = std::pow(means[i], 1.0 / p);
  }
  return input.tape().record(
      std::move(out), {input}, [p, plane, means](const BackwardContext& ctx) {
        const Tensor& x = *ctx.inputs[0];
        for (Index i = 0; i < means.size(); ++i) {
          if (means[i] <= 0.0) continue;
          // d/dx_j (mean x^p)^(1/p) = m^(1/p - 1) x_j^(p-1) / |plane|
          const double coeff =
              ctx.output_grad[i] * std::pow(means[i], 1.0 / p - 1.0) / static_cast<double>(plane);
          ctx.input_grads[0]->values().segment(i * plane, plane) +=
              coeff * x.values().segment(i * plane, plane).pow(p - 1.0);
        }
      });
}

Var l2_normalize(Var x) {
  const Tensor& v = x.value();
  const Index cols = v.rank() == 0 ? 1 : v.dim(v.rank() - 1);
  const Index rows = v.size() / cols;
  Tensor out = v;
  Eigen::VectorXd norms(rows);
  auto m = out.matrix(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    norms[r] = m.row(r).norm();
    if (!(norms[r] > 0.0)) throw DomainError("l2_normalize: zero vector has no direction");
    m.row(r) /= norms[r];
  }
  return x.tape().record(std::move(out), {x}, [rows, cols, norms](const BackwardContext& ctx) {
    const auto y = ctx.output.matrix(rows, cols);
    const auto g = ctx.output_grad.matrix(rows, cols);
    auto dx = ctx.input_grads[0]->matrix(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      dx.row(r) += (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norms[r];
    }
  });
}

Var bilinear_resize(Var input, Index out_h, Index out_w) {
  const Tensor& x = input.value();
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("bilinear_resize: expected [C,H,W] or [N,C,H,W], got " + x.shape().str());
  }
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("bilinear_resize: target size must be positive, got " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const int r = x.rank();
  const Index in_h = x.dim(r - 2), in_w = x.dim(r - 1);
  const Index planes = x.size() / (in_h * in_w);
  std::vector<Index> dims = x.shape().dims();
  dims[static_cast<std::size_t>(r - 2)] = out_h;
  dims[static_cast<std::size_t>(r - 1)] = out_w;
  Tensor out{Shape(dims)};

  const AxisTable ty = make_axis_table(in_h, out_h);
  const AxisTable tx = make_axis_table(in_w, out_w);
  for (Index pl = 0; pl < planes; ++pl) {
    const double* src = x.data() + pl * in_h * in_w;
    double* dst = out.data() + pl * out_h * out_w;
    for (Index oy = 0; oy < out_h; ++oy) {
      const auto sy = static_cast<std::size_t>(oy);
      const double* row0 = src + ty.lo[sy] * in_w;
      const double* row1 = src + ty.hi[sy] * in_w;
      for (Index ox = 0; ox < out_w; ++ox) {
        const auto sx = static_cast<std::size_t>(ox);
        // Written as a + w (b - a) so constant regions are reproduced exactly.
        const double top = row0[tx.lo[sx]] + tx.frac[sx] * (row0[tx.hi[sx]] - row0[tx.lo[sx]]);
        const double bot = row1[tx.lo[sx]] + tx.frac[sx] * (row1[tx.hi[sx]] - row1[tx.lo[sx]]);
        dst[oy * out_w + ox] = top + ty.frac[sy] * (bot - top);
      }
    }
  }

  return input.tape().record(
      std::move(out), {input},
      [ty, tx, planes, in_h, in_w, out_h, out_w](const BackwardContext& ctx) {
        for (Index pl = 0; pl < planes; ++pl) {
          const double* g = ctx.output_grad.data() + pl * out_h * out_w;
          double* dx = ctx.input_grads[0]->data() + pl * in_h * in_w;
          for (Index oy = 0; oy < out_h; ++oy) {
            const auto sy = static_cast<std::size_t>(oy);
            double* row0 = dx + ty.lo[sy] * in_w;
            double* row1 = dx + ty.hi[sy] * in_w;
            for (Index ox = 0; ox < out_w; ++ox) {
              const auto sx = static_cast<std::size_t>(ox);
              const double go = g[oy * out_w + ox];
              const double gtop = go * (1.0 - ty.frac[sy]);
              const double gbot = go * ty.frac[sy];
              row0[tx.lo[sx]] += gtop * (1.0 - tx.frac[sx]);
              row0[tx.hi[sx]] += gtop * tx.frac[sx];
              row1[tx.lo[sx]] += gbot * (1.0 - tx.frac[sx]);
              row1[tx.hi[sx]] += gbot * tx.frac[sx];
            }
          }
        }
      });
}

Var euclidean_distance(Var a, Var b) {
  require_same_tape(a, b);
  if (a.value().size() != b.value().size()) {
    throw DimensionError("euclidean_distance: " + a.shape().str() + " vs " + b.shape().str());
  }
  const Tensor::Array diff = a.value().values() - b.value().values();
  const double d = std::sqrt(diff.square().sum());
  return a.tape().record(Tensor::scalar(d), {a, b}, [diff, d](const BackwardContext& ctx) {
    if (d <= 0.0) return;  // subgradient zero at coincidence
    const double g = ctx.output_grad[0] / d;
    if (ctx.input_grads[0]) ctx.input_grads[0]->values() += g * diff;
    if (ctx.input_grads[1]) ctx.input_grads[1]->values() -= g * diff;
  });
}

Var fully_connected(Var x, Var weight, Var bias) {
  require_same_tape(x, weight);
  require_same_tape(x, bias);
  const Tensor& w = weight.value();
  require_rank(w, 2, "fully_connected weight");
  const Index k = w.dim(0), d = w.dim(1);
  if (x.value().size() % d != 0 || (x.value().rank() > 0 && x.value().dim(x.value().rank() - 1) != d)) {
    throw DimensionError("fully_connected: input " + x.shape().str() + " vs weight " +
                         w.shape().str());
  }
  if (bias.value().size() != k) {
    throw DimensionError("fully_connected: bias " + bias.shape().str() + " vs weight " +
                         w.shape().str());
  }
  const Index n = x.value().size() / d;
  Tensor out(Shape{n, k});
  out.matrix(n, k).noalias() = x.value().matrix(n, d) * w.matrix(k, d).transpose();
  out.matrix(n, k).rowwise() += bias.value().values().matrix().transpose();
  return x.tape().record(std::move(out), {x, weight, bias}, [n, k, d](const BackwardContext& ctx) {
    const auto g = ctx.output_grad.matrix(n, k);
    if (ctx.input_grads[0]) {
      ctx.input_grads[0]->matrix(n, d).noalias() += g * ctx.inputs[1]->matrix(k, d);
    }
    if (ctx.input_grads[1]) {
      ctx.input_grads[1]->matrix(k, d).noalias() += g.transpose() * ctx.inputs[0]->matrix(n, d);
    }
    if (ctx.input_grads[2]) {
      ctx.input_grads[2]->values() += g.colwise().sum().transpose().array();
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax_cross_entropy");
  const Index n = z.dim(0), k = z.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  RowMatrix probs(n, k);
  double loss = 0.0;
  const auto zm = z.matrix(n, k);
  for (Index i = 0; i < n; ++i) {
    const int t = labels[static_cast<std::size_t>(i)];
    if (t < 0 || t >= k) throw IndexError("softmax_cross_entropy: label out of range");
    const double mx = zm.row(i).maxCoeff();
    probs.row(i) = (zm.row(i).array() - mx).exp().matrix();
    const double s = probs.row(i).sum();
    probs.row(i) /= s;
    loss += -(zm(i, t) - mx - std::log(s));
  }
  loss /= static_cast<double>(n);
  std::vector<int> targets(labels.begin(), labels.end());
  return logits.tape().record(Tensor::scalar(loss), {logits},
                              [probs, targets, n, k](const BackwardContext& ctx) {
                                RowMatrix g = probs;
                                for (Index i = 0; i < n; ++i) g(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
                                ctx.input_grads[0]->matrix(n, k) +=
                                    g * (ctx.output_grad[0] / static_cast<double>(n));
                              });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out = a.value();
  out.values() += b.value().values();
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) ctx.input_grads[0]->values() += ctx.output_grad.values();
    if (ctx.input_grads[1]) ctx.input_grads[1]->values() += ctx.output_grad.values();
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out = a.value();
  out.values() -= b.value().values();
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) ctx.input_grads[0]->values() += ctx.output_grad.values();
    if (ctx.input_grads[1]) ctx.input_grads[1]->values() -= ctx.output_grad.values();
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  out.values() *= factor;
  return x.tape().record(std::move(out), {x}, [factor](const BackwardContext& ctx) {
    ctx.input_grads[0]->values() += factor * ctx.output_grad.values();
  });
}

Var add_scalar(Var x, double offset) {
  Tensor out = x.value();
  out.values() += offset;
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    ctx.input_grads[0]->values() += ctx.output_grad.values();
  });
}

Var clamp(Var x, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lower bound exceeds upper bound");
  Tensor out = x.value();
  out.values() = out.values().max(lo).min(hi);
  return x.tape().record(std::move(out), {x}, [lo, hi](const BackwardContext& ctx) {
    const auto& v = ctx.inputs[0]->values();
    ctx.input_grads[0]->values() +=
        (v >= lo && v <= hi).select(ctx.output_grad.values(), 0.0);
  });
}

Var sum(Var x) {
  return x.tape().record(Tensor::scalar(x.value().values().sum()), {x},
                         [](const BackwardContext& ctx) {
                           ctx.input_grads[0]->values() += ctx.output_grad[0];
                         });
}

Var add_n(Tape& tape, std::span<const Var> terms) {
  if (terms.empty()) return tape.constant(Tensor::scalar(0.0));
  double total = 0.0;
  for (const Var& t : terms) {
    if (&t.tape() != &tape) throw StructureError("add_n: term lives on a different tape");
    if (t.value().size() != 1) throw DimensionError("add_n: terms must be scalars");
    total += t.value()[0];
  }
  return tape.record(Tensor::scalar(total), std::vector<Var>(terms.begin(), terms.end()),
                     [](const BackwardContext& ctx) {
                       for (Tensor* g : ctx.input_grads) {
                         if (g) (*g)[0] += ctx.output_grad[0];
                       }
                     });
}

Var pick(Var x, Index i) {
  if (i < 0 || i >= x.value().size()) {
    throw IndexError("pick: index " + std::to_string(i) + " outside " + x.shape().str());
  }
  return x.tape().record(Tensor::scalar(x.value()[i]), {x}, [i](const BackwardContext& ctx) {
    (*ctx.input_grads[0])[i] += ctx.output_grad[0];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    ctx.input_grads[0]->values() += ctx.output_grad.values();
  });
}

}  // namespace uapr
