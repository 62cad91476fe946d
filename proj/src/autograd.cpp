#include "sgts/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sgts/errors.hpp"

namespace sgts {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t checked_volume(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(checked_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != checked_volume(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::axpy(double scale, const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("axpy: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

// ---- Tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, record_, {}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  if (record_) {
    for (Var v : inputs) needs = needs || nodes_.at(v.id).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& node = nodes_.at(v.id);
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::accumulate(Var v, const Tensor& contribution) {
  if (!nodes_.at(v.id).requires_grad) return;
  grad_buffer(v).axpy(1.0, contribution);
}

void Tape::accumulate(Var v, std::size_t index, double contribution) {
  if (!nodes_.at(v.id).requires_grad) return;
  grad_buffer(v)[index] += contribution;
}

void Tape::backward(Var root, double seed) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  if (value(root).size() != 1) {
    throw ShapeError("backward root must be a scalar, got " + shape_string(value(root).shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  if (!nodes_.at(root.id).requires_grad) return;
  grad_buffer(root)[0] = seed;
  for (int id = root.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    // The closure may touch other nodes' grads but never this node's buffer.
    const Tensor out_grad = node.grad;
    node.backward(*this, out_grad);
  }
}

// ---- Kernels ----------------------------------------------------------------

namespace kernels {

// Range of output index j such that 0 <= j*stride + offset < extent.
void valid_range(int out_extent, int extent, int stride, int offset, int& lo, int& hi) {
  lo = 0;
  while (lo < out_extent && lo * stride + offset < 0) ++lo;
  hi = out_extent;
  while (hi > lo && (hi - 1) * stride + offset >= extent) --hi;
}

struct ConvGeometry {
  int cin, h, w, cout, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                           int pad) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0),
                 kernel.dim(2), kernel.dim(3), 0,           0};
  if (kernel.dim(1) != g.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != g.cout) {
    throw ShapeError("conv2d: bias shape " + shape_string(bias.shape()) + " for " +
                     std::to_string(g.cout) + " output channels");
  }
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// Visits every (o, c, u, v, output row i, input row ii, j range) tap of the
// convolution so forward and backward share one index walk. Output rows are
// the outer loop so the rows being touched stay in L1.
template <typename F>
void for_each_tap(const ConvGeometry& g, int stride, int pad, F&& f) {
  std::vector<int> j_lo(g.kw), j_hi(g.kw);
  for (int v = 0; v < g.kw; ++v) valid_range(g.ow, g.w, stride, v - pad, j_lo[v], j_hi[v]);
  for (int o = 0; o < g.cout; ++o) {
    for (int i = 0; i < g.oh; ++i) {
      for (int c = 0; c < g.cin; ++c) {
        for (int u = 0; u < g.kh; ++u) {
          const int ii = i * stride + u - pad;
          if (ii < 0 || ii >= g.h) continue;
          for (int v = 0; v < g.kw; ++v) {
            if (j_lo[v] >= j_hi[v]) continue;
            f(o, c, u, v, i, ii, j_lo[v], j_hi[v], j_lo[v] * stride + v - pad);
          }
        }
      }
    }
  }
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
  const ConvGeometry g = conv_geometry(input, kernel, bias, stride, pad);
  Tensor out({g.cout, g.oh, g.ow});
  double* po = out.ptr();
  const double* pi = input.ptr();
  const double* pk = kernel.ptr();
  for (int o = 0; o < g.cout; ++o) {
    std::fill(po + static_cast<std::size_t>(o) * g.oh * g.ow,
              po + static_cast<std::size_t>(o + 1) * g.oh * g.ow, bias[o]);
  }
  for_each_tap(g, stride, pad, [&](int o, int c, int u, int v, int i, int ii, int j_lo, int j_hi,
                                   int jj_lo) {
    const double wgt = pk[((static_cast<std::size_t>(o) * g.cin + c) * g.kh + u) * g.kw + v];
    double* orow = po + (static_cast<std::size_t>(o) * g.oh + i) * g.ow;
    const double* irow = pi + (static_cast<std::size_t>(c) * g.h + ii) * g.w + jj_lo;
    if (stride == 1) {
      for (int j = j_lo; j < j_hi; ++j) orow[j] += wgt * irow[j - j_lo];
    } else {
      for (int j = j_lo; j < j_hi; ++j) orow[j] += wgt * irow[(j - j_lo) * stride];
    }
  });
  return out;
}

Tensor softmax_channels(const Tensor& z) {
  require_rank(z, 3, "softmax_channels");
  const int c_n = z.dim(0);
  const std::size_t plane = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
  Tensor out(z.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = z[p];
    for (int c = 1; c < c_n; ++c) mx = std::max(mx, z[c * plane + p]);
    double denom = 0.0;
    for (int c = 0; c < c_n; ++c) {
      const double e = std::exp(z[c * plane + p] - mx);
      out[c * plane + p] = e;
      denom += e;
    }
    for (int c = 0; c < c_n; ++c) out[c * plane + p] /= denom;
  }
  return out;
}

Tensor nearest_upsample2x(const Tensor& x) {
  require_rank(x, 3, "nearest_upsample2x");
  const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({c_n, 2 * h, 2 * w});
  for (int c = 0; c < c_n; ++c) {
    for (int i = 0; i < 2 * h; ++i) {
      for (int j = 0; j < 2 * w; ++j) out.at(c, i, j) = x.at(c, i / 2, j / 2);
    }
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels");
  require_rank(b, 3, "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw ShapeError("concat_channels: spatial mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.size());
  return out;
}

}  // namespace kernels

// ---- Tape operations --------------------------------------------------------

namespace {

// sum_j a[j] * b[j * step] with four interleaved partial sums, combined in a
// fixed order so results do not depend on the build's vector width.
double strided_dot(const double* a, const double* b, int n, int step) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j * step];
    s1 += a[j + 1] * b[(j + 1) * step];
    s2 += a[j + 2] * b[(j + 2) * step];
    s3 += a[j + 3] * b[(j + 3) * step];
  }
  for (; j < n; ++j) s0 += a[j] * b[j * step];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

Var conv2d(Tape& tape, Var input, Var kernel, Var bias, int stride, int pad) {
  Tensor out = kernels::conv2d(tape.value(input), tape.value(kernel), tape.value(bias), stride, pad);
  return tape.push(std::move(out), {input, kernel, bias},
                   [input, kernel, bias, stride, pad](Tape& t, const Tensor& gout) {
    const Tensor& x = t.value(input);
    const Tensor& k = t.value(kernel);
    const Tensor& b = t.value(bias);
    const kernels::ConvGeometry g = kernels::conv_geometry(x, k, b, stride, pad);
    const bool want_x = t.requires_grad(input);
    const bool want_k = t.requires_grad(kernel);
    Tensor gx(x.shape(), 0.0);
    Tensor gk(k.shape(), 0.0);
    Tensor gb(b.shape(), 0.0);
    const double* pg = gout.ptr();
    const std::size_t plane = static_cast<std::size_t>(g.oh) * g.ow;
    for (int o = 0; o < g.cout; ++o) {
      double s = 0.0;
      for (std::size_t p = 0; p < plane; ++p) s += pg[o * plane + p];
      gb[o] = s;
    }
    if (want_x || want_k) {
      const double* px = x.ptr();
      const double* pk = k.ptr();
      double* pgx = gx.ptr();
      double* pgk = gk.ptr();
      kernels::for_each_tap(g, stride, pad, [&](int o, int c, int u, int v, int i, int ii, int j_lo,
                                       int j_hi, int jj_lo) {
        const std::size_t kidx = ((static_cast<std::size_t>(o) * g.cin + c) * g.kh + u) * g.kw + v;
        const double* grow = pg + (static_cast<std::size_t>(o) * g.oh + i) * g.ow;
        const std::size_t xoff = (static_cast<std::size_t>(c) * g.h + ii) * g.w + jj_lo;
        const int step = stride;
        if (want_k) pgk[kidx] += strided_dot(grow + j_lo, px + xoff, j_hi - j_lo, step);
        if (want_x) {
          const double wgt = pk[kidx];
          for (int j = j_lo; j < j_hi; ++j) pgx[xoff + (j - j_lo) * step] += wgt * grow[j];
        }
      });
    }
    t.accumulate(input, gx);
    t.accumulate(kernel, gk);
    t.accumulate(bias, gb);
  });
}

Var relu(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return tape.push(std::move(out), {x}, [x](Tape& t, const Tensor& gout) {
    const Tensor& in = t.value(x);
    Tensor g(in.shape(), 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) g[i] = in[i] > 0.0 ? gout[i] : 0.0;
    t.accumulate(x, g);
  });
}

Var nearest_upsample2x(Tape& tape, Var x) {
  Tensor out = kernels::nearest_upsample2x(tape.value(x));
  return tape.push(std::move(out), {x}, [x](Tape& t, const Tensor& gout) {
    const Tensor& in = t.value(x);
    Tensor g(in.shape(), 0.0);
    for (int c = 0; c < gout.dim(0); ++c) {
      for (int i = 0; i < gout.dim(1); ++i) {
        for (int j = 0; j < gout.dim(2); ++j) g.at(c, i / 2, j / 2) += gout.at(c, i, j);
      }
    }
    t.accumulate(x, g);
  });
}

Var concat_channels(Tape& tape, Var a, Var b) {
  Tensor out = kernels::concat_channels(tape.value(a), tape.value(b));
  return tape.push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& gout) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor ga(va.shape());
    Tensor gb(vb.shape());
    std::copy(gout.data().begin(), gout.data().begin() + va.size(), ga.data().begin());
    std::copy(gout.data().begin() + va.size(), gout.data().end(), gb.data().begin());
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

Var softmax_channels(Tape& tape, Var z) {
  Tensor out = kernels::softmax_channels(tape.value(z));
  // The backward rule reads this op's own output, which lands at the next id.
  const Var self{static_cast<int>(tape.size())};
  return tape.push(std::move(out), {z}, [z, self](Tape& t, const Tensor& gout) {
    const Tensor& p = t.value(self);
    const int c_n = p.dim(0);
    const std::size_t plane = static_cast<std::size_t>(p.dim(1)) * p.dim(2);
    Tensor g(p.shape());
    for (std::size_t q = 0; q < plane; ++q) {
      double dot = 0.0;
      for (int c = 0; c < c_n; ++c) dot += gout[c * plane + q] * p[c * plane + q];
      for (int c = 0; c < c_n; ++c) g[c * plane + q] = p[c * plane + q] * (gout[c * plane + q] - dot);
    }
    t.accumulate(z, g);
  });
}

Var sum(Tape& tape, Var x) {
  double s = 0.0;
  for (double v : tape.value(x).data()) s += v;
  return tape.push(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& gout) {
    t.accumulate(x, Tensor(t.value(x).shape(), gout[0]));
  });
}

Var weighted_sum(Tape& tape, Var a, double wa, Var b, double wb) {
  const double value = wa * tape.value(a).item() + wb * tape.value(b).item();
  return tape.push(Tensor::scalar(value), {a, b}, [a, wa, b, wb](Tape& t, const Tensor& gout) {
    t.accumulate(a, 0, wa * gout[0]);
    t.accumulate(b, 0, wb * gout[0]);
  });
}

Var scalar_function(Tape& tape, Var input, double value, Tensor grad) {
  if (grad.shape() != tape.value(input).shape()) {
    throw ShapeError("scalar_function: gradient shape " + shape_string(grad.shape()) +
                     " does not match input " + shape_string(tape.value(input).shape()));
  }
  return tape.push(Tensor::scalar(value), {input},
                   [input, g = std::move(grad)](Tape& t, const Tensor& gout) {
    Tensor scaled = g;
    for (double& v : scaled.data()) v *= gout[0];
    t.accumulate(input, scaled);
  });
}

// ---- Finite differences -----------------------------------------------------

GradCheckReport finite_diff_check(const LossBuilder& loss_fn, std::span<const Tensor> params,
                                  double h) {
  if (!(h > 0.0)) throw RangeError("finite_diff_check: step must be positive");
  GradCheckReport report;

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    Var loss = loss_fn(tape, vars);
    if (!std::isfinite(tape.value(loss).item())) {
      report.finite = false;
      return report;
    }
    tape.backward(loss);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  std::vector<Tensor> probe(params.begin(), params.end());
  auto evaluate = [&]() {
    Tape tape(false);
    std::vector<Var> vars;
    for (const Tensor& p : probe) vars.push_back(tape.parameter(p));
    return tape.value(loss_fn(tape, vars)).item();
  };

  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + h;
      const double fp = evaluate();
      probe[k][i] = orig - h;
      const double fm = evaluate();
      probe[k][i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.finite = false;
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double ad = analytic[k][i];
      const double rel = std::abs(ad - numeric) / std::max(1e-8, std::abs(ad) + std::abs(numeric));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = k;
        report.worst_index = i;
        report.worst_analytic = ad;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace sgts
