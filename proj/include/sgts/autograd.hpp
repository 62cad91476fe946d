#pragma once

// Minimal dense-tensor engine with a reverse-mode tape.
//
// Every tensor is a row-major array of doubles. Operations record a backward
// closure on a Tape; Tape::backward replays them in reverse and accumulates
// gradients additively, so a value consumed twice receives both contributions.
// Tapes are single-threaded; independent tapes share nothing.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sgts {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] accessors.
  double& at(int c, int i, int j) { return data_[index3(c, i, j)]; }
  double at(int c, int i, int j) const { return data_[index3(c, i, j)]; }

  double item() const;
  bool all_finite() const;
  void fill(double value);

  // this += scale * other (shapes must match).
  void axpy(double scale, const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t index3(int c, int i, int j) const {
    return (static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j;
  }

  Shape shape_;
  std::vector<double> data_;
};

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  // A tape created with record = false evaluates forward values only.
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Records an op output. `backward` receives the output gradient and must
  // push contributions into inputs via accumulate().
  Var push(Tensor value, std::initializer_list<Var> inputs, Backward backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() root; zero-filled if v got no contribution.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Tensor& contribution);
  void accumulate(Var v, std::size_t index, double contribution);

  // Seeds d(root)/d(root) = seed (root must be a one-element tensor).
  void backward(Var root, double seed = 1.0);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Tensor& grad_buffer(Var v);

  bool record_;
  std::vector<Node> nodes_;
};

// ---- Operations ------------------------------------------------------------

// Zero-padded 2-D convolution of input[Cin,H,W] with kernel[Cout,Cin,kH,kW].
Var conv2d(Tape& tape, Var input, Var kernel, Var bias, int stride, int pad);
Var relu(Tape& tape, Var x);
Var nearest_upsample2x(Tape& tape, Var x);
Var concat_channels(Tape& tape, Var a, Var b);
// Per-pixel softmax over the channel axis of [C,H,W].
Var softmax_channels(Tape& tape, Var z);
Var sum(Tape& tape, Var x);
// wa * a + wb * b for one-element tensors.
Var weighted_sum(Tape& tape, Var a, double wa, Var b, double wb);
// Scalar node with a precomputed value and gradient w.r.t. `input`.
Var scalar_function(Tape& tape, Var input, double value, Tensor grad);

// Plain forward kernels, shared by the tape ops and reusable without a tape.
namespace kernels {
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad);
Tensor softmax_channels(const Tensor& z);
Tensor nearest_upsample2x(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);
}  // namespace kernels

// ---- Finite-difference verification ----------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool finite = true;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Builds a scalar loss on the given tape from parameter handles.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

// Compares reverse-mode gradients with central differences for every
// coordinate of every parameter. Relative error per coordinate is
// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|); the maximum is reported.
// A non-finite loss anywhere sets finite = false.
GradCheckReport finite_diff_check(const LossBuilder& loss_fn, std::span<const Tensor> params,
                                  double h = 1e-5);

}  // namespace sgts
