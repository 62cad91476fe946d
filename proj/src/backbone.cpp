#include "sgts/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "sgts/errors.hpp"
#include "sgts/rng.hpp"

namespace sgts {

std::vector<Shape> ModelParams::shapes(int num_classes) {
  return {{8, 3, 3, 3},   {8},  {16, 8, 3, 3}, {16}, {16, 16, 3, 3},
          {16},           {8, 16, 3, 3},       {8},  {num_classes, 16, 1, 1},
          {num_classes}};
}

ModelParams ModelParams::zeros(int num_classes) {
  if (num_classes < 2) throw RangeError("num_classes must be >= 2");
  ModelParams p;
  p.num_classes = num_classes;
  for (const Shape& s : shapes(num_classes)) p.tensors.emplace_back(s, 0.0);
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.size();
  return n;
}

bool ModelParams::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.all_finite(); });
}

ModelParams init_params(std::uint64_t seed, int num_classes) {
  ModelParams p = ModelParams::zeros(num_classes);
  Rng rng(seed);
  for (Tensor& t : p.tensors) {
    if (t.rank() != 4) continue;
    const double fan_in = static_cast<double>(t.dim(1)) * t.dim(2) * t.dim(3);
    const double s = std::sqrt(6.0 / fan_in);
    for (double& v : t.data()) v = rng.uniform(-s, s);
  }
  return p;
}

std::vector<Var> bind_params(Tape& tape, const ModelParams& params, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(params.tensors.size());
  for (const Tensor& t : params.tensors) {
    vars.push_back(trainable ? tape.parameter(t) : tape.constant(t));
  }
  return vars;
}

Var forward(Tape& tape, std::span<const Var> p, Var image) {
  if (p.size() != kNumParamTensors) throw ShapeError("forward: wrong number of parameter tensors");
  const Tensor& x = tape.value(image);
  if (x.rank() != 3 || x.dim(0) != 3) {
    throw ShapeError("forward: expected a [3,H,W] image, got " + shape_string(x.shape()));
  }
  if (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw ShapeError("forward: image height and width must be even, got " +
                     shape_string(x.shape()));
  }
  Var e1 = relu(tape, conv2d(tape, image, p[0], p[1], 1, 1));
  Var d = relu(tape, conv2d(tape, e1, p[2], p[3], 2, 1));
  Var e2 = relu(tape, conv2d(tape, d, p[4], p[5], 1, 1));
  Var u = relu(tape, conv2d(tape, nearest_upsample2x(tape, e2), p[6], p[7], 1, 1));
  return conv2d(tape, concat_channels(tape, u, e1), p[8], p[9], 1, 0);
}

Tensor forward(const ModelParams& params, const Tensor& image) {
  Tape tape(false);
  std::vector<Var> vars = bind_params(tape, params, false);
  Var out = forward(tape, vars, tape.constant(image));
  return tape.value(out);
}

}  // namespace sgts
