#pragma once

// Five-convolution encoder-decoder with one skip connection:
//
//   e1     = relu(conv3x3(image, enc1))                [8,  H,   W  ]
//   d      = relu(conv3x3/s2(e1, down))                [16, H/2, W/2]
//   e2     = relu(conv3x3(d, enc2))                    [16, H/2, W/2]
//   u      = relu(conv3x3(upsample2x(e2), up))         [8,  H,   W  ]
//   logits = conv1x1(concat(u, e1), head)              [C,  H,   W  ]

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sgts/autograd.hpp"

namespace sgts {

inline constexpr std::size_t kNumParamTensors = 10;

// Parameter names in storage (and initialization) order.
inline constexpr std::array<std::string_view, kNumParamTensors> kParamNames = {
    "enc1.kernel", "enc1.bias", "down.kernel", "down.bias", "enc2.kernel",
    "enc2.bias",   "up.kernel", "up.bias",     "head.kernel", "head.bias"};

struct ModelParams {
  int num_classes = 0;
  std::vector<Tensor> tensors;  // kParamNames order

  static std::vector<Shape> shapes(int num_classes);
  static ModelParams zeros(int num_classes);

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Gradients mirror ModelParams::tensors one-to-one.
using ParamGrads = std::vector<Tensor>;

// Kernels ~ U[-s, s], s = sqrt(6 / fan_in), drawn from one Rng seeded with
// `seed`, tensor by tensor in kParamNames order, row-major within a tensor.
// Biases are zero and consume no draws.
ModelParams init_params(std::uint64_t seed, int num_classes);

// Registers every parameter tensor on the tape (trainable or constant).
std::vector<Var> bind_params(Tape& tape, const ModelParams& params, bool trainable);

Var forward(Tape& tape, std::span<const Var> params, Var image);

// Inference without gradient recording.
Tensor forward(const ModelParams& params, const Tensor& image);

}  // namespace sgts
