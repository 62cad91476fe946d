#pragma once

// Masked segmentation losses over per-pixel class probabilities [C,H,W].
//
// Each loss has a plain evaluation (value only) and a tape form that records
// the analytic gradient with respect to the probabilities.

#include <cstdint>
#include <vector>

#include "sgts/autograd.hpp"
#include "sgts/label_mask.hpp"

namespace sgts {

// 1 = pixel participates in the loss.
struct PixelSelection {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> weights;

  PixelSelection() = default;
  PixelSelection(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), weights(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t count() const;
  bool selected(std::size_t p) const { return weights[p] != 0; }
};

// One-hot targets with the pixels they apply to.
struct FusedSupervision {
  Tensor targets;  // [C,H,W], one-hot on selected pixels, zero elsewhere
  PixelSelection selection;
};

// GT one-hot on every labeled pixel; unlabeled pixels are unselected.
// Throws DataError for a label >= num_classes that is not the sentinel.
FusedSupervision sparse_supervision(const LabelMask& mask, int num_classes);

struct SupervisedWeights {
  double dice = 1.0;
  double cce = 1.0;
};

inline constexpr double kLogClamp = 1e-12;

// Per class c over selected pixels: 1 - 2 sum(y*p) / (sum(y) + sum(p)); classes
// with a zero denominator are skipped; mean over the rest (0 if none).
double dice_loss(const Tensor& probs, const Tensor& targets, const PixelSelection& sel);
// -(1/N_sel) sum_i sum_c y log(max(p, 1e-12)).
double cce_loss(const Tensor& probs, const Tensor& targets, const PixelSelection& sel);
double supervised_loss(const Tensor& probs, const Tensor& targets, const PixelSelection& sel,
                       const SupervisedWeights& w = {});
// Mean squared difference over selected pixels x classes; 0 for an empty selection.
double consistency_loss(const Tensor& student_probs, const FusedSupervision& fused);
// alpha * sup + (1 - alpha) * cons.
double total_loss(double sup, double cons, double alpha);

// Gradients with respect to probs.
Tensor dice_loss_grad(const Tensor& probs, const Tensor& targets, const PixelSelection& sel);
Tensor cce_loss_grad(const Tensor& probs, const Tensor& targets, const PixelSelection& sel);
Tensor consistency_loss_grad(const Tensor& student_probs, const FusedSupervision& fused);

Var dice_loss(Tape& tape, Var probs, const Tensor& targets, const PixelSelection& sel);
Var cce_loss(Tape& tape, Var probs, const Tensor& targets, const PixelSelection& sel);
Var supervised_loss(Tape& tape, Var probs, const Tensor& targets, const PixelSelection& sel,
                    const SupervisedWeights& w = {});
Var consistency_loss(Tape& tape, Var student_probs, const FusedSupervision& fused);
Var total_loss(Tape& tape, Var sup, Var cons, double alpha);

}  // namespace sgts
