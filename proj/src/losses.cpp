#include "sgts/losses.hpp"

#include <algorithm>
#include <cmath>

#include "sgts/errors.hpp"

namespace sgts {

std::size_t PixelSelection::count() const {
  return static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [](std::uint8_t w) { return w != 0; }));
}

FusedSupervision sparse_supervision(const LabelMask& mask, int num_classes) {
  FusedSupervision out{Tensor({num_classes, mask.height, mask.width}, 0.0),
                       PixelSelection(mask.height, mask.width)};
  const std::size_t plane = mask.size();
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint8_t label = mask.labels[p];
    if (label == kUnlabeled) continue;
    if (label >= num_classes) {
      throw DataError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
    out.targets[label * plane + p] = 1.0;
    out.selection.weights[p] = 1;
  }
  return out;
}

namespace {

struct Dims {
  int classes;
  std::size_t plane;
};

Dims check(const Tensor& probs, const Tensor& targets, const PixelSelection& sel, bool allow_empty) {
  if (probs.rank() != 3) throw ShapeError("loss: probabilities must be [C,H,W]");
  if (targets.shape() != probs.shape()) {
    throw ShapeError("loss: target shape " + shape_string(targets.shape()) +
                     " does not match probabilities " + shape_string(probs.shape()));
  }
  if (sel.height != probs.dim(1) || sel.width != probs.dim(2)) {
    throw ShapeError("loss: selection size does not match probabilities");
  }
  if (!allow_empty && sel.count() == 0) throw DataError("loss: empty pixel selection");
  return {probs.dim(0), static_cast<std::size_t>(probs.dim(1)) * probs.dim(2)};
}

struct DiceTerms {
  std::vector<double> inter, denom;
};

DiceTerms dice_terms(const Tensor& probs, const Tensor& targets, const PixelSelection& sel, Dims d) {
  DiceTerms t{std::vector<double>(d.classes, 0.0), std::vector<double>(d.classes, 0.0)};
  for (int c = 0; c < d.classes; ++c) {
    for (std::size_t p = 0; p < d.plane; ++p) {
      if (!sel.selected(p)) continue;
      const double y = targets[c * d.plane + p];
      const double q = probs[c * d.plane + p];
      t.inter[c] += y * q;
      t.denom[c] += y + q;
    }
  }
  return t;
}

}  // namespace

double dice_loss(const Tensor& probs, const Tensor& targets, const PixelSelection& sel) {
  const Dims d = check(probs, targets, sel, false);
  const DiceTerms t = dice_terms(probs, targets, sel, d);
  double total = 0.0;
  int included = 0;
  for (int c = 0; c < d.classes; ++c) {
    if (t.denom[c] == 0.0) continue;
    total += 1.0 - 2.0 * t.inter[c] / t.denom[c];
    ++included;
  }
  return included ? total / included : 0.0;
}

Tensor dice_loss_grad(const Tensor& probs, const Tensor& targets, const PixelSelection& sel) {
  const Dims d = check(probs, targets, sel, false);
  const DiceTerms t = dice_terms(probs, targets, sel, d);
  Tensor g(probs.shape(), 0.0);
  const int included = static_cast<int>(
      std::count_if(t.denom.begin(), t.denom.end(), [](double v) { return v != 0.0; }));
  if (!included) return g;
  for (int c = 0; c < d.classes; ++c) {
    if (t.denom[c] == 0.0) continue;
    const double den2 = t.denom[c] * t.denom[c];
    for (std::size_t p = 0; p < d.plane; ++p) {
      if (!sel.selected(p)) continue;
      const double y = targets[c * d.plane + p];
      // d/dq [1 - 2I/D] with dI/dq = y, dD/dq = 1.
      g[c * d.plane + p] = -(2.0 * y * t.denom[c] - 2.0 * t.inter[c]) / den2 / included;
    }
  }
  return g;
}

double cce_loss(const Tensor& probs, const Tensor& targets, const PixelSelection& sel) {
  const Dims d = check(probs, targets, sel, false);
  double total = 0.0;
  for (int c = 0; c < d.classes; ++c) {
    for (std::size_t p = 0; p < d.plane; ++p) {
      if (!sel.selected(p)) continue;
      const double y = targets[c * d.plane + p];
      if (y != 0.0) total -= y * std::log(std::max(probs[c * d.plane + p], kLogClamp));
    }
  }
  return total / static_cast<double>(sel.count());
}

Tensor cce_loss_grad(const Tensor& probs, const Tensor& targets, const PixelSelection& sel) {
  const Dims d = check(probs, targets, sel, false);
  const double n = static_cast<double>(sel.count());
  Tensor g(probs.shape(), 0.0);
  for (int c = 0; c < d.classes; ++c) {
    for (std::size_t p = 0; p < d.plane; ++p) {
      if (!sel.selected(p)) continue;
      const double y = targets[c * d.plane + p];
      const double q = probs[c * d.plane + p];
      if (y != 0.0 && q > kLogClamp) g[c * d.plane + p] = -y / (q * n);
    }
  }
  return g;
}

double supervised_loss(const Tensor& probs, const Tensor& targets, const PixelSelection& sel,
                       const SupervisedWeights& w) {
  return w.dice * dice_loss(probs, targets, sel) + w.cce * cce_loss(probs, targets, sel);
}

double consistency_loss(const Tensor& student_probs, const FusedSupervision& fused) {
  const Dims d = check(student_probs, fused.targets, fused.selection, true);
  const std::size_t n = fused.selection.count();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (int c = 0; c < d.classes; ++c) {
    for (std::size_t p = 0; p < d.plane; ++p) {
      if (!fused.selection.selected(p)) continue;
      const double diff = student_probs[c * d.plane + p] - fused.targets[c * d.plane + p];
      total += diff * diff;
    }
  }
  return total / (static_cast<double>(n) * d.classes);
}

Tensor consistency_loss_grad(const Tensor& student_probs, const FusedSupervision& fused) {
  const Dims d = check(student_probs, fused.targets, fused.selection, true);
  Tensor g(student_probs.shape(), 0.0);
  const std::size_t n = fused.selection.count();
  if (n == 0) return g;
  const double scale = 2.0 / (static_cast<double>(n) * d.classes);
  for (int c = 0; c < d.classes; ++c) {
    for (std::size_t p = 0; p < d.plane; ++p) {
      if (!fused.selection.selected(p)) continue;
      g[c * d.plane + p] = scale * (student_probs[c * d.plane + p] - fused.targets[c * d.plane + p]);
    }
  }
  return g;
}

double total_loss(double sup, double cons, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw RangeError("total_loss: alpha outside [0, 1]");
  return alpha * sup + (1.0 - alpha) * cons;
}

Var dice_loss(Tape& tape, Var probs, const Tensor& targets, const PixelSelection& sel) {
  const Tensor& p = tape.value(probs);
  const double value = dice_loss(p, targets, sel);
  Tensor grad = tape.recording() ? dice_loss_grad(p, targets, sel) : Tensor(p.shape(), 0.0);
  return scalar_function(tape, probs, value, std::move(grad));
}

Var cce_loss(Tape& tape, Var probs, const Tensor& targets, const PixelSelection& sel) {
  const Tensor& p = tape.value(probs);
  const double value = cce_loss(p, targets, sel);
  Tensor grad = tape.recording() ? cce_loss_grad(p, targets, sel) : Tensor(p.shape(), 0.0);
  return scalar_function(tape, probs, value, std::move(grad));
}

Var supervised_loss(Tape& tape, Var probs, const Tensor& targets, const PixelSelection& sel,
                    const SupervisedWeights& w) {
  return weighted_sum(tape, dice_loss(tape, probs, targets, sel), w.dice,
                      cce_loss(tape, probs, targets, sel), w.cce);
}

Var consistency_loss(Tape& tape, Var student_probs, const FusedSupervision& fused) {
  const Tensor& p = tape.value(student_probs);
  const double value = consistency_loss(p, fused);
  Tensor grad = tape.recording() ? consistency_loss_grad(p, fused) : Tensor(p.shape(), 0.0);
  return scalar_function(tape, student_probs, value, std::move(grad));
}

Var total_loss(Tape& tape, Var sup, Var cons, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw RangeError("total_loss: alpha outside [0, 1]");
  return weighted_sum(tape, sup, alpha, cons, 1.0 - alpha);
}

}  // namespace sgts
