#pragma once

// Pixel-level confusion accumulation and macro-averaged IoU / Dice.
// Counts are accumulated over a whole dataset first, then averaged over the
// classes that have any support.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgts/label_mask.hpp"

namespace sgts {

struct ConfusionTally {
  std::vector<std::uint64_t> tp, fp, fn;

  explicit ConfusionTally(int num_classes = kNumTissueClasses)
      : tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0) {}

  int num_classes() const { return static_cast<int>(tp.size()); }
  bool empty() const;
  void merge(const ConfusionTally& other);

  friend bool operator==(const ConfusionTally&, const ConfusionTally&) = default;
};

// Sentinel reference pixels are ignored; pred must be sentinel-free.
void accumulate(const LabelMask& pred, const LabelMask& ref, ConfusionTally& tally);

// nullopt for classes without support (TP + FP + FN = 0).
std::vector<std::optional<double>> per_class_iou(const ConfusionTally& tally);
std::vector<std::optional<double>> per_class_dice(const ConfusionTally& tally);
double miou(const ConfusionTally& tally);
double mdice(const ConfusionTally& tally);

// Percentage with two decimals, e.g. 0.80104 -> "80.10".
std::string format_percent(double fraction);

// CSV: header "class,iou,dice", one row per class (blank cells for classes
// without support), then a "mean" row.
std::string metrics_report_csv(const ConfusionTally& tally);

}  // namespace sgts
