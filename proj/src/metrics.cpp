#include "sgts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sgts/errors.hpp"

namespace sgts {

bool ConfusionTally::empty() const {
  for (int c = 0; c < num_classes(); ++c) {
    if (tp[c] + fp[c] + fn[c] != 0) return false;
  }
  return true;
}

void ConfusionTally::merge(const ConfusionTally& other) {
  if (other.num_classes() != num_classes()) throw ShapeError("merge: class count mismatch");
  for (int c = 0; c < num_classes(); ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
  }
}

void accumulate(const LabelMask& pred, const LabelMask& ref, ConfusionTally& tally) {
  if (pred.height != ref.height || pred.width != ref.width) {
    throw ShapeError("accumulate: prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " vs reference " + std::to_string(ref.height) +
                     "x" + std::to_string(ref.width));
  }
  const int n = tally.num_classes();
  for (std::size_t p = 0; p < ref.size(); ++p) {
    const std::uint8_t r = ref.labels[p];
    if (r == kUnlabeled) continue;
    const std::uint8_t q = pred.labels[p];
    if (q >= n || r >= n) {
      throw DataError("accumulate: label outside [0, " + std::to_string(n) + ")");
    }
    if (q == r) {
      ++tally.tp[r];
    } else {
      ++tally.fp[q];
      ++tally.fn[r];
    }
  }
}

namespace {

std::vector<std::optional<double>> per_class(const ConfusionTally& tally, bool dice) {
  std::vector<std::optional<double>> out(tally.num_classes());
  for (int c = 0; c < tally.num_classes(); ++c) {
    const std::uint64_t support = tally.tp[c] + tally.fp[c] + tally.fn[c];
    if (support == 0) continue;
    out[c] = dice ? 2.0 * tally.tp[c] / static_cast<double>(2 * tally.tp[c] + tally.fp[c] + tally.fn[c])
                  : tally.tp[c] / static_cast<double>(support);
  }
  return out;
}

double macro_mean(const std::vector<std::optional<double>>& values) {
  double total = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    total += *v;
    ++n;
  }
  if (n == 0) throw DataError("metrics: empty tally (no class has support)");
  return total / n;
}

}  // namespace

std::vector<std::optional<double>> per_class_iou(const ConfusionTally& tally) {
  return per_class(tally, false);
}

std::vector<std::optional<double>> per_class_dice(const ConfusionTally& tally) {
  return per_class(tally, true);
}

double miou(const ConfusionTally& tally) { return macro_mean(per_class_iou(tally)); }

double mdice(const ConfusionTally& tally) { return macro_mean(per_class_dice(tally)); }

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

std::string metrics_report_csv(const ConfusionTally& tally) {
  const auto iou = per_class_iou(tally);
  const auto dice = per_class_dice(tally);
  std::ostringstream os;
  os << "class,iou,dice\n";
  for (int c = 0; c < tally.num_classes(); ++c) {
    os << class_name(c) << ',' << (iou[c] ? format_percent(*iou[c]) : "") << ','
       << (dice[c] ? format_percent(*dice[c]) : "") << '\n';
  }
  os << "mean," << format_percent(miou(tally)) << ',' << format_percent(mdice(tally)) << '\n';
  return os.str();
}

}  // namespace sgts
