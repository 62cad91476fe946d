#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sgts {

inline constexpr std::uint8_t kUnlabeled = 255;

enum class TissueClass : std::uint8_t { kStroma = 0, kBenign = 1, kMalignant = 2, kPdcg = 3 };
inline constexpr int kNumTissueClasses = 4;

std::string class_name(int cls);

// Per-pixel class indices; kUnlabeled marks pixels without ground truth.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const { return labels.size(); }
  std::uint8_t& at(int i, int j) { return labels[static_cast<std::size_t>(i) * width + j]; }
  std::uint8_t at(int i, int j) const { return labels[static_cast<std::size_t>(i) * width + j]; }

  std::size_t count(std::uint8_t value) const;
  std::size_t labeled_count() const { return size() - count(kUnlabeled); }
  bool has_sentinel() const { return count(kUnlabeled) > 0; }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

}  // namespace sgts
