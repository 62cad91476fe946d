#include "sgts/label_mask.hpp"

#include <algorithm>

namespace sgts {

std::string class_name(int cls) {
  switch (cls) {
    case 0: return "stroma";
    case 1: return "benign";
    case 2: return "malignant";
    case 3: return "pdcg";
    default: return "class" + std::to_string(cls);
  }
}

std::size_t LabelMask::count(std::uint8_t value) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), value));
}

}  // namespace sgts
