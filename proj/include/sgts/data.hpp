#pragma once

// Synthetic gland patches with dense oracle masks and sparsified annotations.
//
// Classes: 0 stroma, 1 benign gland (ellipse with a pale lumen), 2 malignant
// gland (radially perturbed filled ellipse), 3 PDC/G (cluster of small discs).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgts/autograd.hpp"
#include "sgts/label_mask.hpp"
#include "sgts/rng.hpp"

namespace sgts {

struct CountRange {
  int min = 0;
  int max = 0;
};

struct ClassMix {
  CountRange benign{1, 3};
  CountRange malignant{1, 3};
  CountRange pdcg{0, 2};
  // Semi-axis ranges in pixels at size 64; all lengths scale linearly with
  // the image size.
  double benign_axis_min = 12.0;
  double benign_axis_max = 18.0;
  double malignant_axis_min = 8.0;
  double malignant_axis_max = 13.0;
  double lumen_scale_min = 0.40;
  double lumen_scale_max = 0.60;
  CountRange pdcg_discs{3, 6};
  double disc_radius_min = 3.0;
  double disc_radius_max = 5.0;
  double cluster_spread = 7.0;
  // A candidate placement is rejected when more than this fraction of its
  // pixels is already occupied.
  double max_overlap = 0.25;
  int placement_retries = 40;
};

struct Instance {
  std::uint8_t cls = 0;
  std::vector<int> pixels;  // flat row-major indices
  bool annotated = false;
};

struct Sample {
  Tensor image;  // [3,H,W] in [0,1]
  LabelMask sparse_mask;
  LabelMask dense_mask;
  std::vector<Instance> instances;
  int dropped_instances = 0;  // placements abandoned after the retry budget

  int size() const { return dense_mask.height; }
  int count_instances(std::uint8_t cls) const;
  int count_annotated() const;
};

// Deterministic in `seed`. Size must be even and >= 32. The returned sample is
// fully annotated (sparse_mask == dense_mask); see sparsify().
Sample generate_sample(std::uint64_t seed, int size, const ClassMix& mix = {});

// Each gland instance is annotated independently with the probability q from
// calibrated_annotation_probability(), and at least one per image is forced. Stroma is labeled only within a 2-pixel ring
// around annotated instances and inside two random rectangles.
// Per-instance probability q for an image with n instances such that the
// expected annotated fraction, counting the forced instance, equals
// annot_fraction (q = 0 when one forced instance already exceeds it).
double calibrated_annotation_probability(double annot_fraction, int n);

Sample sparsify(const Sample& sample, double annot_fraction, std::uint64_t seed);

// ---- augmentation -----------------------------------------------------------

struct AugmentOptions {
  bool rotate = true;
  bool flip = true;
  double noise_sigma = 0.01;
};

// Counter-clockwise rotation by k * 90 degrees applied to image, masks and instances.
Sample rotate90(const Sample& sample, int k);
Sample flip_horizontal(const Sample& sample);
// Random rotation in {0, 90, 180, 270}, flip with p = 0.5, then additive
// Gaussian pixel noise clamped to [0,1]. Masks move with the image.
Sample augment(const Sample& sample, Rng& rng, const AugmentOptions& options = {});

// ---- normalization ----------------------------------------------------------

inline constexpr std::array<double, 3> kChannelMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kChannelStd = {0.229, 0.224, 0.225};

Tensor normalize(const Tensor& image);
Tensor denormalize(const Tensor& image);

// ---- dataset directories ----------------------------------------------------
//
// <root>/{train,val,test}/<id>.img.ppm, <id>.sparse.pgm, <id>.dense.pgm
// <root>/manifest.txt: split, id, sample seed, benign, malignant, pdcg,
// annotated instances, dropped instances (tab separated, one line per image).

struct DatasetSpec {
  std::uint64_t seed = 42;
  int train = 200;
  int val = 40;
  int test = 40;
  int size = 64;
  double annot_fraction = 0.3;
  ClassMix mix;
};

struct ManifestEntry {
  std::string split;
  std::string id;
  std::uint64_t seed = 0;
  int benign = 0;
  int malignant = 0;
  int pdcg = 0;
  int annotated = 0;
  int dropped = 0;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

std::uint64_t sample_seed(std::uint64_t dataset_seed, const std::string& split, int index);

// Generates the complete dataset in memory, quantized to 8 bits exactly as it
// would be read back from disk.
Dataset generate_dataset(const DatasetSpec& spec, std::vector<ManifestEntry>* manifest = nullptr);

void write_dataset(const std::filesystem::path& root, const DatasetSpec& spec);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);
// Loads one split (images, sparse and dense masks; instance lists are not stored).
std::vector<Sample> load_split(const std::filesystem::path& root, const std::string& split);

}  // namespace sgts
