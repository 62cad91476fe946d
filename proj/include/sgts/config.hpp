#pragma once

// Run configuration: flat "key = value" text, '#' starts a comment.
//
// Defaults are desk scale (64x64 images, 60 epochs, batch 8, patience 15).
// Full-scale settings would be image_size = 512, epochs = 250,
// batch_size = 16, patience = 50.

#include <cstdint>
#include <filesystem>
#include <string>

#include "sgts/data.hpp"
#include "sgts/teacher_student.hpp"

namespace sgts {

enum class TrainingMode { kTeacherStudent, kWarmupOnly };

struct RunConfig {
  std::uint64_t seed = 42;
  int image_size = 64;
  int num_classes = 4;
  int epochs = 60;
  int batch_size = 8;
  double warmup_fraction = 0.25;
  double alpha_start = 0.9;
  double alpha_end = 0.01;
  double tau_start = 0.95;
  double tau_end = 0.25;
  double ema_beta = 0.999;
  double lr_start = 0.01;
  double lr_end = 0.00001;
  double weight_decay = 0.001;
  double clip_norm = 1.0;
  int patience = 15;
  double annot_fraction = 0.3;
  int train_size = 200;
  int val_size = 40;
  int test_size = 40;
  TrainingMode mode = TrainingMode::kTeacherStudent;
  double dice_weight = 1.0;
  double cce_weight = 1.0;
  double noise_sigma = 0.01;

  // Throws ConfigError for out-of-range values.
  void validate() const;

  TrainConfig train_config() const;
  DatasetSpec dataset_spec() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Throws ConfigError("config line N: ...") on malformed lines, unknown or
// repeated keys, and invalid values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every key in a fixed order; doubles printed with round-trip precision.
std::string serialize_config(const RunConfig& config);

}  // namespace sgts
