#pragma once

// Command implementations behind the `sgts` executable. Each throws the typed
// errors from errors.hpp; exit_code_for() maps them to process exit codes
// (0 success, 1 usage/config, 2 data, 3 numerical abort).

#include <filesystem>
#include <optional>
#include <string>

#include "sgts/config.hpp"
#include "sgts/metrics.hpp"
#include "sgts/raster.hpp"

namespace sgts {

struct GenDataArgs {
  std::filesystem::path out;
  DatasetSpec spec;
};
void cmd_gen_data(const GenDataArgs& args);

struct TrainArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  // Continue from a checkpoint (its config snapshot is used).
  std::optional<std::filesystem::path> resume;
  // Stop after this many epochs in this invocation; last.ckpt can resume it.
  std::optional<int> stop_after;
  bool quiet = false;
};

struct TrainSummary {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_mdice = 0.0;
  bool stopped_early = false;
};

// Writes best.ckpt, last.ckpt, metrics.csv and curves.svg into args.out.
TrainSummary cmd_train(const TrainArgs& args);

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string split = "test";
  std::filesystem::path out;
  // Optional directory receiving <id>.pred.pgm for every evaluated image.
  std::optional<std::filesystem::path> pred_dir;
};

// Scores the checkpoint's student against the dense oracle masks of a split
// and writes the per-class report CSV. Returns the tally.
ConfusionTally cmd_eval(const EvalArgs& args);

struct InferArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::string prefix;
};

// Writes <prefix>.mask.pgm and <prefix>.overlay.ppm.
void cmd_infer(const InferArgs& args);

// Overlay: stroma pixels unchanged; other classes blended 50/50 with the
// palette colour (benign green, malignant red, PDC/G blue).
RgbImage render_overlay(const RgbImage& image, const LabelMask& mask);

struct ReportArgs {
  std::filesystem::path metrics;
  std::filesystem::path out;
};
void cmd_report(const ReportArgs& args);

int exit_code_for(const std::exception& e);

}  // namespace sgts
