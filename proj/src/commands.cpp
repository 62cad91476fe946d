#include "sgts/commands.hpp"

#include <array>
#include <cmath>
#include <iostream>

#include "sgts/checkpoint.hpp"
#include "sgts/errors.hpp"
#include "sgts/raster.hpp"
#include "sgts/report.hpp"

namespace sgts {

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw DataError("cannot create directory " + dir.string() +
                    (ec ? ": " + ec.message() : std::string()));
  }
}

void check_class_range(std::span<const Sample> samples, int num_classes, const char* split) {
  for (const Sample& s : samples) {
    for (const LabelMask* m : {&s.sparse_mask, &s.dense_mask}) {
      for (std::uint8_t v : m->labels) {
        if (v != kUnlabeled && v >= num_classes) {
          throw DataError(std::string(split) + " split contains label " + std::to_string(v) +
                          " but the model has " + std::to_string(num_classes) + " classes");
        }
      }
    }
  }
}

}  // namespace

void cmd_gen_data(const GenDataArgs& args) {
  ensure_dir(args.out);
  write_dataset(args.out, args.spec);
}

TrainSummary cmd_train(const TrainArgs& args) {
  RunConfig config;
  TrainerState state;
  if (args.resume) {
    Checkpoint ck = load_checkpoint(*args.resume);
    config = ck.config;
    state = std::move(ck.state);
  } else {
    config = args.config ? load_config(*args.config) : RunConfig{};
    if (args.seed) config.seed = *args.seed;
    config.validate();
    state = init_trainer(config.train_config());
  }
  const TrainConfig train_config = config.train_config();

  const std::vector<Sample> train = load_split(args.data, "train");
  const std::vector<Sample> val = load_split(args.data, "val");
  if (train.empty() || val.empty()) throw DataError("dataset needs non-empty train and val splits");
  check_class_range(train, config.num_classes, "train");
  check_class_range(val, config.num_classes, "val");
  ensure_dir(args.out);

  RunOptions options;
  options.max_epochs = args.stop_after.value_or(-1);
  options.on_epoch = [&](const TrainerState& s, const EpochRow& row, bool improved) {
    if (improved) save_checkpoint(args.out / "best.ckpt", config, s);
    save_checkpoint(args.out / "last.ckpt", config, s);
    write_file(args.out / "metrics.csv", metrics_csv(s.history));
    if (!args.quiet) {
      std::cerr << "epoch " << row.epoch << " [" << row.phase << "] loss " << row.loss_total
                << " val mIoU " << row.val_miou << " mDice " << row.val_mdice << " coverage "
                << row.pseudo_coverage << (improved ? " *" : "") << '\n';
    }
  };
  const int start_epoch = state.epoch;
  run_training(train_config, train, val, state, options);

  const std::string csv = metrics_csv(state.history);
  write_file(args.out / "metrics.csv", csv);
  write_file(args.out / "curves.svg", render_curves_svg(parse_metrics_csv(csv)));

  TrainSummary summary;
  summary.epochs_run = state.epoch - start_epoch;
  summary.best_epoch = state.best_epoch;
  summary.best_val_mdice = state.best_val_mdice;
  summary.stopped_early = state.stopped;
  return summary;
}

ConfusionTally cmd_eval(const EvalArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const std::vector<ManifestEntry> manifest = read_manifest(args.data);
  const std::vector<Sample> samples = load_split(args.data, args.split);
  if (samples.empty()) throw DataError("split '" + args.split + "' is empty");
  check_class_range(samples, ck.config.num_classes, args.split.c_str());
  if (args.pred_dir) ensure_dir(*args.pred_dir);

  ConfusionTally tally(ck.config.num_classes);
  std::size_t k = 0;
  for (const ManifestEntry& e : manifest) {
    if (e.split != args.split) continue;
    const Sample& s = samples[k++];
    const LabelMask pred = predict_mask(ck.state.student, s.image);
    if (args.pred_dir) write_pgm(*args.pred_dir / (e.id + ".pred.pgm"), pred);
    accumulate(pred, s.dense_mask, tally);
  }
  if (!args.out.empty()) {
    if (args.out.has_parent_path()) ensure_dir(args.out.parent_path());
    write_file(args.out, metrics_report_csv(tally));
  }
  return tally;
}

RgbImage render_overlay(const RgbImage& image, const LabelMask& mask) {
  static constexpr std::array<std::array<int, 3>, 3> kPalette = {
      std::array<int, 3>{0, 255, 0}, std::array<int, 3>{255, 0, 0}, std::array<int, 3>{0, 0, 255}};
  if (image.width != mask.width || image.height != mask.height) {
    throw ShapeError("overlay: image and mask sizes differ");
  }
  RgbImage out = image;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    const std::uint8_t cls = mask.labels[p];
    if (cls == 0) continue;
    const auto& color = kPalette[(cls - 1) % kPalette.size()];
    for (int c = 0; c < 3; ++c) {
      const double blended = 0.5 * image.pixels[p * 3 + c] + 0.5 * color[c];
      out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(blended));
    }
  }
  return out;
}

void cmd_infer(const InferArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const RgbImage image = read_ppm(args.image);
  if (image.width % 2 != 0 || image.height % 2 != 0) {
    throw ShapeError("image dimensions must be even, got " + std::to_string(image.width) + "x" +
                     std::to_string(image.height));
  }
  const LabelMask mask = predict_mask(ck.state.student, dequantize(image));
  const std::filesystem::path prefix(args.prefix);
  if (prefix.has_parent_path()) ensure_dir(prefix.parent_path());
  write_pgm(args.prefix + ".mask.pgm", mask);
  write_ppm(args.prefix + ".overlay.ppm", render_overlay(image, mask));
}

void cmd_report(const ReportArgs& args) {
  const MetricsTable table = parse_metrics_csv(read_file(args.metrics));
  write_file(args.out, render_curves_svg(table));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const RangeError*>(&e)) return 1;
  return 2;
}

}  // namespace sgts
