#include <iostream>

#include "CLI11.hpp"
#include "sgts/commands.hpp"
#include "sgts/errors.hpp"

int main(int argc, char** argv) {
  using namespace sgts;
  CLI::App app{
      "Sparse-label teacher-student gland segmentation trainer.\n"
      "Defaults are desk scale: 64x64 images, 60 epochs, batch 8, patience 15\n"
      "(full scale: 512x512, 250 epochs, batch 16, patience 50, via --config)."};
  app.require_subcommand(1);

  const RunConfig defaults;
  GenDataArgs gen;
  gen.spec = defaults.dataset_spec();
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic sparse-annotation dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.spec.seed, "Dataset seed")->capture_default_str();
  gen_cmd->add_option("--train", gen.spec.train, "Training images")->capture_default_str();
  gen_cmd->add_option("--val", gen.spec.val, "Validation images")->capture_default_str();
  gen_cmd->add_option("--test", gen.spec.test, "Test images")->capture_default_str();
  gen_cmd->add_option("--size", gen.spec.size, "Image side length (even, >= 32)")->capture_default_str();
  gen_cmd->add_option("--annot-fraction", gen.spec.annot_fraction,
                      "Probability that a gland instance is annotated")
      ->capture_default_str();

  TrainArgs train;
  std::string train_config, train_resume;
  std::uint64_t train_seed = 0;
  int stop_after = -1;
  auto* train_cmd = app.add_subcommand("train", "Run warm-up and teacher-student co-training");
  train_cmd->add_option("--config", train_config, "key = value configuration file");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override the configured seed");
  train_cmd->add_option("--resume", train_resume, "Resume from a checkpoint (e.g. last.ckpt)");
  train_cmd->add_option("--stop-after", stop_after, "Stop after N epochs in this invocation");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");

  EvalArgs eval;
  std::string pred_dir;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint against dense oracle masks");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", eval.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Report CSV")->required();
  eval_cmd->add_option("--pred-dir", pred_dir, "Also write predicted masks here");

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Predict a mask and overlay for one image");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required();
  infer_cmd->add_option("--image", infer.image, "Binary PPM image")->required();
  infer_cmd->add_option("--out", infer.prefix, "Output prefix")->required();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Render training curves from metrics.csv");
  report_cmd->add_option("--metrics", report.metrics, "metrics.csv")->required();
  report_cmd->add_option("--out", report.out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) {
      cmd_gen_data(gen);
    } else if (*train_cmd) {
      if (!train_config.empty()) train.config = train_config;
      if (!train_resume.empty()) train.resume = train_resume;
      if (*seed_opt) train.seed = train_seed;
      if (stop_after >= 0) train.stop_after = stop_after;
      const TrainSummary s = cmd_train(train);
      std::cout << "epochs run: " << s.epochs_run << ", best epoch " << s.best_epoch
                << " (val mDice " << s.best_val_mdice << ")"
                << (s.stopped_early ? ", stopped early" : "") << '\n';
    } else if (*eval_cmd) {
      if (!pred_dir.empty()) eval.pred_dir = pred_dir;
      const ConfusionTally tally = cmd_eval(eval);
      std::cout << "mIoU " << format_percent(miou(tally)) << "  mDice "
                << format_percent(mdice(tally)) << '\n';
    } else if (*infer_cmd) {
      cmd_infer(infer);
    } else if (*report_cmd) {
      cmd_report(report);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
