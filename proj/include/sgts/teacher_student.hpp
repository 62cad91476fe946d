#pragma once

// Teacher-student co-training.
//
// Phase 1 (warm-up): the student trains on sparse labels only; the teacher is
// inactive. Phase 2: the teacher starts as a copy of the student and then
// follows it by an exponential moving average after every optimizer step.
// Confident teacher pixels (max probability > tau) become hard pseudo-labels,
// ground truth overrides them wherever it exists, and the student minimizes
// alpha * supervised + (1 - alpha) * consistency.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgts/backbone.hpp"
#include "sgts/data.hpp"
#include "sgts/label_mask.hpp"
#include "sgts/losses.hpp"
#include "sgts/metrics.hpp"
#include "sgts/rng.hpp"
#include "sgts/schedules.hpp"

namespace sgts {

// ---- teacher ---------------------------------------------------------------

// teacher <- beta * teacher + (1 - beta) * student, elementwise.
void ema_update(ModelParams& teacher, const ModelParams& student, double beta);

// Pixel p selected iff max_c probs[c, p] > tau (strict). tau = +inf selects nothing.
PixelSelection confidence_mask(const Tensor& teacher_probs, double tau);

// Labeled pixels (any non-sentinel class, stroma included) keep their GT one-hot.
// Unlabeled confident pixels get the one-hot teacher argmax (ties -> lowest
// class). Everything else is unselected with an all-zero target.
FusedSupervision fuse(const LabelMask& sparse_gt, const Tensor& teacher_probs,
                      const PixelSelection& confident);

// ---- optimizer -------------------------------------------------------------

struct AdamWOptions {
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamWState zeros_like(const ModelParams& params);
  friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

// Decoupled weight decay:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
// Throws NumericalError on a non-finite gradient.
void adamw_step(ModelParams& params, const ParamGrads& grads, AdamWState& state, double lr,
                const AdamWOptions& options = {});

double global_norm(const ParamGrads& grads);
// Rescales all gradients by max_norm / n when the global norm n exceeds
// max_norm. Returns the norm before clipping.
double clip_global_norm(ParamGrads& grads, double max_norm = 1.0);

// ---- training --------------------------------------------------------------

struct TrainConfig {
  ScheduleConfig schedule;
  int num_classes = kNumTissueClasses;
  int batch_size = 8;
  double weight_decay = 0.001;
  double clip_norm = 1.0;
  int patience = 15;
  // false: warm-up-only baseline (alpha = 1 and no teacher for every epoch).
  bool teacher_enabled = true;
  SupervisedWeights supervised;
  AugmentOptions augment;
  std::uint64_t seed = 42;

  void validate() const;
};

struct BatchItem {
  Tensor image;  // normalized [3,H,W]
  LabelMask sparse_mask;
};

struct StepLosses {
  double sup = 0.0;
  double cons = 0.0;
  double total = 0.0;
  std::size_t pseudo_selected = 0;  // unlabeled pixels that received a pseudo-label
  std::size_t unlabeled = 0;
  bool skipped = false;
};

struct EpochRow {
  int epoch = 0;
  std::string phase;  // "warmup" or "cotrain"
  double alpha = 0.0;
  double tau = 0.0;
  double lr = 0.0;
  double loss_sup = 0.0;
  double loss_cons = 0.0;
  double loss_total = 0.0;
  double val_miou = 0.0;
  double val_mdice = 0.0;
  double pseudo_coverage = 0.0;
};

struct TrainerState {
  ModelParams student;
  ModelParams teacher;
  AdamWState optimizer;
  int epoch = 0;  // next epoch to run
  bool teacher_active = false;
  double best_val_mdice = -1.0;
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  bool stopped = false;
  ModelParams best_student;
  Rng rng;
  std::vector<EpochRow> history;
};

TrainerState init_trainer(const TrainConfig& config);

// Schedule as seen by the trainer: the baseline keeps alpha = 1 and no
// teacher for every epoch while the learning rate anneals as usual.
ScheduleState effective_schedule(const TrainConfig& config, int epoch);

// One optimizer step over the batch (loss = mean of per-sample totals).
// Throws NumericalError on a non-finite loss or gradient.
StepLosses train_step(TrainerState& state, std::span<const BatchItem> batch,
                      const ScheduleState& sched, const TrainConfig& config);

// Argmax over classes for each pixel (ties -> lowest class).
LabelMask predict_mask(const ModelParams& params, const Tensor& image01);

enum class Reference { kSparse, kDense };
ConfusionTally evaluate(const ModelParams& params, std::span<const Sample> samples, Reference ref);

struct RunOptions {
  // Stop after this many epochs in this call (for interrupted runs); < 0 = no limit.
  int max_epochs = -1;
  // Called after every epoch with the updated state and its row.
  std::function<void(const TrainerState&, const EpochRow&, bool improved)> on_epoch;
};

// Runs epochs state.epoch .. T-1 (or until early stopping) and returns the
// full per-epoch history. Validation uses the sparse masks of val_set.
std::vector<EpochRow> run_training(const TrainConfig& config, std::span<const Sample> train_set,
                                   std::span<const Sample> val_set, TrainerState& state,
                                   const RunOptions& options = {});

}  // namespace sgts
