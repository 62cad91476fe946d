#include "sgts/teacher_student.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "sgts/errors.hpp"

namespace sgts {

namespace {

void require_same_shapes(const ModelParams& a, const ModelParams& b, const char* op) {
  if (a.tensors.size() != b.tensors.size()) {
    throw ShapeError(std::string(op) + ": parameter count mismatch");
  }
  for (std::size_t k = 0; k < a.tensors.size(); ++k) {
    if (a.tensors[k].shape() != b.tensors[k].shape()) {
      throw ShapeError(std::string(op) + ": shape mismatch for " + std::string(kParamNames[k]) +
                       ": " + shape_string(a.tensors[k].shape()) + " vs " +
                       shape_string(b.tensors[k].shape()));
    }
  }
}

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

}  // namespace

void ema_update(ModelParams& teacher, const ModelParams& student, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw RangeError("ema_update: beta must lie in (0, 1)");
  require_same_shapes(teacher, student, "ema_update");
  for (std::size_t k = 0; k < teacher.tensors.size(); ++k) {
    auto t = teacher.tensors[k].data();
    auto s = student.tensors[k].data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = beta * t[i] + (1.0 - beta) * s[i];
  }
}

PixelSelection confidence_mask(const Tensor& teacher_probs, double tau) {
  if (teacher_probs.rank() != 3) throw ShapeError("confidence_mask: expected [C,H,W]");
  const int c_n = teacher_probs.dim(0);
  PixelSelection sel(teacher_probs.dim(1), teacher_probs.dim(2));
  const std::size_t plane = sel.weights.size();
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = teacher_probs[p];
    for (int c = 1; c < c_n; ++c) mx = std::max(mx, teacher_probs[c * plane + p]);
    sel.weights[p] = mx > tau ? 1 : 0;
  }
  return sel;
}

FusedSupervision fuse(const LabelMask& sparse_gt, const Tensor& teacher_probs,
                      const PixelSelection& confident) {
  if (teacher_probs.rank() != 3 || teacher_probs.dim(1) != sparse_gt.height ||
      teacher_probs.dim(2) != sparse_gt.width || confident.height != sparse_gt.height ||
      confident.width != sparse_gt.width) {
    throw ShapeError("fuse: mask, probabilities and confidence sizes disagree");
  }
  const int c_n = teacher_probs.dim(0);
  FusedSupervision out{Tensor(teacher_probs.shape(), 0.0),
                       PixelSelection(sparse_gt.height, sparse_gt.width)};
  const std::size_t plane = sparse_gt.size();
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint8_t label = sparse_gt.labels[p];
    if (label != kUnlabeled) {
      if (label >= c_n) {
        throw DataError("fuse: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(c_n) + ")");
      }
      out.targets[label * plane + p] = 1.0;
      out.selection.weights[p] = 1;
    } else if (confident.selected(p)) {
      int best = 0;
      for (int c = 1; c < c_n; ++c) {
        if (teacher_probs[c * plane + p] > teacher_probs[best * plane + p]) best = c;
      }
      out.targets[best * plane + p] = 1.0;
      out.selection.weights[p] = 1;
    }
  }
  return out;
}

AdamWState AdamWState::zeros_like(const ModelParams& params) {
  AdamWState s;
  for (const Tensor& t : params.tensors) {
    s.m.emplace_back(t.shape(), 0.0);
    s.v.emplace_back(t.shape(), 0.0);
  }
  return s;
}

void adamw_step(ModelParams& params, const ParamGrads& grads, AdamWState& state, double lr,
                const AdamWOptions& o) {
  if (grads.size() != params.tensors.size() || state.m.size() != params.tensors.size()) {
    throw ShapeError("adamw_step: gradient/state count does not match parameters");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k].shape() != params.tensors[k].shape()) {
      throw ShapeError("adamw_step: gradient shape mismatch for " + std::string(kParamNames[k]));
    }
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      if (!std::isfinite(grads[k][i])) {
        throw NumericalError("non-finite gradient in " + std::string(kParamNames[k]) + "[" +
                             std::to_string(i) + "] at optimizer step " +
                             std::to_string(state.step + 1));
      }
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto theta = params.tensors[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    auto g = grads[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + o.eps) + o.weight_decay * theta[i]);
    }
  }
}

double global_norm(const ParamGrads& grads) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(ParamGrads& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= scale;
    }
  }
  return norm;
}

// ---- training --------------------------------------------------------------

void TrainConfig::validate() const {
  schedule.validate();
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (supervised.dice < 0.0 || supervised.cce < 0.0) {
    throw ConfigError("supervised loss weights must be >= 0");
  }
  if (augment.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
}

TrainerState init_trainer(const TrainConfig& config) {
  config.validate();
  TrainerState s;
  s.student = init_params(derive_seed(config.seed, 0x1001, 0), config.num_classes);
  s.teacher = s.student;
  s.best_student = s.student;
  s.optimizer = AdamWState::zeros_like(s.student);
  s.rng = Rng(derive_seed(config.seed, 0x1002, 0));
  return s;
}

ScheduleState effective_schedule(const TrainConfig& config, int epoch) {
  ScheduleState s = state_at(config.schedule, epoch);
  if (!config.teacher_enabled) {
    s.in_warmup = true;
    s.alpha = 1.0;
    s.tau = std::numeric_limits<double>::infinity();
  }
  return s;
}

StepLosses train_step(TrainerState& state, std::span<const BatchItem> batch,
                      const ScheduleState& sched, const TrainConfig& config) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  const bool use_teacher = !sched.in_warmup;
  StepLosses out;
  ParamGrads grads;
  for (const Tensor& t : state.student.tensors) grads.emplace_back(t.shape(), 0.0);
  int contributing = 0;

  for (const BatchItem& item : batch) {
    Tape tape;
    const std::vector<Var> params = bind_params(tape, state.student, true);
    const Var probs = softmax_channels(tape, forward(tape, params, tape.constant(item.image)));

    const FusedSupervision gt = sparse_supervision(item.sparse_mask, config.num_classes);
    const bool has_labels = gt.selection.count() > 0;
    const Var sup = has_labels
                        ? supervised_loss(tape, probs, gt.targets, gt.selection, config.supervised)
                        : tape.constant(Tensor::scalar(0.0));

    Var cons = tape.constant(Tensor::scalar(0.0));
    bool has_fused = false;
    const std::size_t unlabeled = item.sparse_mask.count(kUnlabeled);
    out.unlabeled += unlabeled;
    if (use_teacher) {
      const Tensor teacher_probs = kernels::softmax_channels(forward(state.teacher, item.image));
      const PixelSelection confident = confidence_mask(teacher_probs, sched.tau);
      const FusedSupervision fused = fuse(item.sparse_mask, teacher_probs, confident);
      const std::size_t selected = fused.selection.count();
      out.pseudo_selected += selected - gt.selection.count();
      has_fused = selected > 0;
      if (has_fused) cons = consistency_loss(tape, probs, fused);
    }
    if (!has_labels && !has_fused) continue;

    const Var total = total_loss(tape, sup, cons, sched.alpha);
    const double total_value = tape.value(total).item();
    if (!std::isfinite(total_value)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(sched.epoch));
    }
    tape.backward(total);
    for (std::size_t k = 0; k < params.size(); ++k) grads[k].axpy(1.0, tape.grad(params[k]));
    out.sup += tape.value(sup).item();
    out.cons += tape.value(cons).item();
    out.total += total_value;
    ++contributing;
  }

  if (contributing == 0) {
    warn("epoch " + std::to_string(sched.epoch) +
         ": batch has no labeled pixels and no pseudo-labels; step skipped");
    out.skipped = true;
    return out;
  }
  const double inv = 1.0 / contributing;
  out.sup *= inv;
  out.cons *= inv;
  out.total *= inv;
  for (Tensor& g : grads) {
    for (double& v : g.data()) v *= inv;
  }
  clip_global_norm(grads, config.clip_norm);
  adamw_step(state.student, grads, state.optimizer, sched.lr,
             AdamWOptions{config.weight_decay, 0.9, 0.999, 1e-8});
  if (use_teacher) ema_update(state.teacher, state.student, config.schedule.ema_beta);
  return out;
}

LabelMask predict_mask(const ModelParams& params, const Tensor& image01) {
  const Tensor logits = forward(params, normalize(image01));
  const int c_n = logits.dim(0);
  LabelMask mask(logits.dim(1), logits.dim(2), 0);
  const std::size_t plane = mask.size();
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    for (int c = 1; c < c_n; ++c) {
      if (logits[c * plane + p] > logits[best * plane + p]) best = c;
    }
    mask.labels[p] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

ConfusionTally evaluate(const ModelParams& params, std::span<const Sample> samples, Reference ref) {
  ConfusionTally tally(params.num_classes);
  for (const Sample& s : samples) {
    accumulate(predict_mask(params, s.image), ref == Reference::kDense ? s.dense_mask : s.sparse_mask,
               tally);
  }
  return tally;
}

std::vector<EpochRow> run_training(const TrainConfig& config, std::span<const Sample> train_set,
                                   std::span<const Sample> val_set, TrainerState& state,
                                   const RunOptions& options) {
  config.validate();
  if (train_set.empty() || val_set.empty()) throw DataError("run_training: empty dataset");
  const int total_epochs = config.schedule.total_epochs;
  int ran = 0;

  std::vector<std::size_t> order(train_set.size());
  while (!state.stopped && state.epoch < total_epochs) {
    if (options.max_epochs >= 0 && ran >= options.max_epochs) break;
    const ScheduleState sched = effective_schedule(config, state.epoch);
    if (!sched.in_warmup && !state.teacher_active) {
      state.teacher = state.student;
      state.teacher_active = true;
    }

    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[state.rng.uniform_int(0, static_cast<int>(i) - 1)]);
    }

    EpochRow row;
    row.epoch = state.epoch;
    row.phase = sched.in_warmup ? "warmup" : "cotrain";
    row.alpha = sched.alpha;
    row.tau = sched.tau;
    row.lr = sched.lr;
    int steps = 0;
    std::size_t pseudo = 0, unlabeled = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<BatchItem> batch;
      for (std::size_t k = start; k < end; ++k) {
        Sample aug = augment(train_set[order[k]], state.rng, config.augment);
        batch.push_back({normalize(aug.image), std::move(aug.sparse_mask)});
      }
      const StepLosses losses = train_step(state, batch, sched, config);
      pseudo += losses.pseudo_selected;
      unlabeled += losses.unlabeled;
      if (losses.skipped) continue;
      row.loss_sup += losses.sup;
      row.loss_cons += losses.cons;
      row.loss_total += losses.total;
      ++steps;
    }
    if (steps > 0) {
      row.loss_sup /= steps;
      row.loss_cons /= steps;
      row.loss_total /= steps;
    }
    if (!std::isfinite(row.loss_total)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(state.epoch));
    }
    row.pseudo_coverage = unlabeled ? static_cast<double>(pseudo) / unlabeled : 0.0;

    const ConfusionTally tally = evaluate(state.student, val_set, Reference::kSparse);
    row.val_miou = miou(tally);
    row.val_mdice = mdice(tally);

    const bool improved = row.val_mdice > state.best_val_mdice;
    if (improved) {
      state.best_val_mdice = row.val_mdice;
      state.best_epoch = state.epoch;
      state.best_student = state.student;
      state.epochs_since_improvement = 0;
    } else {
      ++state.epochs_since_improvement;
    }
    state.epoch += 1;
    if (state.epochs_since_improvement >= config.patience) state.stopped = true;
    state.history.push_back(row);
    ++ran;
    if (options.on_epoch) options.on_epoch(state, row, improved);
  }
  return state.history;
}

}  // namespace sgts
