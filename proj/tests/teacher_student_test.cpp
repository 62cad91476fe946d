#include "sgts/teacher_student.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sgts/errors.hpp"
#include "test_util.hpp"

namespace sgts {
namespace {

using test::random_tensor;

ModelParams random_params(Rng& rng, int classes) {
  ModelParams p = ModelParams::zeros(classes);
  for (Tensor& t : p.tensors) t = random_tensor(t.shape(), rng);
  return p;
}

Tensor random_probs(Rng& rng, int classes, int h, int w, double spread) {
  return kernels::softmax_channels(random_tensor({classes, h, w}, rng, -spread, spread));
}

LabelMask random_sparse(Rng& rng, int h, int w, int classes, double labeled) {
  LabelMask m(h, w);
  for (auto& v : m.labels) {
    v = rng.bernoulli(labeled) ? static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1))
                               : kUnlabeled;
  }
  return m;
}

TEST(EmaTest, SingleStep) {
  ModelParams teacher = ModelParams::zeros(2), student = ModelParams::zeros(2);
  teacher.tensors[1] = Tensor({8}, 1.0);
  student.tensors[1] = Tensor({8}, 3.0);
  ema_update(teacher, student, 0.75);
  EXPECT_EQ(teacher.tensors[1], Tensor({8}, 1.5));
  EXPECT_THROW(ema_update(teacher, student, 1.0), RangeError);
  EXPECT_THROW(ema_update(teacher, student, 0.0), RangeError);
  EXPECT_THROW(ema_update(teacher, ModelParams::zeros(3), 0.5), ShapeError);
}

TEST(EmaTest, ClosedFormAgainstFrozenStudent) {
  Rng rng(1);
  const ModelParams student = random_params(rng, 4);
  const ModelParams teacher0 = random_params(rng, 4);
  ModelParams teacher = teacher0;
  for (int i = 0; i < 100; ++i) ema_update(teacher, student, 0.999);
  const double decay = std::pow(0.999, 100);
  for (std::size_t k = 0; k < kNumParamTensors; ++k) {
    for (std::size_t i = 0; i < teacher.tensors[k].size(); ++i) {
      const double s = student.tensors[k][i];
      EXPECT_NEAR(teacher.tensors[k][i], s + (teacher0.tensors[k][i] - s) * decay, 1e-9);
    }
  }
}

TEST(ConfidenceMaskTest, StrictThreshold) {
  Tensor p({2, 1, 3}, 0.0);
  p.at(0, 0, 0) = 0.7, p.at(1, 0, 0) = 0.3;
  p.at(0, 0, 1) = 0.5, p.at(1, 0, 1) = 0.5;
  p.at(0, 0, 2) = 0.2, p.at(1, 0, 2) = 0.8;
  const PixelSelection s = confidence_mask(p, 0.7);
  EXPECT_EQ(s.weights, (std::vector<std::uint8_t>{0, 0, 1}));
  EXPECT_EQ(confidence_mask(p, 0.5).count(), 2u);
  EXPECT_EQ(confidence_mask(p, std::numeric_limits<double>::infinity()).count(), 0u);
}

TEST(ConfidenceMaskTest, CoverageIsMonotoneInTau) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor p = random_probs(rng, 4, 16, 16, 1.0 + trial * 0.05);
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (int k = 0; k <= 14; ++k) {
      const std::size_t n = confidence_mask(p, 0.25 + 0.05 * k).count();
      EXPECT_LE(n, prev) << "trial " << trial << " tau " << 0.25 + 0.05 * k;
      prev = n;
    }
  }
}

TEST(FuseTest, GroundTruthAlwaysWins) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = 4, h = 8, w = 8;
    const LabelMask gt = random_sparse(rng, h, w, classes, rng.uniform());
    const Tensor p = random_probs(rng, classes, h, w, 4.0);
    const PixelSelection confident = confidence_mask(p, rng.uniform(0.25, 0.95));
    const FusedSupervision f = fuse(gt, p, confident);
    const std::size_t plane = gt.size();
    for (std::size_t px = 0; px < plane; ++px) {
      const std::uint8_t label = gt.labels[px];
      if (label != kUnlabeled) {
        ASSERT_TRUE(f.selection.selected(px));
        for (int c = 0; c < classes; ++c) ASSERT_EQ(f.targets[c * plane + px], c == label ? 1.0 : 0.0);
      } else if (confident.selected(px)) {
        int best = 0;
        for (int c = 1; c < classes; ++c) {
          if (p[c * plane + px] > p[best * plane + px]) best = c;
        }
        ASSERT_TRUE(f.selection.selected(px));
        for (int c = 0; c < classes; ++c) ASSERT_EQ(f.targets[c * plane + px], c == best ? 1.0 : 0.0);
      } else {
        ASSERT_FALSE(f.selection.selected(px));
        for (int c = 0; c < classes; ++c) ASSERT_EQ(f.targets[c * plane + px], 0.0);
      }
    }
  }
}

TEST(FuseTest, TieGoesToLowestClass) {
  LabelMask gt(1, 1, kUnlabeled);
  Tensor p({3, 1, 1}, std::vector<double>{0.1, 0.45, 0.45});
  PixelSelection all(1, 1, 1);
  const FusedSupervision f = fuse(gt, p, all);
  EXPECT_EQ(f.targets[1], 1.0);
  EXPECT_EQ(f.targets[2], 0.0);
}

TEST(FuseTest, StromaCountsAsLabel) {
  LabelMask gt(1, 1, 0);
  Tensor p({2, 1, 1}, std::vector<double>{0.01, 0.99});
  const FusedSupervision f = fuse(gt, p, confidence_mask(p, 0.5));
  EXPECT_EQ(f.targets[0], 1.0);
  EXPECT_EQ(f.targets[1], 0.0);
}

TEST(AdamWTest, FirstStepClosedForm) {
  ModelParams p = ModelParams::zeros(2);
  p.tensors[1] = Tensor({8}, 2.0);
  ParamGrads g;
  for (const Tensor& t : p.tensors) g.emplace_back(t.shape(), 0.0);
  g[1] = Tensor({8}, -0.5);
  AdamWState s = AdamWState::zeros_like(p);
  adamw_step(p, g, s, 0.1, AdamWOptions{0.01, 0.9, 0.999, 1e-8});
  // m_hat = g, v_hat = g^2 -> step = lr * (g/(|g| + eps) + wd * theta)
  const double expected = 2.0 - 0.1 * (-0.5 / (0.5 + 1e-8) + 0.01 * 2.0);
  for (double v : p.tensors[1].data()) EXPECT_NEAR(v, expected, 1e-15);
  for (double v : p.tensors[0].data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.step, 1u);
}

TEST(AdamWTest, NonFiniteGradientAborts) {
  ModelParams p = ModelParams::zeros(2);
  ParamGrads g;
  for (const Tensor& t : p.tensors) g.emplace_back(t.shape(), 0.0);
  g[3][5] = std::numeric_limits<double>::quiet_NaN();
  AdamWState s = AdamWState::zeros_like(p);
  EXPECT_THROW(adamw_step(p, g, s, 0.1), NumericalError);
}

TEST(ClipTest, GlobalNorm) {
  ParamGrads g = {Tensor({1}, 3.0), Tensor({1}, 4.0)};
  EXPECT_EQ(global_norm(g), 5.0);
  EXPECT_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
  ParamGrads small = {Tensor({2}, 0.1)};
  const ParamGrads before = small;
  clip_global_norm(small, 1.0);
  EXPECT_EQ(small, before);
}

TEST(ScheduleOverrideTest, BaselineKeepsTeacherOff) {
  TrainConfig ts, base;
  base.teacher_enabled = false;
  for (int e = 0; e < 60; ++e) {
    const ScheduleState a = effective_schedule(ts, e), b = effective_schedule(base, e);
    EXPECT_EQ(b.alpha, 1.0);
    EXPECT_TRUE(b.in_warmup);
    EXPECT_EQ(b.tau, std::numeric_limits<double>::infinity());
    EXPECT_EQ(a.lr, b.lr);
  }
}

TEST(TrainerTest, InitIsDeterministic) {
  TrainConfig c;
  const TrainerState a = init_trainer(c), b = init_trainer(c);
  EXPECT_EQ(a.student, b.student);
  EXPECT_EQ(a.teacher, a.student);
  EXPECT_TRUE(a.rng == b.rng);
  c.seed = 43;
  EXPECT_FALSE(init_trainer(c).student == a.student);
}

std::vector<BatchItem> tiny_batch(Rng& rng, int n, double labeled) {
  std::vector<BatchItem> batch;
  for (int i = 0; i < n; ++i) {
    batch.push_back({random_tensor({3, 8, 8}, rng), random_sparse(rng, 8, 8, 4, labeled)});
  }
  return batch;
}

TEST(TrainStepTest, UnlabeledWarmupBatchIsSkipped) {
  Rng rng(4);
  TrainConfig c;
  TrainerState s = init_trainer(c);
  const ModelParams before = s.student;
  const StepLosses l = train_step(s, tiny_batch(rng, 2, 0.0), effective_schedule(c, 0), c);
  EXPECT_TRUE(l.skipped);
  EXPECT_EQ(s.student, before);
  EXPECT_EQ(s.optimizer.step, 0u);
}

TEST(TrainStepTest, RepeatedStepsReduceSupervisedLoss) {
  Rng rng(5);
  TrainConfig c;
  TrainerState s = init_trainer(c);
  const std::vector<BatchItem> batch = tiny_batch(rng, 2, 0.6);
  const ScheduleState sched = effective_schedule(c, 0);
  const double first = train_step(s, batch, sched, c).sup;
  double last = first;
  for (int i = 0; i < 30; ++i) last = train_step(s, batch, sched, c).sup;
  EXPECT_LT(last, first);
  EXPECT_EQ(s.teacher, init_trainer(c).teacher);  // no EMA in warm-up
}

TEST(TrainStepTest, CotrainingMovesTeacherByEma) {
  Rng rng(6);
  TrainConfig c;
  TrainerState s = init_trainer(c);
  const std::vector<BatchItem> batch = tiny_batch(rng, 2, 0.5);
  const ScheduleState sched = effective_schedule(c, 20);
  ModelParams expected = s.teacher;
  const StepLosses l = train_step(s, batch, sched, c);
  EXPECT_FALSE(l.skipped);
  ema_update(expected, s.student, c.schedule.ema_beta);
  EXPECT_EQ(s.teacher, expected);
}

class RunTrainingTest : public ::testing::Test {
 protected:
  void SetUp() override {
    DatasetSpec spec;
    spec.train = 4;
    spec.val = 2;
    spec.test = 0;
    spec.size = 32;
    data_ = generate_dataset(spec);
    config_.schedule.total_epochs = 5;
    config_.batch_size = 2;
    config_.patience = 100;
  }
  Dataset data_;
  TrainConfig config_;
};

TEST_F(RunTrainingTest, PhasesAndHistory) {
  TrainerState s = init_trainer(config_);
  const std::vector<EpochRow> rows = run_training(config_, data_.train, data_.val, s);
  ASSERT_EQ(rows.size(), 5u);
  const int w = config_.schedule.warmup_epochs();
  for (const EpochRow& r : rows) {
    EXPECT_EQ(r.phase, r.epoch < w ? "warmup" : "cotrain");
    if (r.epoch < w) EXPECT_EQ(r.loss_cons, 0.0);
    EXPECT_GE(r.val_mdice, 0.0);
    EXPECT_LE(r.val_mdice, 1.0);
  }
  EXPECT_TRUE(s.teacher_active);
  EXPECT_EQ(s.epoch, 5);
  EXPECT_GE(s.best_epoch, 0);
}

TEST_F(RunTrainingTest, BaselineNeverActivatesTeacher) {
  config_.teacher_enabled = false;
  TrainerState s = init_trainer(config_);
  const TrainerState fresh = s;
  const std::vector<EpochRow> rows = run_training(config_, data_.train, data_.val, s);
  EXPECT_FALSE(s.teacher_active);
  EXPECT_EQ(s.teacher, fresh.teacher);
  for (const EpochRow& r : rows) {
    EXPECT_EQ(r.alpha, 1.0);
    EXPECT_EQ(r.loss_cons, 0.0);
    EXPECT_EQ(r.pseudo_coverage, 0.0);
  }
}

TEST_F(RunTrainingTest, DeterministicAndResumable) {
  TrainerState a = init_trainer(config_);
  run_training(config_, data_.train, data_.val, a);
  TrainerState b = init_trainer(config_);
  run_training(config_, data_.train, data_.val, b);
  EXPECT_EQ(a.student, b.student);

  TrainerState c = init_trainer(config_);
  RunOptions first;
  first.max_epochs = 2;
  run_training(config_, data_.train, data_.val, c, first);
  EXPECT_EQ(c.epoch, 2);
  TrainerState resumed = c;  // as if restored from disk
  run_training(config_, data_.train, data_.val, resumed);
  EXPECT_EQ(resumed.student, a.student);
  EXPECT_EQ(resumed.teacher, a.teacher);
  ASSERT_EQ(resumed.history.size(), a.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(resumed.history[i].loss_total, a.history[i].loss_total);
    EXPECT_EQ(resumed.history[i].val_mdice, a.history[i].val_mdice);
  }
}

TEST_F(RunTrainingTest, EarlyStoppingHonoursPatience) {
  config_.patience = 1;
  config_.schedule.total_epochs = 30;
  TrainerState s = init_trainer(config_);
  run_training(config_, data_.train, data_.val, s);
  // Stops on the first epoch that fails to improve.
  ASSERT_TRUE(s.stopped || s.epoch == 30);
  if (s.stopped) {
    EXPECT_EQ(s.epochs_since_improvement, 1);
    EXPECT_EQ(s.best_epoch, s.epoch - 2);
  }
}

TEST(PredictTest, ArgmaxOfLogits) {
  ModelParams p = ModelParams::zeros(3);
  p.tensors[9] = Tensor({3}, std::vector<double>{0.0, 2.0, 2.0});
  const LabelMask m = predict_mask(p, Tensor({3, 4, 4}, 0.5));
  for (std::uint8_t v : m.labels) EXPECT_EQ(v, 1);
}

}  // namespace
}  // namespace sgts
