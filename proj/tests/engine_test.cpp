#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "streamadapt/engine.hpp"
#include "streamadapt/random.hpp"

using namespace streamadapt;

namespace {

LabelMap random_labels(int w, int h, int k, Rng& rng) {
  LabelMap m(w, h);
  for (ClassId& id : m.ids) id = static_cast<ClassId>(rng.below(k));
  return m;
}

Frame random_frame(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Frame f(w, h, 3);
  for (float& v : f.data) v = static_cast<float>(rng.uniform());
  return f;
}

RunConfig tiny_config() {
  RunConfig cfg = RunConfig::make_default(3);
  cfg.scene.width = 32;
  cfg.scene.height = 32;
  cfg.profile = DomainProfile::pyramidal(Condition::Rain, 1, 8, cfg.profile.seed);
  cfg.pretrain.train_frames = 6;
  cfg.pretrain.val_frames = 2;
  cfg.pretrain.crop = 32;
  cfg.pretrain.batch = 2;
  cfg.pretrain.min_epochs = 1;
  cfg.pretrain.max_epochs = 2;
  cfg.pretrain.miou_floor = 0.0;
  cfg.buffer.source_frames = 6;
  cfg.eval.frames_per_segment = 2;
  cfg.controller.bin_size = 4;
  cfg.validate();
  return cfg;
}

// Teacher pseudo-labels and the quality-weighted CE of the student on the
// masked frame, assembled from primitive operations in long double.
long double masked_loss_oracle(const ModelParams& student, const ModelParams& teacher, const Frame& frame,
                               const MaskGrid& mask, double tau) {
  const Tensor tp = softmax(*forward(teacher, frame, Heads::Main).logits);
  const int k = teacher.shape.class_count;
  const std::size_t n = frame.plane_size();
  std::vector<int> ids(n);
  std::size_t confident = 0;
  for (std::size_t p = 0; p < n; ++p) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (tp.data[c * n + p] > tp.data[best * n + p]) best = c;
    ids[p] = best;
    if (tp.data[best * n + p] >= tau) ++confident;
  }
  const long double quality = static_cast<long double>(confident) / n;
  if (quality == 0) return 0;

  Frame masked = frame;
  const int ps = mask.grid.patch_size;
  for (int r = 0; r < mask.grid.rows; ++r)
    for (int col = 0; col < mask.grid.cols; ++col)
      if (!mask.keep[r * mask.grid.cols + col])
        for (int c = 0; c < 3; ++c)
          for (int y = r * ps; y < (r + 1) * ps; ++y)
            for (int x = col * ps; x < (col + 1) * ps; ++x) masked.at(c, y, x) = 0.0f;

  const Tensor logits = *forward(student, masked, Heads::Main).logits;
  long double sum = 0;
  for (std::size_t p = 0; p < n; ++p) {
    long double mx = logits.data[p];
    for (int c = 1; c < k; ++c) mx = std::max<long double>(mx, logits.data[c * n + p]);
    long double z = 0;
    for (int c = 0; c < k; ++c) z += std::exp(static_cast<long double>(logits.data[c * n + p]) - mx);
    sum += std::log(z) + mx - logits.data[ids[p] * n + p];
  }
  return quality * sum / n;
}

}  // namespace

TEST(Metrics, PerfectPredictionScoresOne) {
  Rng rng(1);
  const LabelMap t = random_labels(16, 16, 5, rng);
  ConfusionMatrix cm(5);
  cm.add(t, t);
  const MiouResult r = compute_miou(cm);
  EXPECT_DOUBLE_EQ(r.miou, 1.0);
}

TEST(Metrics, DisjointPredictionScoresZero) {
  LabelMap truth(4, 4, 0), pred(4, 4, 1);
  ConfusionMatrix cm(3);
  cm.add(pred, truth);
  const MiouResult r = compute_miou(cm);
  EXPECT_DOUBLE_EQ(r.miou, 0.0);
  EXPECT_FALSE(r.present[2]);
  EXPECT_TRUE(std::isnan(r.iou[2]));
}

TEST(Metrics, BruteForceConfusionOnSmallMaps) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelMap t = random_labels(4, 4, 3, rng), p = random_labels(4, 4, 3, rng);
    const MiouResult r = compute_miou(std::span(&p, 1), std::span(&t, 1), 3);
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < 3; ++c) {
      int tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < 16; ++i) {
        tp += p.ids[i] == c && t.ids[i] == c;
        fp += p.ids[i] == c && t.ids[i] != c;
        fn += p.ids[i] != c && t.ids[i] == c;
      }
      if (tp + fp + fn == 0) continue;
      const double iou = static_cast<double>(tp) / (tp + fp + fn);
      EXPECT_DOUBLE_EQ(r.iou[c], iou);
      sum += iou;
      ++present;
    }
    EXPECT_NEAR(r.miou, sum / present, 1e-15);
  }
}

TEST(Metrics, ConfusionRejectsBadInput) {
  ConfusionMatrix cm(3);
  EXPECT_THROW(cm.add(LabelMap(4, 4, 0), LabelMap(4, 3, 0)), std::invalid_argument);
  EXPECT_THROW(cm.add(LabelMap(4, 4, 3), LabelMap(4, 4, 0)), std::invalid_argument);
}

TEST(Metrics, HarmonicMean) {
  const std::vector<double> a{0.5, 0.5}, b{1.0, 0.5};
  EXPECT_DOUBLE_EQ(h_miou(a), 0.5);
  EXPECT_NEAR(h_miou(b), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(h_miou(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(h_miou(std::vector<double>{0.5, 0.0}), std::invalid_argument);
  EXPECT_EQ(safe_h_miou({0.5, 0.0}), 0.0);
}

TEST(Metrics, HarmonicMeanBoundedByArithmeticAndMin) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng.below(10));
    for (double& x : v) x = rng.uniform(0.01, 1.0);
    const double h = h_miou(v);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    EXPECT_LE(h, mean + 1e-12);
    EXPECT_GE(h, *std::min_element(v.begin(), v.end()) - 1e-12);
  }
}

TEST(Config, JsonRoundTrip) {
  RunConfig cfg = RunConfig::make_default(7);
  cfg.adapt.ablation = Ablation::MixOnly;
  cfg.adapt.mask_strategy = MaskStrategy::Random;
  cfg.controller.schedule.kl_override = 750;
  cfg.profile = DomainProfile::pyramidal(Condition::Fog, 3, 10, 9);
  const RunConfig back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
}

TEST(Config, ApplySeedChangesDerivedSeeds) {
  RunConfig a = RunConfig::make_default(0), b = RunConfig::make_default(0);
  b.apply_seed(1);
  EXPECT_NE(a.pretrain_seed(), b.pretrain_seed());
  EXPECT_NE(a.adapt_seed(), b.adapt_seed());
  EXPECT_NE(a.adapt_seed(), a.eval_seed());
}

TEST(Config, ValidationRejectsInconsistency) {
  RunConfig cfg = RunConfig::make_default();
  cfg.model.class_count = 5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RunConfig::make_default();
  cfg.adapt.tau = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RunConfig::make_default();
  cfg.scene.width = 100;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(config_from_json("{ not json"), std::invalid_argument);
  EXPECT_THROW(ablation_from_string("partial"), std::invalid_argument);
}

TEST(MaskedLoss, ZeroQualityGivesZeroLossAndGradient) {
  ModelShape shape;
  shape.class_count = 4;
  const ModelParams student = init_params(shape, 1), teacher = init_params(shape, 2);
  const Frame f = random_frame(32, 32, 3);
  const MaskGrid m = MaskGrid::all_keep(PatchGrid::for_frame(32, 32, 16));
  // No pixel can be that confident, so quality is 0.
  const MaskedLoss r = masked_loss(student, teacher, f, m, 1.01);
  EXPECT_EQ(r.pseudo.quality, 0.0);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& t : r.grads.tensors)
    for (double g : t.data) EXPECT_EQ(g, 0.0);
}

TEST(MaskedLoss, MatchesCompositionalOracle) {
  ModelShape shape;
  shape.class_count = 4;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const ModelParams student = init_params(shape, 10 + seed), teacher = init_params(shape, 20 + seed);
    const Frame f = random_frame(32, 32, 30 + seed);
    MaskGrid m = MaskGrid::all_keep(PatchGrid::for_frame(32, 32, 16));
    m.keep[seed % 4] = 0;
    const double tau = 0.26;
    const MaskedLoss r = masked_loss(student, teacher, f, m, tau);
    const long double expected = masked_loss_oracle(student, teacher, f, m, tau);
    EXPECT_NEAR(r.loss, static_cast<double>(expected), 1e-6 * std::max(1.0L, std::abs(expected)));
  }
}

TEST(MaskedLoss, AllKeepSelfPredictionIsEntropyLike) {
  // With student == teacher and an all-keep mask, the loss is the quality
  // times the mean of -log max p, which is bounded by quality * log K.
  ModelShape shape;
  shape.class_count = 4;
  const ModelParams p = init_params(shape, 5);
  const Frame f = random_frame(32, 32, 6);
  const MaskedLoss r = masked_loss(p, p, f, MaskGrid::all_keep(PatchGrid::for_frame(32, 32, 16)), 0.0);
  EXPECT_EQ(r.pseudo.quality, 1.0);
  EXPECT_GE(r.loss, 0.0);
  EXPECT_LE(r.loss, std::log(4.0) + 1e-6);
}

TEST(MixedLoss, MatchesDirectCrossEntropy) {
  ModelShape shape;
  shape.class_count = 4;
  const ModelParams p = init_params(shape, 7);
  Rng rng(8);
  const MixResult m = identity_mix(random_frame(32, 32, 9), random_labels(32, 32, 4, rng));
  const LossAndGrads r = mixed_loss(p, m);
  const Tensor logits = *forward(p, m.frame, Heads::Main).logits;
  const std::size_t n = m.frame.plane_size();
  long double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double z = 0;
    for (int c = 0; c < 4; ++c) z += std::exp(static_cast<long double>(logits.data[c * n + i]));
    sum += std::log(z) - logits.data[m.labels.ids[i] * n + i];
  }
  EXPECT_NEAR(r.loss, static_cast<double>(sum / n), 1e-6);
  EXPECT_TRUE(r.grads.all_finite());
}

class AdaptStepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    shape.class_count = 4;
    state = AdaptState::from_checkpoint(Checkpoint::from_source(init_params(shape, 11)));
    frame = random_frame(32, 32, 12);
  }
  AdaptationOrder order(int iterations, double lr) const {
    AdaptationOrder o;
    o.iterations = iterations;
    o.lr = lr;
    o.alpha_mask = 0.5;
    o.alpha_mix = 0.5;
    return o;
  }
  ModelShape shape;
  AdaptState state;
  Frame frame;
  AdaptConfig cfg;
  AdamWConfig opt;
};

TEST_F(AdaptStepTest, NoActiveOrderDoesNothing) {
  const ModelParams before = state.student;
  const StepReport r = adapt_step(state, frame, nullptr, cfg, opt, 1);
  EXPECT_FALSE(r.ran);
  EXPECT_EQ(state.student.tensors, before.tensors);
}

TEST_F(AdaptStepTest, ZeroLengthOrderLeavesParameters) {
  const ModelParams before = state.student;
  state.begin_order(order(0, 1e-3));
  EXPECT_FALSE(adapt_step(state, frame, nullptr, cfg, opt, 1).ran);
  EXPECT_EQ(state.student.tensors, before.tensors);
  EXPECT_FALSE(state.active.has_value());
}

TEST_F(AdaptStepTest, ZeroLearningRateStillAppliesEma) {
  // Decoupled decay also scales with lr, so lr = 0 leaves the student fixed.
  cfg.ema_decay = 0.5;
  state.teacher = init_params(shape, 99);
  const ModelParams before = state.student, teacher_before = state.teacher;
  state.begin_order(order(3, 0.0));
  const StepReport r = adapt_step(state, frame, nullptr, cfg, opt, 1);
  EXPECT_TRUE(r.ran);
  EXPECT_EQ(state.student.tensors, before.tensors);
  for (std::size_t t = 0; t < state.teacher.tensors.size(); ++t)
    for (std::size_t i = 0; i < state.teacher.tensors[t].size(); ++i)
      EXPECT_NEAR(state.teacher.tensors[t].data[i],
                  0.5f * teacher_before.tensors[t].data[i] + 0.5f * before.tensors[t].data[i], 1e-6);
}

TEST_F(AdaptStepTest, NonFiniteLossRollsBack) {
  state.begin_order(order(5, 1e-3));
  const ModelParams snapshot = state.student;
  ASSERT_TRUE(adapt_step(state, frame, nullptr, cfg, opt, 1).ran);
  state.student.tensors[kHeadBias].data[0] = std::numeric_limits<float>::quiet_NaN();
  state.student.touch();
  const StepReport r = adapt_step(state, frame, nullptr, cfg, opt, 1);
  EXPECT_TRUE(r.rolled_back);
  EXPECT_EQ(state.student.tensors, snapshot.tensors);
  EXPECT_EQ(state.rollbacks, 1);
  EXPECT_FALSE(state.active.has_value());
  EXPECT_FALSE(state.diagnostics.empty());
}

TEST_F(AdaptStepTest, OrderRunsExactlyItsLength) {
  state.begin_order(order(4, 1e-4));
  int ran = 0;
  for (int i = 0; i < 10; ++i) ran += adapt_step(state, frame, nullptr, cfg, opt, 2).ran;
  EXPECT_EQ(ran, 4);
  EXPECT_EQ(state.iterations_run, 4);
  EXPECT_EQ(state.optim.step, 4);
}

TEST_F(AdaptStepTest, RepeatedStepsOnOneFrameReduceMixLoss) {
  cfg.ablation = Ablation::MixOnly;
  int descended = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    AdaptState s = AdaptState::from_checkpoint(Checkpoint::from_source(init_params(shape, 100 + trial)));
    const Frame f = random_frame(32, 32, 200 + trial);
    s.begin_order(order(10, 3e-3));
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
      const StepReport r = adapt_step(s, f, nullptr, cfg, opt, trial);
      if (i == 0) first = r.total;
      last = r.total;
    }
    descended += last < first;
  }
  EXPECT_GE(descended, 8);
}

TEST_F(AdaptStepTest, NoAdaptAblationNeverRuns) {
  cfg.ablation = Ablation::NoAdapt;
  const ModelParams before = state.student;
  state.begin_order(order(5, 1e-2));
  for (int i = 0; i < 5; ++i) EXPECT_FALSE(adapt_step(state, frame, nullptr, cfg, opt, 1).ran);
  EXPECT_EQ(state.student.tensors, before.tensors);
}

TEST(AdaptState, CheckpointRoundTrip) {
  ModelShape shape;
  const Checkpoint c = Checkpoint::from_source(init_params(shape, 4));
  EXPECT_EQ(AdaptState::from_checkpoint(c).to_checkpoint(), c);
}

TEST(Pretrain, DeterministicOnTinyConfig) {
  const RunConfig cfg = tiny_config();
  const PretrainResult a = pretrain(cfg), b = pretrain(cfg);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_EQ(a.history, b.history);
  EXPECT_GE(a.epochs, 1);
}

TEST(Pretrain, UnreachableFloorThrows) {
  RunConfig cfg = tiny_config();
  cfg.pretrain.max_epochs = 1;
  cfg.pretrain.miou_floor = 1.0;
  EXPECT_THROW(pretrain(cfg), std::runtime_error);
}

TEST(RunStream, NoAdaptLeavesParametersBitIdentical) {
  RunConfig cfg = tiny_config();
  cfg.adapt.ablation = Ablation::NoAdapt;
  const Checkpoint ckpt = Checkpoint::from_source(init_params(cfg.model, 1));
  const RunResult r = run_stream(cfg, ckpt, nullptr);
  EXPECT_EQ(r.final_state, ckpt);
  EXPECT_EQ(r.report.adapt_iterations, 0);
  EXPECT_EQ(r.records.size(), static_cast<std::size_t>(cfg.profile.total_frames()));
  EXPECT_EQ(r.report.segments.size(), cfg.profile.segments.size());
}

TEST(RunStream, DeterministicAndCsvSchema) {
  RunConfig cfg = tiny_config();
  cfg.controller.distance_scale = 1.0;
  const Checkpoint ckpt = Checkpoint::from_source(init_params(cfg.model, 2));
  const ReplayBuffer buffer = build_source_buffer(cfg);
  const RunResult a = run_stream(cfg, ckpt, &buffer), b = run_stream(cfg, ckpt, &buffer);
  EXPECT_EQ(a.final_state, b.final_state);
  std::stringstream sa, sb;
  write_metrics_csv(sa, a.records, cfg.scene.class_count);
  write_metrics_csv(sb, b.records, cfg.scene.class_count);
  std::string header, columns;
  std::getline(sa, header);
  std::getline(sa, columns);
  EXPECT_EQ(header, "# streamadapt metrics schema 1");
  EXPECT_EQ(columns.substr(0, 40), "frame,segment,condition,intensity,miou,i");
  EXPECT_NE(columns.find(",adapting,distance,order_iteration,order_length,lr,loss"), std::string::npos);
  // Timing is not part of the metrics CSV, so the streams must match exactly.
  sa.seekg(0);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(RunStream, SourceDistanceCalibratesToSourceLevel) {
  const RunConfig cfg = tiny_config();
  const Checkpoint ckpt = Checkpoint::from_source(init_params(cfg.model, 3));
  const double d = source_distance(cfg, ckpt);
  EXPECT_GT(d, 0.0);
  EXPECT_NEAR(distance_scale(cfg, ckpt) * d, cfg.controller.schedule.b_source, 1e-12);
}
