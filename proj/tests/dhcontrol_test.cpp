#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "streamadapt/dhcontrol.hpp"
#include "streamadapt/random.hpp"

using namespace streamadapt;

namespace {

std::vector<double> emit_all(SignalState& s, const std::vector<double>& d) {
  std::vector<double> out;
  for (double v : d)
    if (auto a = observe(s, v)) out.push_back(*a);
  return out;
}

}  // namespace

TEST(Observe, UnitBinNoSmoothingEchoesInput) {
  SignalState s = SignalState::make(1, 1.0);
  const std::vector<double> d{0.3, 1.7, 0.0, 2.2};
  EXPECT_EQ(emit_all(s, d), d);
}

TEST(Observe, ConstantStreamIsFixedPoint) {
  SignalState s = SignalState::make(5, 0.1);
  for (double a : emit_all(s, std::vector<double>(50, 1.25))) EXPECT_DOUBLE_EQ(a, 1.25);
}

TEST(Observe, HandEvaluatedRecurrence) {
  SignalState s = SignalState::make(2, 0.1);
  const auto a = emit_all(s, {1, 1, 3, 3});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_DOUBLE_EQ(a[1], 0.9 * 1.0 + 0.1 * 3.0);
  EXPECT_EQ(s.history.size(), 4u);
}

TEST(Observe, RejectsNonFiniteOrNegative) {
  SignalState s = SignalState::make(2, 0.5);
  EXPECT_THROW(observe(s, std::nan("")), std::invalid_argument);
  EXPECT_THROW(observe(s, INFINITY), std::invalid_argument);
  EXPECT_THROW(observe(s, -0.1), std::invalid_argument);
  EXPECT_THROW(SignalState::make(0, 0.5), std::invalid_argument);
}

TEST(Discretize, WithinThresholdHolds) {
  DiscreteState s = DiscreteState::make(0.25);
  discretize(s, 1.0);
  const DiscreteStep r = discretize(s, 1.2);
  EXPECT_FALSE(r.shift);
  EXPECT_EQ(r.level, 1.0);
  EXPECT_EQ(r.delta, 0.0);
}

TEST(Discretize, DirectRule) {
  DiscreteState s = DiscreteState::make(0.25);
  discretize(s, 0.8);
  const DiscreteStep r = discretize(s, 1.3);
  EXPECT_TRUE(r.shift);
  EXPECT_EQ(r.level, 1.3);
  EXPECT_NEAR(r.delta, 0.5, 1e-15);
}

TEST(Discretize, StepThroughTrace) {
  DiscreteState s = DiscreteState::make(0.25);
  const std::vector<double> a{0.8, 0.9, 1.3, 1.25, 0.8};
  const std::vector<double> expected_b{0.8, 0.8, 1.3, 1.3, 0.8};
  std::vector<int> shifts;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const DiscreteStep r = discretize(s, a[i]);
    EXPECT_EQ(r.level, expected_b[i]) << "step " << i + 1;
    if (r.shift) shifts.push_back(static_cast<int>(i) + 1);
  }
  EXPECT_EQ(shifts, (std::vector<int>{3, 5}));
}

TEST(Discretize, ChangesOnlyBeyondThresholdOnRandomTraces) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    DiscreteState s = DiscreteState::make(0.2);
    discretize(s, rng.uniform(0.0, 3.0));
    for (int i = 0; i < 200; ++i) {
      const double prev = s.level;
      const double a = rng.uniform(0.0, 3.0);
      const DiscreteStep r = discretize(s, a);
      EXPECT_EQ(r.shift, std::abs(prev - a) > 0.2);
      EXPECT_EQ(r.level, r.shift ? a : prev);
    }
  }
}

TEST(Schedule, BoundaryConstantsExact) {
  const ScheduleConfig c;
  const AdaptationOrder src = order_adaptation(0.5, 0.8, c, 0.25);
  EXPECT_EQ(src.alpha_mask, 0.3);
  EXPECT_EQ(src.alpha_mix, 0.5);
  EXPECT_EQ(src.lr, 1.5e-4);
  const AdaptationOrder hard = order_adaptation(0.5, 2.55, c, 0.25);
  EXPECT_EQ(hard.alpha_mask, 0.7);
  EXPECT_EQ(hard.alpha_mix, 0.75);
  EXPECT_EQ(hard.lr, 6e-5);
  EXPECT_EQ(order_adaptation(-0.5, 0.8, c, 0.25).k_l, 187);
  EXPECT_EQ(order_adaptation(-0.5, 2.55, c, 0.25).k_l, 562);
}

TEST(Schedule, Midpoint) {
  const AdaptationOrder mid = order_adaptation(0.5, 1.675, ScheduleConfig{}, 0.25);
  EXPECT_NEAR(mid.alpha_mask, 0.5, 1e-12);
  EXPECT_NEAR(mid.alpha_mix, 0.625, 1e-12);
}

TEST(Schedule, AwayFromSourceUsesMaxKl) {
  const ScheduleConfig c;
  for (double b : {0.5, 0.8, 1.2, 2.0, 3.0}) {
    const AdaptationOrder o = order_adaptation(0.3, b, c, 0.25);
    EXPECT_EQ(o.k_l, 562);
    EXPECT_EQ(o.direction, ShiftDirection::AwayFromSource);
    EXPECT_EQ(o.iterations, std::lround(562 * 0.3 / 0.25));
  }
  EXPECT_EQ(order_adaptation(-0.3, 1.0, c, 0.25).direction, ShiftDirection::TowardSource);
}

TEST(Schedule, ClampedAndMonotoneInLevel) {
  const ScheduleConfig c;
  double prev_mask = 0.0, prev_mix = 0.0;
  for (int i = 0; i <= 60; ++i) {
    const double b = i * 0.05;
    const AdaptationOrder o = order_adaptation(0.3, b, c, 0.25);
    EXPECT_GE(o.alpha_mask, c.mask_min);
    EXPECT_LE(o.alpha_mask, c.mask_max);
    EXPECT_GE(o.alpha_mix, c.mix_min);
    EXPECT_LE(o.alpha_mix, c.mix_max);
    EXPECT_GE(o.alpha_mask, prev_mask);
    EXPECT_GE(o.alpha_mix, prev_mix);
    EXPECT_GT(o.lr, 0.0);
    prev_mask = o.alpha_mask;
    prev_mix = o.alpha_mix;
  }
}

TEST(Schedule, LengthLinearInShift) {
  const ScheduleConfig c;
  const int l1 = order_adaptation(0.25, 1.0, c, 0.25).iterations;
  const int l2 = order_adaptation(0.5, 1.0, c, 0.25).iterations;
  const int l4 = order_adaptation(1.0, 1.0, c, 0.25).iterations;
  EXPECT_EQ(l1, 562);
  EXPECT_EQ(l2, 2 * l1);
  EXPECT_EQ(l4, 4 * l1);
  EXPECT_EQ(order_adaptation(0.0, 1.0, c, 0.25).iterations, 0);
}

TEST(Schedule, OverrideAndValidation) {
  ScheduleConfig c;
  c.kl_override = 750;
  EXPECT_EQ(order_adaptation(-0.25, 1.0, c, 0.25).iterations, 750);
  ScheduleConfig bad;
  bad.b_hard = 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  ScheduleConfig bad2;
  bad2.mask_min = 0.8;
  EXPECT_THROW(bad2.validate(), std::invalid_argument);
}

TEST(LrAt, LinearDecay) {
  AdaptationOrder o;
  o.lr = 1e-4;
  o.iterations = 2;
  EXPECT_EQ(lr_at(o, 0), 1e-4);
  EXPECT_EQ(lr_at(o, 1), 5e-5);
  EXPECT_THROW(lr_at(o, 2), std::out_of_range);
  o.iterations = 10;
  double prev = INFINITY;
  for (int i = 0; i < 10; ++i) {
    const double lr = lr_at(o, i);
    EXPECT_GT(lr, 0.0);
    EXPECT_LT(lr, prev);
    prev = lr;
  }
  EXPECT_NEAR(lr_at(o, 9), 1e-4 / 10, 1e-18);
}

TEST(Controller, StepInNoiseDetectedOnce) {
  ControllerConfig cfg;
  cfg.distance_scale = 1.0;
  const double z = cfg.z;
  Rng rng(5);
  const int step_frame = 200;
  int shifts = 0, shift_frame = -1;
  Controller c(cfg);
  for (int t = 0; t < 400; ++t) {
    const double base = t < step_frame ? 1.0 : 1.0 + 2 * z;
    if (auto o = c.step(t, base + rng.uniform(-z / 4, z / 4))) {
      ++shifts;
      shift_frame = t;
      EXPECT_GT(o->iterations, 0);
    }
  }
  EXPECT_EQ(shifts, 1);
  EXPECT_LE(std::abs(shift_frame - step_frame), cfg.bin_size);
}

TEST(Controller, PureStateMachine) {
  ControllerConfig cfg;
  Rng rng(6);
  std::vector<double> trace;
  for (int t = 0; t < 300; ++t) trace.push_back(1.0 + (t / 60) * 0.3 + rng.uniform(0.0, 0.05));
  auto orders = [&] {
    Controller c(cfg);
    std::vector<int> out;
    for (int t = 0; t < 300; ++t)
      if (auto o = c.step(t, trace[t])) out.push_back(o->iterations);
    return std::pair{out, c.trace().size()};
  };
  EXPECT_EQ(orders(), orders());
}

TEST(Controller, TraceCsvHasHeaderAndOneRowPerBin) {
  ControllerConfig cfg;
  cfg.bin_size = 4;
  Controller c(cfg);
  for (int t = 0; t < 12; ++t) c.step(t, t < 8 ? 1.0 : 2.0);
  std::stringstream ss;
  write_trace_csv(ss, c.trace());
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "frame,d,A,B,shift,dB,L,K_eta,alpha_mix,alpha_mask");
  int rows = 0;
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_TRUE(c.trace().back().shift);
}

TEST(ControllerConfig, Validation) {
  ControllerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.z = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ControllerConfig{};
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
