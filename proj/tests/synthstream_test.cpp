#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "streamadapt/dapmask.hpp"
#include "streamadapt/frame_io.hpp"
#include "streamadapt/synthstream.hpp"

using namespace streamadapt;

namespace {

double mean_hf_ratio(const Frame& f) {
  const EnergyMap em = energy_map(f, FrequencySpec{});
  return std::accumulate(em.ratios.begin(), em.ratios.end(), 0.0) / static_cast<double>(em.ratios.size());
}

double channel_variance(const Frame& f, int c) {
  const auto p = f.plane(c);
  double mean = 0.0;
  for (float v : p) mean += v;
  mean /= static_cast<double>(p.size());
  double var = 0.0;
  for (float v : p) var += (v - mean) * (v - mean);
  return var / static_cast<double>(p.size());
}

}  // namespace

TEST(GenScene, DeterministicForSeed) {
  const SceneSpec spec = SceneSpec::make_default();
  const Scene a = gen_scene(spec, 42), b = gen_scene(spec, 42);
  EXPECT_EQ(a.frame, b.frame);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(gen_scene(spec, 43).labels, a.labels);
}

TEST(GenScene, TwoClassesBothPresent) {
  const SceneSpec spec = SceneSpec::make_default(2);
  const Scene s = gen_scene(spec, 0);
  const std::set<int> ids(s.labels.ids.begin(), s.labels.ids.end());
  EXPECT_EQ(ids, (std::set<int>{0, 1}));
}

TEST(GenScene, RejectsSingleClass) {
  SceneSpec spec = SceneSpec::make_default();
  spec.class_count = 1;
  EXPECT_THROW(gen_scene(spec, 0), std::invalid_argument);
}

TEST(GenScene, ValuesInUnitIntervalAndIdsBelowK) {
  const SceneSpec spec = SceneSpec::make_default();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = gen_scene(spec, seed);
    EXPECT_NO_THROW(validate(s.frame));
    EXPECT_NO_THROW(validate(s.labels, spec.class_count));
  }
}

TEST(GenScene, ClassSharesMatchSpecOver100Frames) {
  const SceneSpec spec = SceneSpec::make_default(8);
  std::vector<double> tally(8, 0.0);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene s = gen_scene(spec, seed);
    for (ClassId id : s.labels.ids) tally[id] += 1.0;
    total += static_cast<double>(s.labels.size());
  }
  for (int c = 0; c < 8; ++c) {
    const double share = tally[c] / total;
    EXPECT_NEAR(share, spec.class_shares[c], 0.2 * spec.class_shares[c]) << "class " << c;
  }
}

TEST(GenScene, EveryClassInAny100FrameWindow) {
  const SceneSpec spec = SceneSpec::make_default(8);
  std::set<int> seen;
  for (std::uint64_t seed = 500; seed < 600; ++seed)
    for (ClassId id : gen_scene(spec, seed).labels.ids) seen.insert(id);
  EXPECT_EQ(seen.size(), 8u);
}

TEST(GenScene, DefaultSpecHasRareClass) {
  const SceneSpec spec = SceneSpec::make_default(8);
  EXPECT_LT(*std::min_element(spec.class_shares.begin(), spec.class_shares.end()), 0.05);
}

TEST(ApplyRain, ZeroIntensityIsIdentity) {
  const Scene s = gen_scene(SceneSpec::make_default(), 1);
  EXPECT_EQ(apply_rain(s.frame, 0.0, 9), s.frame);
}

TEST(ApplyRain, DeterministicAndClamped) {
  const Scene s = gen_scene(SceneSpec::make_default(), 2);
  const Frame a = apply_rain(s.frame, 0.7, 5), b = apply_rain(s.frame, 0.7, 5);
  EXPECT_EQ(a, b);
  EXPECT_NO_THROW(validate(a));
  EXPECT_NE(a, apply_rain(s.frame, 0.7, 6));
}

TEST(ApplyRain, RejectsIntensityOutsideUnitInterval) {
  const Scene s = gen_scene(SceneSpec::make_default(), 2);
  EXPECT_THROW(apply_rain(s.frame, -0.1, 0), std::invalid_argument);
  EXPECT_THROW(apply_rain(s.frame, 1.5, 0), std::invalid_argument);
  EXPECT_THROW(apply_fog(s.frame, 1.01, 0), std::invalid_argument);
}

TEST(ApplyRain, HeavierRainRaisesHighFrequencyEnergy) {
  const Scene s = gen_scene(SceneSpec::make_default(), 3);
  EXPECT_GT(mean_hf_ratio(apply_rain(s.frame, 0.8, 11)), mean_hf_ratio(apply_rain(s.frame, 0.2, 11)));
}

TEST(ApplyRain, HighFrequencyEnergyNonDecreasingInIntensity) {
  const Scene s = gen_scene(SceneSpec::make_default(), 4);
  double prev = mean_hf_ratio(s.frame);
  for (int k = 1; k <= 10; ++k) {
    const double r = mean_hf_ratio(apply_rain(s.frame, k / 10.0, 21));
    EXPECT_GE(r, prev) << "intensity " << k / 10.0;
    prev = r;
  }
}

TEST(ApplyFog, ZeroIntensityIsIdentityAndDeterministic) {
  const Scene s = gen_scene(SceneSpec::make_default(), 5);
  EXPECT_EQ(apply_fog(s.frame, 0.0, 1), s.frame);
  EXPECT_EQ(apply_fog(s.frame, 0.6, 1), apply_fog(s.frame, 0.6, 1));
}

TEST(ApplyFog, FullIntensityReducesEveryChannelVariance) {
  const Scene s = gen_scene(SceneSpec::make_default(), 6);
  const Frame f = apply_fog(s.frame, 1.0, 3);
  for (int c = 0; c < 3; ++c) EXPECT_LT(channel_variance(f, c), channel_variance(s.frame, c));
}

TEST(Stream, ClearSegmentFrameEqualsScene) {
  const SceneSpec spec = SceneSpec::make_default();
  const DomainProfile profile = DomainProfile::pyramidal(Condition::Rain, 5, 10, 77);
  const StreamSample s = next(profile, spec, 3);
  EXPECT_EQ(s.tag.condition, Condition::Clear);
  const StreamSample again = next(profile, spec, 3);
  EXPECT_EQ(s.frame, again.frame);
  // Labels never change under weather, so a rainy frame shares them with its scene.
  const StreamSample rainy = next(profile, spec, 25);
  EXPECT_EQ(rainy.tag.condition, Condition::Rain);
  EXPECT_NO_THROW(validate(rainy.labels, spec.class_count));
}

TEST(Stream, WeatherNeverChangesLabels) {
  const Scene s = gen_scene(SceneSpec::make_default(), 8);
  for (Condition c : {Condition::Rain, Condition::Fog}) {
    const Frame f = apply_condition(s.frame, c, 1.0, 4);
    EXPECT_EQ(f.width, s.labels.width);
    EXPECT_EQ(f.height, s.labels.height);
  }
  const DomainProfile p = DomainProfile::pyramidal(Condition::Rain, 2, 5, 1);
  const StreamSample a = next(p, SceneSpec::make_default(), 12);
  DomainProfile clear = p;
  for (Segment& seg : clear.segments) seg = {Condition::Clear, 0.0, seg.frame_count};
  EXPECT_EQ(a.labels, next(clear, SceneSpec::make_default(), 12).labels);
}

TEST(Stream, PyramidalIntensitiesArePalindrome) {
  const DomainProfile p = DomainProfile::pyramidal(Condition::Rain, 5, 4);
  ASSERT_EQ(p.segments.size(), 11u);
  std::vector<double> seen;
  for (int t = 0; t < p.total_frames(); t += 4) seen.push_back(next(p, SceneSpec::make_default(), t).tag.intensity);
  ASSERT_EQ(seen.size(), 11u);
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_DOUBLE_EQ(seen[i], seen[seen.size() - 1 - i]);
  EXPECT_DOUBLE_EQ(seen[5], 1.0);
  for (std::size_t i = 1; i <= 5; ++i) EXPECT_GT(seen[i], seen[i - 1]);
}

TEST(Stream, CursorPastEndThrows) {
  const DomainProfile p = DomainProfile::pyramidal(Condition::Rain, 1, 3);
  EXPECT_THROW(next(p, SceneSpec::make_default(), p.total_frames()), std::out_of_range);
}

TEST(Stream, SegmentEnergyMonotoneInIntensity) {
  const SceneSpec spec = SceneSpec::make_default();
  const DomainProfile p = DomainProfile::pyramidal(Condition::Rain, 5, 60, 3);
  std::vector<std::pair<double, double>> seg;  // intensity, mean R
  for (std::size_t s = 0, start = 0; s < p.segments.size(); start += p.segments[s].frame_count, ++s) {
    double sum = 0.0;
    const int n = 6;
    for (int i = 0; i < n; ++i) sum += mean_hf_ratio(next(p, spec, static_cast<int>(start) + i * 10).frame);
    seg.emplace_back(p.segments[s].intensity, sum / n);
  }
  for (const auto& a : seg)
    for (const auto& b : seg)
      if (a.first < b.first) { EXPECT_LT(a.second, b.second) << a.first << " vs " << b.first; }
}

TEST(FrameIo, RoundTripsFramesAndLabels) {
  const Scene s = gen_scene(SceneSpec::make_default(), 9);
  std::stringstream fs, ls;
  write_frame(fs, s.frame);
  write_labels(ls, s.labels);
  EXPECT_EQ(fs.str().substr(0, 4), "RDSF");
  EXPECT_EQ(ls.str().substr(0, 4), "RDSL");
  EXPECT_EQ(read_frame(fs), s.frame);
  EXPECT_EQ(read_labels(ls), s.labels);
}

TEST(FrameIo, RejectsBadMagic) {
  std::stringstream ss("XXXX0000000000");
  EXPECT_THROW(read_frame(ss), std::runtime_error);
}
