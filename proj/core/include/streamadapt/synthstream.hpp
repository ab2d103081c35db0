#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "streamadapt/image.hpp"

namespace streamadapt {

enum class Texture : std::uint8_t { Flat, Stripes, Checker, Speckle, Dots, Gradient };

struct ClassStyle {
  std::array<float, 3> base{0.5f, 0.5f, 0.5f};
  Texture texture = Texture::Flat;
  float amplitude = 0.0f;
  float period = 4.0f;
  float orientation = 0.0f;  // radians, stripes only
  bool outlined = false;     // dark rim along the region boundary
};

// Procedural stand-in for a labeled street-scene dataset. Each frame is a
// Voronoi mosaic whose cells are assigned classes so that per-frame pixel
// shares track `class_shares`; every class with a positive share appears in
// every frame.
struct SceneSpec {
  int class_count = 8;
  std::uint64_t layout_seed = 0;
  double object_density = 1.0;  // cells per 512 pixels
  int width = 128;
  int height = 128;
  float pixel_noise = 0.02f;
  std::vector<double> class_shares;
  std::vector<ClassStyle> palette;

  // K classes; the last class is rare (share 0.04), classes 2 and 3 share a
  // texture family and differ mostly by the outline rim around class 3.
  static SceneSpec make_default(int class_count = 8, std::uint64_t layout_seed = 0);

  int cell_count() const;
  // Throws std::invalid_argument (K < 2, shares not summing to 1, palette size, ...).
  void validate() const;
};

enum class Condition : std::uint8_t { Clear, Rain, Fog };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

struct Segment {
  Condition condition = Condition::Clear;
  double intensity = 0.0;
  int frame_count = 1;

  bool operator==(const Segment&) const = default;
};

struct DomainProfile {
  std::vector<Segment> segments;
  std::uint64_t seed = 0;

  // clear, 0.2, 0.4, ..., peak then back down to clear: `levels` rising
  // weather segments, so 2*levels+1 segments in total.
  static DomainProfile pyramidal(Condition weather, int levels, int frames_per_segment,
                                 std::uint64_t seed = 0);

  int total_frames() const;
  // Index of the segment containing `cursor`; throws std::out_of_range past the end.
  int segment_index(int cursor) const;
  void validate() const;
};

// Ground-truth domain of a stream frame; evaluation only.
struct SegmentTag {
  int segment = 0;
  Condition condition = Condition::Clear;
  double intensity = 0.0;
};

struct StreamSample {
  Frame frame;
  LabelMap labels;
  SegmentTag tag;
};

struct Scene {
  Frame frame;
  LabelMap labels;
};

Scene gen_scene(const SceneSpec& spec, std::uint64_t frame_seed);

// A 3x3 blur mixed in by intensity, then bright streaks at roughly 60
// degrees whose count grows with intensity.
Frame apply_rain(const Frame& frame, double intensity, std::uint64_t seed);
// Blend toward white with a mild seeded density field, plus 3x3 blur.
Frame apply_fog(const Frame& frame, double intensity, std::uint64_t seed);
Frame apply_condition(const Frame& frame, Condition condition, double intensity,
                      std::uint64_t seed);

StreamSample next(const DomainProfile& profile, const SceneSpec& spec, int cursor);

// Frame drawn from the same distribution as segment `segment` of the profile
// but from a disjoint seed space; used for held-out evaluation.
StreamSample held_out_sample(const DomainProfile& profile, const SceneSpec& spec, int segment,
                             int index, std::uint64_t eval_seed);

}  // namespace streamadapt
