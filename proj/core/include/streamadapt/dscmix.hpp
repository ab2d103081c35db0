#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "streamadapt/image.hpp"
#include "streamadapt/random.hpp"

namespace streamadapt {

struct ClassStats {
  std::vector<double> frequencies;          // f_c
  std::vector<std::uint64_t> pixel_counts;  // exact tallies behind f_c
  std::size_t image_count = 0;
  std::size_t image_area = 0;
};

// f_c = (#pixels labeled c) / (N_S * H * W). Throws on empty input, ragged
// shapes or ids >= class_count.
ClassStats class_frequencies(std::span<const LabelMap> labels, int class_count);

struct SamplingDist {
  std::vector<double> probabilities;
  double temperature = 0.01;

  // Class ids by descending probability, ties by ascending id.
  std::vector<int> rarity_order() const;
};

// P(c) = exp((1 - f_c)/T) / sum_c' exp((1 - f_c')/T), max-subtracted.
SamplingDist sampling_probs(const ClassStats& stats, double temperature);

// Inverse-CDF draws over a discrete distribution.
class ClassSampler {
 public:
  explicit ClassSampler(std::span<const double> probabilities);
  int draw(Rng& rng) const;

 private:
  std::vector<double> cdf_;
};

struct ClassCutout {
  ClassId class_id = 0;
  int x = 0, y = 0, width = 0, height = 0;  // bounding box in the source frame
  std::vector<std::uint8_t> mask;           // width*height, row-major, 1 inside the component
  std::vector<float> rgb;                   // 3 planes of width*height
  int source_frame = -1;

  int mask_pixels() const;
};

struct BufferConfig {
  int capacity = 32;              // cutouts per class
  std::size_t draw_budget = 4096;
  int min_component = 16;         // pixels
};

struct ReplayBuffer {
  SamplingDist dist;
  int capacity = 32;
  std::vector<std::deque<ClassCutout>> stores;  // one FIFO ring per class
  std::vector<std::string> warnings;
  std::size_t draws = 0;

  // FIFO eviction once a store holds `capacity` cutouts.
  void push(ClassCutout cutout);
  int class_count() const { return static_cast<int>(stores.size()); }
  int available_classes() const;
  std::size_t total_cutouts() const;
  // Bounding-box pixels held across all cutouts.
  std::size_t stored_pixels() const;
};

// Draws class c ~ P (renormalized over classes that own at least one
// component of >= min_component pixels), then one such connected component
// of c from a random source image, until every eligible store is full or the
// draw budget runs out. Deterministic in seed.
ReplayBuffer build_buffer(std::span<const Frame> frames, std::span<const LabelMap> labels,
                          const SamplingDist& dist, const BufferConfig& cfg, std::uint64_t seed);

struct MixResult {
  Frame frame;
  LabelMap labels;
  std::vector<std::uint8_t> mix_mask;  // 1 where a source pixel was pasted
  std::vector<ClassId> pasted;
};

struct MixOptions {
  // x_mix = a*(M*x_s) + (1-a)*((1-M)*x_t) verbatim instead of hard pasting.
  bool literal_blend = false;
};

// Identity mix: target frame and pseudo-labels, empty mask.
MixResult identity_mix(const Frame& target, const LabelMap& pseudo);

// Pastes `cutout` with its top-left corner at (x, y); later pastes overwrite
// earlier ones.
void paste_cutout(MixResult& mix, const ClassCutout& cutout, int x, int y);

// Selects round(alpha_mix * K_avail) classes rarest-first by P, pastes one
// random cutout of each at a uniformly random valid position.
MixResult mix(const Frame& target, const LabelMap& pseudo, const ReplayBuffer& buffer,
              double alpha_mix, std::uint64_t seed, const MixOptions& opts = {});

// RDSB: "RDSB", version u16, class count u16, temperature f64, K x f64
// probabilities, capacity u32, cutout count u32, then per cutout: class id
// u16, bbox x/y/w/h u16, packed mask bits (LSB first), float32 planar RGB.
inline constexpr std::uint16_t kBufferFileVersion = 1;
void write_buffer(std::ostream& os, const ReplayBuffer& buffer);
ReplayBuffer read_buffer(std::istream& is);
void save_buffer(const ReplayBuffer& buffer, const std::filesystem::path& path);
ReplayBuffer load_buffer(const std::filesystem::path& path);

}  // namespace streamadapt
