#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "streamadapt/image.hpp"

namespace streamadapt {

using Complex = std::complex<double>;

bool is_power_of_two(int n);

// Unnormalized 2-D DFT of a row-major n x n patch via radix-2 FFT:
// F[u,v] = sum_{y,x} p[y,x] exp(-2 pi i (u y + v x) / n), returned row-major
// in u. Throws std::invalid_argument unless n is a power of two and the patch
// holds n*n values.
std::vector<Complex> fft2(std::span<const double> patch, int n);

struct FrequencySpec {
  int patch_size = 16;
  double epsilon = 1e-7;
  // After centering the spectrum, (u,v) is high-frequency iff
  // max(|u-u0|, |v-v0|) > cutoff. Negative means patch_size / 4.
  int cutoff = -1;
  // Luminance is multiplied by this before the transform (8-bit scale).
  double amplitude_scale = 255.0;

  int effective_cutoff() const { return cutoff >= 0 ? cutoff : patch_size / 4; }
  bool is_high(int u, int v) const;
  int high_count() const;
  // Throws unless the HF set is a nonempty strict subset and epsilon > 0.
  void validate() const;
};

struct HfRatio {
  double value = 0.0;
  bool degenerate = false;  // denominator within 1e-12 of zero; value forced to 0
};

// sum_{HF} log(|F_uv| + eps) / sum_{all} log(|F_uv| + eps), evaluated as
// written: both sums may be negative and the ratio is only used for ranking.
HfRatio hf_energy_ratio_checked(std::span<const double> patch, const FrequencySpec& spec);
double hf_energy_ratio(std::span<const double> patch, const FrequencySpec& spec);

struct PatchGrid {
  int patch_size = 16;
  int rows = 0;
  int cols = 0;

  // Throws unless patch_size divides both sides and rows*cols >= 2.
  static PatchGrid for_frame(int width, int height, int patch_size);
  int count() const { return rows * cols; }
  bool operator==(const PatchGrid&) const = default;
};

struct EnergyMap {
  PatchGrid grid;
  std::vector<double> ratios;  // row-major over patches
  int degenerate_patches = 0;
};

// Luminance patches of `frame`, scaled by spec.amplitude_scale, one ratio each.
EnergyMap energy_map(const Frame& frame, const FrequencySpec& spec);

struct MaskGrid {
  PatchGrid grid;
  std::vector<std::uint8_t> keep;  // 1 keep, 0 drop

  static MaskGrid all_keep(const PatchGrid& grid);
  int dropped() const;
};

// round(alpha * count), half away from zero.
int drop_count(double alpha_mask, int count);

// Drops exactly drop_count(alpha, n) patches with the largest ratio; ties go
// to the lower row-major index. Throws when alpha is outside [0,1].
MaskGrid build_mask(const EnergyMap& energy, double alpha_mask);
// Same drop count, patches chosen uniformly at random.
MaskGrid random_mask(const PatchGrid& grid, double alpha_mask, std::uint64_t seed);

// Zeroes every pixel of every dropped patch on all channels.
Frame apply_mask(const Frame& frame, const MaskGrid& mask);

}  // namespace streamadapt
