#include "streamadapt/dapmask.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "streamadapt/random.hpp"

namespace streamadapt {
namespace {

// In-place iterative radix-2 transform with a directly evaluated twiddle table.
void fft1d(Complex* a, int n, int stride, const std::vector<Complex>& twiddle) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i * stride], a[j * stride]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const int half = len / 2, step = n / len;
    for (int i = 0; i < n; i += len) {
      for (int k = 0; k < half; ++k) {
        const Complex u = a[(i + k) * stride];
        const Complex v = a[(i + k + half) * stride] * twiddle[k * step];
        a[(i + k) * stride] = u + v;
        a[(i + k + half) * stride] = u - v;
      }
    }
  }
}

int centered_distance(int u, int n) { return std::abs((u + n / 2) % n - n / 2); }

}  // namespace

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<Complex> fft2(std::span<const double> patch, int n) {
  if (!is_power_of_two(n)) throw std::invalid_argument("fft2: side " + std::to_string(n) + " is not a power of two");
  if (patch.size() != static_cast<std::size_t>(n) * n) throw std::invalid_argument("fft2: patch is not n x n");
  std::vector<Complex> twiddle(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * k / n;
    twiddle[k] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<Complex> a(patch.begin(), patch.end());
  for (int r = 0; r < n; ++r) fft1d(a.data() + static_cast<std::size_t>(r) * n, n, 1, twiddle);
  for (int c = 0; c < n; ++c) fft1d(a.data() + c, n, n, twiddle);
  return a;
}

bool FrequencySpec::is_high(int u, int v) const {
  return std::max(centered_distance(u, patch_size), centered_distance(v, patch_size)) >
         effective_cutoff();
}

int FrequencySpec::high_count() const {
  int n = 0;
  for (int u = 0; u < patch_size; ++u)
    for (int v = 0; v < patch_size; ++v) n += is_high(u, v);
  return n;
}

void FrequencySpec::validate() const {
  if (!is_power_of_two(patch_size)) throw std::invalid_argument("FrequencySpec: patch size must be a power of two");
  if (!(epsilon > 0.0)) throw std::invalid_argument("FrequencySpec: epsilon must be > 0");
  if (!(amplitude_scale > 0.0)) throw std::invalid_argument("FrequencySpec: amplitude_scale must be > 0");
  const int hf = high_count();
  if (hf == 0 || hf == patch_size * patch_size)
    throw std::invalid_argument("FrequencySpec: high-frequency set must be a nonempty strict subset");
}

HfRatio hf_energy_ratio_checked(std::span<const double> patch, const FrequencySpec& spec) {
  spec.validate();
  const int n = spec.patch_size;
  const std::vector<Complex> f = fft2(patch, n);
  double num = 0.0, den = 0.0;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double term = std::log(std::abs(f[static_cast<std::size_t>(u) * n + v]) + spec.epsilon);
      den += term;
      if (spec.is_high(u, v)) num += term;
    }
  }
  if (std::abs(den) <= 1e-12) return {0.0, true};
  return {num / den, false};
}

double hf_energy_ratio(std::span<const double> patch, const FrequencySpec& spec) {
  return hf_energy_ratio_checked(patch, spec).value;
}

PatchGrid PatchGrid::for_frame(int width, int height, int patch_size) {
  if (patch_size <= 0 || width % patch_size != 0 || height % patch_size != 0)
    throw std::invalid_argument("patch size " + std::to_string(patch_size) + " does not tile a " +
                                std::to_string(width) + "x" + std::to_string(height) + " frame");
  PatchGrid g{patch_size, height / patch_size, width / patch_size};
  if (g.count() < 2) throw std::invalid_argument("patch grid needs at least two patches");
  return g;
}

EnergyMap energy_map(const Frame& frame, const FrequencySpec& spec) {
  spec.validate();
  EnergyMap out;
  out.grid = PatchGrid::for_frame(frame.width, frame.height, spec.patch_size);
  const std::vector<double> lum = luminance(frame);
  const int p = spec.patch_size;
  std::vector<double> patch(static_cast<std::size_t>(p) * p);
  out.ratios.reserve(out.grid.count());
  for (int r = 0; r < out.grid.rows; ++r) {
    for (int c = 0; c < out.grid.cols; ++c) {
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          patch[static_cast<std::size_t>(y) * p + x] =
              spec.amplitude_scale * lum[static_cast<std::size_t>(r * p + y) * frame.width + c * p + x];
      const HfRatio ratio = hf_energy_ratio_checked(patch, spec);
      out.ratios.push_back(ratio.value);
      out.degenerate_patches += ratio.degenerate;
    }
  }
  return out;
}

MaskGrid MaskGrid::all_keep(const PatchGrid& grid) {
  return MaskGrid{grid, std::vector<std::uint8_t>(grid.count(), 1)};
}

int MaskGrid::dropped() const {
  return static_cast<int>(std::count(keep.begin(), keep.end(), std::uint8_t{0}));
}

int drop_count(double alpha_mask, int count) {
  if (!(alpha_mask >= 0.0 && alpha_mask <= 1.0)) throw std::invalid_argument("alpha_mask must lie in [0,1]");
  return static_cast<int>(std::lround(alpha_mask * count));
}

MaskGrid build_mask(const EnergyMap& energy, double alpha_mask) {
  const int n = energy.grid.count();
  if (static_cast<int>(energy.ratios.size()) != n) throw std::invalid_argument("energy map does not match its grid");
  const int drop = drop_count(alpha_mask, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return energy.ratios[a] > energy.ratios[b]; });
  MaskGrid m = MaskGrid::all_keep(energy.grid);
  for (int i = 0; i < drop; ++i) m.keep[order[i]] = 0;
  return m;
}

MaskGrid random_mask(const PatchGrid& grid, double alpha_mask, std::uint64_t seed) {
  const int n = grid.count();
  const int drop = drop_count(alpha_mask, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  MaskGrid m = MaskGrid::all_keep(grid);
  for (int i = 0; i < drop; ++i) m.keep[order[i]] = 0;
  return m;
}

Frame apply_mask(const Frame& frame, const MaskGrid& mask) {
  const PatchGrid g = PatchGrid::for_frame(frame.width, frame.height, mask.grid.patch_size);
  if (!(g == mask.grid) || static_cast<int>(mask.keep.size()) != g.count())
    throw std::invalid_argument("apply_mask: mask grid does not tile this frame");
  Frame out = frame;
  const int p = g.patch_size;
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      if (mask.keep[static_cast<std::size_t>(r) * g.cols + c]) continue;
      for (int ch = 0; ch < frame.channels; ++ch)
        for (int y = r * p; y < (r + 1) * p; ++y)
          std::fill_n(&out.at(ch, y, c * p), p, 0.0f);
    }
  }
  return out;
}

}  // namespace streamadapt
