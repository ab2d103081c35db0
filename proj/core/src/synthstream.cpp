#include "streamadapt/synthstream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "streamadapt/random.hpp"

namespace streamadapt {
namespace {

constexpr double kRareShare = 0.04;

ClassStyle generated_style(int c) {
  // Golden-ratio hue walk for classes beyond the hand-made palette.
  const double h = std::fmod(0.13 + 0.618034 * c, 1.0) * 6.0;
  const double s = 0.55, v = 0.65;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  std::array<double, 3> rgb{};
  switch (sector) {
    case 0: rgb = {v, t, p}; break;
    case 1: rgb = {q, v, p}; break;
    case 2: rgb = {p, v, t}; break;
    case 3: rgb = {p, q, v}; break;
    case 4: rgb = {t, p, v}; break;
    default: rgb = {v, p, q}; break;
  }
  ClassStyle style;
  style.base = {static_cast<float>(rgb[0]), static_cast<float>(rgb[1]), static_cast<float>(rgb[2])};
  style.texture = static_cast<Texture>(c % 6);
  style.amplitude = style.texture == Texture::Flat ? 0.0f : 0.08f;
  style.period = static_cast<float>(3 + c % 4);
  style.orientation = static_cast<float>((c % 3) * std::numbers::pi / 3.0);
  return style;
}

const std::array<ClassStyle, 8>& street_palette() {
  static const std::array<ClassStyle, 8> palette = {{
      {{0.42f, 0.42f, 0.45f}, Texture::Speckle, 0.05f, 2.0f, 0.0f, false},     // road
      {{0.66f, 0.58f, 0.58f}, Texture::Checker, 0.06f, 6.0f, 0.0f, false},     // sidewalk
      {{0.56f, 0.36f, 0.26f}, Texture::Stripes, 0.10f, 4.0f, 1.5707964f, false},  // building
      {{0.60f, 0.40f, 0.30f}, Texture::Stripes, 0.10f, 4.0f, 1.5707964f, true},   // wall
      {{0.22f, 0.50f, 0.20f}, Texture::Speckle, 0.12f, 2.0f, 0.0f, false},     // vegetation
      {{0.50f, 0.68f, 0.90f}, Texture::Gradient, 0.08f, 4.0f, 0.0f, false},    // sky
      {{0.20f, 0.24f, 0.62f}, Texture::Flat, 0.0f, 4.0f, 0.0f, false},         // car
      {{0.88f, 0.76f, 0.12f}, Texture::Dots, 0.10f, 5.0f, 0.0f, false},        // sign (rare)
  }};
  return palette;
}

float pattern(const ClassStyle& s, int x, int y, int height, double phase, int ox, int oy,
              std::uint64_t seed) {
  switch (s.texture) {
    case Texture::Flat:
      return 0.0f;
    case Texture::Stripes: {
      const double u = x * std::cos(s.orientation) + y * std::sin(s.orientation);
      return static_cast<float>(std::sin(2.0 * std::numbers::pi * u / s.period + phase));
    }
    case Texture::Checker: {
      const int p = std::max(1, static_cast<int>(s.period));
      const int cx = (x + ox) / p, cy = (y + oy) / p;
      return ((cx + cy) & 1) ? 1.0f : -1.0f;
    }
    case Texture::Speckle:
      return static_cast<float>(2.0 * hash_unit(seed, static_cast<std::uint64_t>(x / 2),
                                                static_cast<std::uint64_t>(y / 2), 7) -
                                1.0);
    case Texture::Dots: {
      const double p = s.period;
      const double gx = std::fmod(x + ox, p) - p / 2, gy = std::fmod(y + oy, p) - p / 2;
      const double r = p / 3.2;
      return gx * gx + gy * gy < r * r ? 1.0f : -0.35f;
    }
    case Texture::Gradient:
      return static_cast<float>(2.0 * y / height - 1.0);
  }
  return 0.0f;
}

void box_blur3(const Frame& in, Frame& out) {
  out = in;
  const int w = in.width, h = in.height;
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float sum = 0.0f;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -1; dx <= 1; ++dx) sum += in.at(c, yy, std::clamp(x + dx, 0, w - 1));
        }
        out.at(c, y, x) = sum / 9.0f;
      }
    }
  }
}

// Bilinear value noise on a coarse lattice, in [0,1].
double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double gx = x / cell, gy = y / cell;
  const auto ix = static_cast<std::int64_t>(std::floor(gx));
  const auto iy = static_cast<std::int64_t>(std::floor(gy));
  const double fx = gx - ix, fy = gy - iy;
  auto at = [&](std::int64_t a, std::int64_t b) {
    return hash_unit(seed, static_cast<std::uint64_t>(a + 1024), static_cast<std::uint64_t>(b + 1024), 3);
  };
  const double top = at(ix, iy) * (1 - fx) + at(ix + 1, iy) * fx;
  const double bot = at(ix, iy + 1) * (1 - fx) + at(ix + 1, iy + 1) * fx;
  return top * (1 - fy) + bot * fy;
}

void check_intensity(double intensity) {
  if (!(intensity >= 0.0 && intensity <= 1.0))
    throw std::invalid_argument("weather intensity must lie in [0,1]");
}

void clamp_unit(Frame& f) {
  for (float& v : f.data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

SceneSpec SceneSpec::make_default(int class_count, std::uint64_t layout_seed) {
  if (class_count < 2) throw std::invalid_argument("SceneSpec needs at least two classes");
  SceneSpec spec;
  spec.class_count = class_count;
  spec.layout_seed = layout_seed;
  if (class_count == 8) {
    spec.class_shares = {0.22, 0.14, 0.16, 0.12, 0.14, 0.10, 0.08, 0.04};
  } else {
    std::vector<double> w(class_count - 1);
    for (int c = 0; c < class_count - 1; ++c) w[c] = 1.0 / (c + 3);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v *= (1.0 - kRareShare) / total;
    spec.class_shares = w;
    spec.class_shares.push_back(kRareShare);
  }
  for (int c = 0; c < class_count; ++c)
    spec.palette.push_back(c < 8 ? street_palette()[c] : generated_style(c));
  return spec;
}

int SceneSpec::cell_count() const {
  const auto n = static_cast<int>(std::lround(object_density * width * height / 512.0));
  return std::max(n, class_count);
}

void SceneSpec::validate() const {
  if (class_count < 2) throw std::invalid_argument("SceneSpec: class_count must be >= 2");
  if (class_count > 255) throw std::invalid_argument("SceneSpec: class_count must fit in u8");
  if (width <= 0 || height <= 0) throw std::invalid_argument("SceneSpec: bad image size");
  if (!(object_density > 0.0)) throw std::invalid_argument("SceneSpec: object_density must be > 0");
  if (static_cast<int>(class_shares.size()) != class_count ||
      static_cast<int>(palette.size()) != class_count)
    throw std::invalid_argument("SceneSpec: shares/palette size must equal class_count");
  double total = 0.0;
  bool rare = false;
  for (double s : class_shares) {
    if (!(s >= 0.0)) throw std::invalid_argument("SceneSpec: negative class share");
    total += s;
    rare = rare || (s > 0.0 && s < 0.05);
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("SceneSpec: shares must sum to 1");
  if (!rare) throw std::invalid_argument("SceneSpec: needs a rare class (share < 5%)");
}

std::string to_string(Condition c) {
  switch (c) {
    case Condition::Clear: return "clear";
    case Condition::Rain: return "rain";
    case Condition::Fog: return "fog";
  }
  return "clear";
}

Condition condition_from_string(const std::string& s) {
  if (s == "clear") return Condition::Clear;
  if (s == "rain") return Condition::Rain;
  if (s == "fog") return Condition::Fog;
  throw std::invalid_argument("unknown condition: " + s);
}

DomainProfile DomainProfile::pyramidal(Condition weather, int levels, int frames_per_segment,
                                       std::uint64_t seed) {
  if (levels < 1 || frames_per_segment < 1)
    throw std::invalid_argument("pyramidal profile needs levels >= 1 and frames >= 1");
  DomainProfile p;
  p.seed = seed;
  p.segments.push_back({Condition::Clear, 0.0, frames_per_segment});
  for (int i = 1; i <= levels; ++i)
    p.segments.push_back({weather, static_cast<double>(i) / levels, frames_per_segment});
  for (int i = levels - 1; i >= 1; --i)
    p.segments.push_back({weather, static_cast<double>(i) / levels, frames_per_segment});
  p.segments.push_back({Condition::Clear, 0.0, frames_per_segment});
  return p;
}

int DomainProfile::total_frames() const {
  int n = 0;
  for (const auto& s : segments) n += s.frame_count;
  return n;
}

int DomainProfile::segment_index(int cursor) const {
  if (cursor < 0) throw std::out_of_range("stream cursor is negative");
  int start = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (cursor < start + segments[i].frame_count) return static_cast<int>(i);
    start += segments[i].frame_count;
  }
  throw std::out_of_range("stream cursor past the end of the profile");
}

void DomainProfile::validate() const {
  if (segments.empty()) throw std::invalid_argument("DomainProfile: no segments");
  for (const auto& s : segments) {
    if (s.frame_count < 1) throw std::invalid_argument("DomainProfile: segment with no frames");
    check_intensity(s.intensity);
  }
}

Scene gen_scene(const SceneSpec& spec, std::uint64_t frame_seed) {
  spec.validate();
  const int w = spec.width, h = spec.height, k = spec.class_count;
  const std::uint64_t seed = derive_seed({spec.layout_seed, frame_seed});
  Rng rng(seed);

  const int n = spec.cell_count();
  std::vector<double> sx(n), sy(n);
  for (int i = 0; i < n; ++i) {
    sx[i] = rng.uniform(0.0, w);
    sy[i] = rng.uniform(0.0, h);
  }

  std::vector<int> owner(static_cast<std::size_t>(w) * h);
  std::vector<std::int64_t> area(n, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double best_d = 1e300;
      for (int i = 0; i < n; ++i) {
        const double dx = x + 0.5 - sx[i], dy = y + 0.5 - sy[i];
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      owner[static_cast<std::size_t>(y) * w + x] = best;
      ++area[best];
    }
  }

  auto shuffled = [&rng](int count) {
    std::vector<int> v(count);
    std::iota(v.begin(), v.end(), 0);
    for (int i = count - 1; i > 0; --i)
      std::swap(v[i], v[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    return v;
  };
  const std::vector<int> cell_order = shuffled(n);
  const std::vector<int> class_order = shuffled(k);

  // Quota assignment: walk cells in random order along the cumulative area
  // axis; a cell takes the class whose share interval holds its midpoint.
  std::vector<double> upper(k);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    acc += spec.class_shares[class_order[i]];
    upper[i] = acc;
  }
  const double total_area = static_cast<double>(w) * h;
  std::vector<int> cell_class(n, class_order[k - 1]);
  double cum = 0.0;
  for (int cell : cell_order) {
    const double mid = (cum + area[cell] / 2.0) / total_area;
    for (int i = 0; i < k; ++i) {
      if (mid < upper[i] && spec.class_shares[class_order[i]] > 0.0) {
        cell_class[cell] = class_order[i];
        break;
      }
    }
    cum += area[cell];
  }

  // Coverage: every class with a positive share takes the smallest cell of a
  // class that owns more than one.
  std::vector<int> cells_of(k, 0);
  for (int c : cell_class) ++cells_of[c];
  for (int c = 0; c < k; ++c) {
    if (cells_of[c] > 0 || spec.class_shares[c] <= 0.0) continue;
    int pick = -1;
    for (int i = 0; i < n; ++i) {
      if (cells_of[cell_class[i]] < 2 || area[i] == 0) continue;
      if (pick < 0 || area[i] < area[pick]) pick = i;
    }
    if (pick < 0) break;
    --cells_of[cell_class[pick]];
    cell_class[pick] = c;
    ++cells_of[c];
  }

  std::vector<float> jitter(n);
  for (int i = 0; i < n; ++i) jitter[i] = static_cast<float>(rng.uniform(-0.04, 0.04));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const int ox = static_cast<int>(rng.below(16)), oy = static_cast<int>(rng.below(16));

  Scene scene{Frame(w, h, 3), LabelMap(w, h)};
  const float noise_scale = spec.pixel_noise * 1.7320508f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int cell = owner[static_cast<std::size_t>(y) * w + x];
      const int cls = cell_class[cell];
      const ClassStyle& style = spec.palette[cls];
      scene.labels.at(y, x) = static_cast<ClassId>(cls);

      bool rim = false;
      if (style.outlined) {
        for (int dy = -2; dy <= 2 && !rim; ++dy) {
          for (int dx = -2; dx <= 2; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            if (owner[static_cast<std::size_t>(yy) * w + xx] != cell) {
              rim = true;
              break;
            }
          }
        }
      }
      const float tex = style.amplitude * pattern(style, x, y, h, phase, ox, oy, seed);
      for (int c = 0; c < 3; ++c) {
        const float noise =
            noise_scale * static_cast<float>(2.0 * hash_unit(seed, static_cast<std::uint64_t>(x),
                                                             static_cast<std::uint64_t>(y),
                                                             static_cast<std::uint64_t>(c) + 11) -
                                             1.0);
        float v = style.base[c] + tex + jitter[cell];
        if (rim) v *= 0.55f;
        scene.frame.at(c, y, x) = std::clamp(v + noise, 0.0f, 1.0f);
      }
    }
  }
  return scene;
}

Frame apply_rain(const Frame& frame, double intensity, std::uint64_t seed) {
  check_intensity(intensity);
  if (intensity == 0.0) return frame;
  const int w = frame.width, h = frame.height;
  const auto i = static_cast<float>(intensity);

  Frame blurred;
  box_blur3(frame, blurred);
  const float blur = 0.6f * i;
  Frame out = frame;
  for (std::size_t k = 0; k < out.data.size(); ++k)
    out.data[k] = (1.0f - blur) * frame.data[k] + blur * blurred.data[k];

  // The candidate list depends only on the seed; intensity selects a prefix,
  // so a streak present at one intensity is present at every higher one.
  Rng rng(derive_seed({seed, 0x7261696eULL}));
  const double angle = (60.0 + rng.uniform(-8.0, 8.0)) * std::numbers::pi / 180.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const int candidates = static_cast<int>(std::lround(0.025 * w * h));
  const int used = static_cast<int>(std::lround(intensity * candidates));
  const std::uint64_t field_seed = derive_seed({seed, 0x6669656cULL});
  for (int s = 0; s < candidates; ++s) {
    const double x0 = rng.uniform(0.0, w), y0 = rng.uniform(0.0, h);
    const double len = rng.uniform(5.0, 12.0);
    const auto bright = static_cast<float>(rng.uniform(0.3, 0.65));
    const double accept = rng.uniform();
    if (s >= used) continue;
    if (accept > 0.25 + 0.75 * value_noise(field_seed, x0, y0, 40.0)) continue;
    const int steps = static_cast<int>(std::ceil(len));
    for (int t = 0; t <= steps; ++t) {
      const int x = static_cast<int>(std::lround(x0 + t * ca));
      const int y = static_cast<int>(std::lround(y0 + t * sa));
      if (x < 0 || x >= w || y < 0 || y >= h) continue;
      for (int c = 0; c < out.channels; ++c) out.at(c, y, x) += bright;
    }
  }
  clamp_unit(out);
  return out;
}

Frame apply_fog(const Frame& frame, double intensity, std::uint64_t seed) {
  check_intensity(intensity);
  if (intensity == 0.0) return frame;
  const int w = frame.width, h = frame.height;
  const std::uint64_t field_seed = derive_seed({seed, 0x666f67ULL});
  Frame foggy = frame;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto density = static_cast<float>(
          0.75 * intensity * (0.9 + 0.1 * value_noise(field_seed, x, y, 48.0)));
      for (int c = 0; c < frame.channels; ++c) {
        float& v = foggy.at(c, y, x);
        v = (1.0f - density) * v + density;
      }
    }
  }
  Frame blurred;
  box_blur3(foggy, blurred);
  const auto blur = static_cast<float>(0.5 * intensity);
  for (std::size_t k = 0; k < foggy.data.size(); ++k)
    foggy.data[k] = (1.0f - blur) * foggy.data[k] + blur * blurred.data[k];
  clamp_unit(foggy);
  return foggy;
}

Frame apply_condition(const Frame& frame, Condition condition, double intensity,
                      std::uint64_t seed) {
  switch (condition) {
    case Condition::Clear: return frame;
    case Condition::Rain: return apply_rain(frame, intensity, seed);
    case Condition::Fog: return apply_fog(frame, intensity, seed);
  }
  return frame;
}

StreamSample next(const DomainProfile& profile, const SceneSpec& spec, int cursor) {
  const int seg = profile.segment_index(cursor);
  const Segment& s = profile.segments[seg];
  const auto c = static_cast<std::uint64_t>(cursor);
  Scene scene = gen_scene(spec, derive_seed({profile.seed, 0x5354ULL, c}));
  StreamSample out;
  out.frame = apply_condition(scene.frame, s.condition, s.intensity,
                              derive_seed({profile.seed, 0x5745ULL, c}));
  out.labels = std::move(scene.labels);
  out.tag = {seg, s.condition, s.intensity};
  return out;
}

StreamSample held_out_sample(const DomainProfile& profile, const SceneSpec& spec, int segment,
                             int index, std::uint64_t eval_seed) {
  if (segment < 0 || segment >= static_cast<int>(profile.segments.size()))
    throw std::out_of_range("segment index out of range");
  const Segment& s = profile.segments[segment];
  // Keyed by domain, not segment position, so forward and backward visits of
  // the same domain are scored on the same frames.
  const auto level = static_cast<std::uint64_t>(std::lround(s.intensity * 1000.0));
  const auto cond = static_cast<std::uint64_t>(s.condition);
  const auto idx = static_cast<std::uint64_t>(index);
  Scene scene = gen_scene(spec, derive_seed({eval_seed, 0x4556ULL, cond, level, idx}));
  StreamSample out;
  out.frame = apply_condition(scene.frame, s.condition, s.intensity,
                              derive_seed({eval_seed, 0x4557ULL, cond, level, idx}));
  out.labels = std::move(scene.labels);
  out.tag = {segment, s.condition, s.intensity};
  return out;
}

}  // namespace streamadapt
