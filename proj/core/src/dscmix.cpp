#include "streamadapt/dscmix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "binary_io.hpp"

namespace streamadapt {
namespace {

struct Component {
  int frame = 0;
  std::vector<int> pixels;  // flat indices
};

// 4-connected components of each class with at least `min_size` pixels.
void collect_components(const LabelMap& labels, int frame_index, int min_size,
                        std::vector<std::vector<Component>>& by_class) {
  const int w = labels.width, h = labels.height;
  std::vector<std::uint8_t> seen(labels.ids.size(), 0);
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    if (seen[start]) continue;
    const ClassId cls = labels.ids[start];
    Component comp{frame_index, {}};
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      comp.pixels.push_back(p);
      const int x = p % w, y = p / w;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= w || n[1] < 0 || n[1] >= h) continue;
        const int q = n[1] * w + n[0];
        if (seen[q] || labels.ids[q] != cls) continue;
        seen[q] = 1;
        stack.push_back(q);
      }
    }
    if (static_cast<int>(comp.pixels.size()) >= min_size) {
      std::sort(comp.pixels.begin(), comp.pixels.end());
      by_class[cls].push_back(std::move(comp));
    }
  }
}

ClassCutout make_cutout(const Frame& frame, const Component& comp, ClassId cls) {
  const int w = frame.width;
  int x0 = w, y0 = frame.height, x1 = -1, y1 = -1;
  for (int p : comp.pixels) {
    x0 = std::min(x0, p % w);
    x1 = std::max(x1, p % w);
    y0 = std::min(y0, p / w);
    y1 = std::max(y1, p / w);
  }
  ClassCutout c;
  c.class_id = cls;
  c.x = x0;
  c.y = y0;
  c.width = x1 - x0 + 1;
  c.height = y1 - y0 + 1;
  c.source_frame = comp.frame;
  const std::size_t box = static_cast<std::size_t>(c.width) * c.height;
  c.mask.assign(box, 0);
  c.rgb.assign(box * 3, 0.0f);
  for (int p : comp.pixels)
    c.mask[static_cast<std::size_t>(p / w - y0) * c.width + (p % w - x0)] = 1;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x)
        c.rgb[ch * box + static_cast<std::size_t>(y) * c.width + x] =
            frame.at(std::min(ch, frame.channels - 1), y0 + y, x0 + x);
  return c;
}

}  // namespace

ClassStats class_frequencies(std::span<const LabelMap> labels, int class_count) {
  if (labels.empty()) throw std::invalid_argument("class_frequencies: no source label maps");
  if (class_count < 1) throw std::invalid_argument("class_frequencies: class_count must be >= 1");
  ClassStats s;
  s.pixel_counts.assign(class_count, 0);
  s.image_count = labels.size();
  s.image_area = static_cast<std::size_t>(labels[0].width) * labels[0].height;
  for (const LabelMap& l : labels) {
    if (l.width != labels[0].width || l.height != labels[0].height)
      throw std::invalid_argument("class_frequencies: label maps differ in shape");
    validate(l, class_count);
    for (ClassId id : l.ids) ++s.pixel_counts[id];
  }
  const double total = static_cast<double>(s.image_count) * static_cast<double>(s.image_area);
  s.frequencies.resize(class_count);
  for (int c = 0; c < class_count; ++c) s.frequencies[c] = static_cast<double>(s.pixel_counts[c]) / total;
  return s;
}

std::vector<int> SamplingDist::rarity_order() const {
  std::vector<int> order(probabilities.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [this](int a, int b) { return probabilities[a] > probabilities[b]; });
  return order;
}

SamplingDist sampling_probs(const ClassStats& stats, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sampling_probs: temperature must be > 0");
  if (stats.frequencies.empty()) throw std::invalid_argument("sampling_probs: no classes");
  SamplingDist d;
  d.temperature = temperature;
  const std::size_t k = stats.frequencies.size();
  std::vector<double> logits(k);
  for (std::size_t c = 0; c < k; ++c) logits[c] = (1.0 - stats.frequencies[c]) / temperature;
  const double mx = *std::max_element(logits.begin(), logits.end());
  d.probabilities.resize(k);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) sum += d.probabilities[c] = std::exp(logits[c] - mx);
  for (double& p : d.probabilities) p /= sum;
  return d;
}

ClassSampler::ClassSampler(std::span<const double> probabilities) {
  double acc = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw std::invalid_argument("ClassSampler: negative probability");
    acc += p;
    cdf_.push_back(acc);
  }
  if (!(acc > 0.0)) throw std::invalid_argument("ClassSampler: probabilities sum to zero");
  for (double& c : cdf_) c /= acc;
}

int ClassSampler::draw(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) {
    // u fell in the rounding gap above the last bin edge; return the last
    // class with positive mass.
    for (std::size_t c = cdf_.size(); c-- > 0;)
      if (c == 0 || cdf_[c] > cdf_[c - 1]) return static_cast<int>(c);
  }
  return static_cast<int>(it - cdf_.begin());
}

int ClassCutout::mask_pixels() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void ReplayBuffer::push(ClassCutout cutout) {
  auto& store = stores.at(cutout.class_id);
  if (static_cast<int>(store.size()) >= capacity) store.pop_front();
  store.push_back(std::move(cutout));
}

int ReplayBuffer::available_classes() const {
  return static_cast<int>(std::count_if(stores.begin(), stores.end(), [](const auto& s) { return !s.empty(); }));
}

std::size_t ReplayBuffer::total_cutouts() const {
  std::size_t n = 0;
  for (const auto& s : stores) n += s.size();
  return n;
}

std::size_t ReplayBuffer::stored_pixels() const {
  std::size_t n = 0;
  for (const auto& s : stores)
    for (const auto& c : s) n += static_cast<std::size_t>(c.width) * c.height;
  return n;
}

ReplayBuffer build_buffer(std::span<const Frame> frames, std::span<const LabelMap> labels,
                          const SamplingDist& dist, const BufferConfig& cfg, std::uint64_t seed) {
  if (frames.empty() || frames.size() != labels.size())
    throw std::invalid_argument("build_buffer: need matching, nonempty source frames and labels");
  if (cfg.capacity < 1) throw std::invalid_argument("build_buffer: capacity must be >= 1");
  const int k = static_cast<int>(dist.probabilities.size());

  std::vector<std::vector<Component>> comps(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (frames[i].width != labels[i].width || frames[i].height != labels[i].height)
      throw std::invalid_argument("build_buffer: frame/label shape mismatch");
    validate(labels[i], k);
    collect_components(labels[i], static_cast<int>(i), cfg.min_component, comps);
  }

  ReplayBuffer buf;
  buf.dist = dist;
  buf.capacity = cfg.capacity;
  buf.stores.resize(k);
  std::vector<double> eligible(k, 0.0);
  int eligible_classes = 0;
  for (int c = 0; c < k; ++c) {
    if (comps[c].empty()) {
      buf.warnings.push_back("class " + std::to_string(c) + " has no component of >= " +
                             std::to_string(cfg.min_component) + " pixels in the source data");
    } else {
      eligible[c] = dist.probabilities[c];
      ++eligible_classes;
    }
  }
  if (eligible_classes == 0) return buf;
  if (std::accumulate(eligible.begin(), eligible.end(), 0.0) <= 0.0) {
    buf.warnings.push_back("every eligible class has zero sampling probability");
    return buf;
  }

  const ClassSampler sampler(eligible);
  Rng rng(seed);
  auto all_full = [&] {
    for (int c = 0; c < k; ++c)
      if (!comps[c].empty() && static_cast<int>(buf.stores[c].size()) < cfg.capacity) return false;
    return true;
  };
  while (buf.draws < cfg.draw_budget && !all_full()) {
    ++buf.draws;
    const int c = sampler.draw(rng);
    const Component& comp = comps[c][rng.below(comps[c].size())];
    buf.push(make_cutout(frames[comp.frame], comp, static_cast<ClassId>(c)));
  }
  return buf;
}

MixResult identity_mix(const Frame& target, const LabelMap& pseudo) {
  if (target.width != pseudo.width || target.height != pseudo.height)
    throw std::invalid_argument("mix: pseudo-labels do not match the target frame");
  return MixResult{target, pseudo, std::vector<std::uint8_t>(pseudo.ids.size(), 0), {}};
}

void paste_cutout(MixResult& m, const ClassCutout& c, int x, int y) {
  const int w = m.frame.width, h = m.frame.height;
  if (x < 0 || y < 0 || x + c.width > w || y + c.height > h)
    throw std::invalid_argument("paste_cutout: cutout does not fit at the requested position");
  const std::size_t box = static_cast<std::size_t>(c.width) * c.height;
  for (int yy = 0; yy < c.height; ++yy) {
    for (int xx = 0; xx < c.width; ++xx) {
      const std::size_t k = static_cast<std::size_t>(yy) * c.width + xx;
      if (!c.mask[k]) continue;
      const std::size_t p = static_cast<std::size_t>(y + yy) * w + (x + xx);
      for (int ch = 0; ch < m.frame.channels; ++ch)
        m.frame.data[ch * m.frame.plane_size() + p] = c.rgb[std::min(ch, 2) * box + k];
      m.labels.ids[p] = c.class_id;
      m.mix_mask[p] = 1;
    }
  }
  m.pasted.push_back(c.class_id);
}

MixResult mix(const Frame& target, const LabelMap& pseudo, const ReplayBuffer& buffer,
              double alpha_mix, std::uint64_t seed, const MixOptions& opts) {
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) throw std::invalid_argument("mix: alpha_mix must lie in [0,1]");
  if (buffer.total_cutouts() == 0) throw std::invalid_argument("mix: replay buffer is empty");
  MixResult out = identity_mix(target, pseudo);
  const int n = static_cast<int>(std::lround(alpha_mix * buffer.available_classes()));
  if (n == 0) return out;

  std::vector<int> chosen;
  for (int c : buffer.dist.rarity_order()) {
    if (static_cast<int>(chosen.size()) == n) break;
    if (!buffer.stores[c].empty()) chosen.push_back(c);
  }

  Rng rng(seed);
  for (int c : chosen) {
    const auto& store = buffer.stores[c];
    const ClassCutout& cut = store[rng.below(store.size())];
    if (cut.width > target.width || cut.height > target.height) continue;
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(target.width - cut.width) + 1));
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(target.height - cut.height) + 1));
    paste_cutout(out, cut, x, y);
  }

  if (opts.literal_blend) {
    const auto a = static_cast<float>(alpha_mix);
    const std::size_t hw = out.frame.plane_size();
    for (int ch = 0; ch < out.frame.channels; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) {
        float& v = out.frame.data[ch * hw + p];
        v = out.mix_mask[p] ? a * v : (1.0f - a) * target.data[ch * hw + p];
      }
    }
  }
  return out;
}

void write_buffer(std::ostream& os, const ReplayBuffer& b) {
  using namespace detail;
  put_magic(os, "RDSB");
  put<std::uint16_t>(os, kBufferFileVersion);
  put<std::uint16_t>(os, checked_narrow<std::uint16_t>(b.stores.size(), "class count"));
  put<double>(os, b.dist.temperature);
  if (b.dist.probabilities.size() != b.stores.size())
    throw std::invalid_argument("write_buffer: distribution and stores disagree on class count");
  for (double p : b.dist.probabilities) put<double>(os, p);
  put<std::uint32_t>(os, checked_narrow<std::uint32_t>(static_cast<std::size_t>(b.capacity), "capacity"));
  put<std::uint32_t>(os, checked_narrow<std::uint32_t>(b.total_cutouts(), "cutout count"));
  for (const auto& store : b.stores) {
    for (const auto& c : store) {
      put<std::uint16_t>(os, c.class_id);
      for (int v : {c.x, c.y, c.width, c.height}) put<std::uint16_t>(os, checked_narrow<std::uint16_t>(v, "bbox"));
      std::vector<std::uint8_t> bits((c.mask.size() + 7) / 8, 0);
      for (std::size_t i = 0; i < c.mask.size(); ++i)
        if (c.mask[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
      put_bytes(os, bits.data(), bits.size());
      put_floats(os, c.rgb);
    }
  }
}

ReplayBuffer read_buffer(std::istream& is) {
  using namespace detail;
  expect_magic(is, "RDSB", "buffer file");
  if (get<std::uint16_t>(is) != kBufferFileVersion) throw std::runtime_error("buffer file: unsupported version");
  const int k = get<std::uint16_t>(is);
  ReplayBuffer b;
  b.dist.temperature = get<double>(is);
  for (int c = 0; c < k; ++c) b.dist.probabilities.push_back(get<double>(is));
  b.capacity = static_cast<int>(get<std::uint32_t>(is));
  b.stores.resize(k);
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    ClassCutout c;
    const auto id = get<std::uint16_t>(is);
    if (id >= k) throw std::runtime_error("buffer file: cutout class id out of range");
    c.class_id = static_cast<ClassId>(id);
    c.x = get<std::uint16_t>(is);
    c.y = get<std::uint16_t>(is);
    c.width = get<std::uint16_t>(is);
    c.height = get<std::uint16_t>(is);
    const std::size_t box = static_cast<std::size_t>(c.width) * c.height;
    std::vector<std::uint8_t> bits((box + 7) / 8);
    get_bytes(is, bits.data(), bits.size());
    c.mask.resize(box);
    for (std::size_t j = 0; j < box; ++j) c.mask[j] = (bits[j / 8] >> (j % 8)) & 1u;
    c.rgb = get_floats(is, box * 3);
    b.stores[id].push_back(std::move(c));
  }
  return b;
}

void save_buffer(const ReplayBuffer& buffer, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_buffer(os, buffer);
}

ReplayBuffer load_buffer(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_buffer(is);
}

}  // namespace streamadapt
