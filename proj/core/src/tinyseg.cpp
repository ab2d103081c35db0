#include "streamadapt/tinyseg.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "streamadapt/random.hpp"

namespace streamadapt {
namespace {

std::vector<std::vector<std::size_t>> param_dims(const ModelShape& s) {
  std::vector<std::vector<std::size_t>> dims;
  int cin = s.in_channels;
  for (int b = 0; b < 4; ++b) {
    const auto cout = static_cast<std::size_t>(s.widths[b]);
    dims.push_back({cout, static_cast<std::size_t>(cin), 3, 3});
    dims.push_back({cout});
    cin = s.widths[b];
  }
  const auto k = static_cast<std::size_t>(s.class_count);
  dims.push_back({k, static_cast<std::size_t>(s.widths[3])});
  dims.push_back({k});
  dims.push_back({k, static_cast<std::size_t>(s.widths[s.light_block - 1])});
  dims.push_back({k});
  return dims;
}

// out[co] = relu(b[co] + sum_ci w[co,ci] (*) in[ci]) with dilation `dil` and
// zero padding. Rows of the output are accumulated in place so each output
// row stays hot while the input rows stream past.
template <class T>
void conv3x3_relu(const T* in, int cin, const T* w, const T* b, int cout, int h, int wd, int dil,
                  T* out) {
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  for (int co = 0; co < cout; ++co) {
    T* o = out + co * hw;
    for (int y = 0; y < h; ++y) {
      T* orow = o + static_cast<std::size_t>(y) * wd;
      std::fill(orow, orow + wd, b[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const T* ip = in + ci * hw;
        const T* wk = w + (static_cast<std::size_t>(co) * cin + ci) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int yy = y + (ky - 1) * dil;
          if (yy < 0 || yy >= h) continue;
          const T* irow = ip + static_cast<std::size_t>(yy) * wd;
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = (kx - 1) * dil;
            const T wv = wk[ky * 3 + kx];
            const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
            const T* src = irow + dx;
            for (int x = x0; x < x1; ++x) orow[x] += wv * src[x];
          }
        }
      }
      for (int x = 0; x < wd; ++x) orow[x] = orow[x] > T(0) ? orow[x] : T(0);
    }
  }
}

// din[ci] = sum_co w[co,ci] correlated backwards with dout[co].
template <class T>
void conv3x3_backward_input(const T* dout, int cout, const T* w, int cin, int h, int wd, int dil,
                            T* din) {
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  for (int ci = 0; ci < cin; ++ci) {
    for (int yy = 0; yy < h; ++yy) {
      T* drow = din + ci * hw + static_cast<std::size_t>(yy) * wd;
      std::fill(drow, drow + wd, T(0));
      for (int co = 0; co < cout; ++co) {
        const T* wk = w + (static_cast<std::size_t>(co) * cin + ci) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int y = yy - (ky - 1) * dil;
          if (y < 0 || y >= h) continue;
          const T* grow = dout + co * hw + static_cast<std::size_t>(y) * wd;
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = (kx - 1) * dil;
            const T wv = wk[ky * 3 + kx];
            const int x0 = std::max(0, dx), x1 = std::min(wd, wd + dx);
            const T* src = grow - dx;
            for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * src[xx];
          }
        }
      }
    }
  }
}

template <class T>
void conv3x3_backward_weights(const T* dout, int cout, const T* in, int cin, int h, int wd,
                              int dil, double* gw, double* gb) {
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  std::vector<T> acc(static_cast<std::size_t>(9) * wd);
  for (int co = 0; co < cout; ++co) {
    const T* g = dout + co * hw;
    double bsum = 0.0;
    for (std::size_t i = 0; i < hw; ++i) bsum += g[i];
    gb[co] += bsum;
    for (int ci = 0; ci < cin; ++ci) {
      const T* ip = in + ci * hw;
      std::fill(acc.begin(), acc.end(), T(0));
      for (int y = 0; y < h; ++y) {
        const T* grow = g + static_cast<std::size_t>(y) * wd;
        for (int ky = 0; ky < 3; ++ky) {
          const int yy = y + (ky - 1) * dil;
          if (yy < 0 || yy >= h) continue;
          const T* irow = ip + static_cast<std::size_t>(yy) * wd;
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = (kx - 1) * dil;
            const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
            T* a = acc.data() + static_cast<std::size_t>(ky * 3 + kx) * wd;
            const T* src = irow + dx;
            for (int x = x0; x < x1; ++x) a[x] += grow[x] * src[x];
          }
        }
      }
      double* out = gw + (static_cast<std::size_t>(co) * cin + ci) * 9;
      for (int k = 0; k < 9; ++k) {
        const T* a = acc.data() + static_cast<std::size_t>(k) * wd;
        double s = 0.0;
        for (int x = 0; x < wd; ++x) s += a[x];
        out[k] += s;
      }
    }
  }
}

// logits[k] = b[k] + sum_c w[k,c] feat[c]
template <class T>
void project(const T* feat, int cin, const T* w, const T* b, int k, std::size_t hw, T* out) {
  for (int o = 0; o < k; ++o) {
    T* row = out + o * hw;
    std::fill(row, row + hw, b[o]);
    for (int c = 0; c < cin; ++c) {
      const T wv = w[static_cast<std::size_t>(o) * cin + c];
      const T* f = feat + c * hw;
      for (std::size_t i = 0; i < hw; ++i) row[i] += wv * f[i];
    }
  }
}

template <class T>
void project_backward(const T* feat, int cin, const T* w, int k, std::size_t hw, const T* dl,
                      T* dfeat, double* gw, double* gb) {
  for (int o = 0; o < k; ++o) {
    const T* g = dl + o * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += g[i];
    gb[o] += s;
    for (int c = 0; c < cin; ++c) {
      const T* f = feat + c * hw;
      double d = 0.0;
      for (std::size_t i = 0; i < hw; ++i) d += static_cast<double>(g[i]) * f[i];
      gw[static_cast<std::size_t>(o) * cin + c] += d;
      const T wv = w[static_cast<std::size_t>(o) * cin + c];
      T* df = dfeat + c * hw;
      for (std::size_t i = 0; i < hw; ++i) df[i] += wv * g[i];
    }
  }
}

void check_probs(const Tensor& probs) {
  if (probs.rank() != 3) throw std::invalid_argument("probabilities must be K x H x W");
  probs.check_invariant();
}

}  // namespace

void ModelShape::validate() const {
  if (in_channels <= 0) throw std::invalid_argument("ModelShape: in_channels must be > 0");
  for (int b = 0; b < 4; ++b) {
    if (widths[b] <= 0) throw std::invalid_argument("ModelShape: widths must be > 0");
    if (dilations[b] <= 0) throw std::invalid_argument("ModelShape: dilations must be > 0");
  }
  if (class_count < 2 || class_count > 255)
    throw std::invalid_argument("ModelShape: class_count must lie in [2, 255]");
  if (light_block < 1 || light_block > 4)
    throw std::invalid_argument("ModelShape: light_block must lie in [1, 4]");
}

std::uint64_t next_param_version() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

const std::array<std::string, kParamCount>& param_names() {
  static const std::array<std::string, kParamCount> names = {
      "m1.weight", "m1.bias", "m2.weight", "m2.bias", "m3.weight",  "m3.bias",
      "m4.weight", "m4.bias", "head.weight", "head.bias", "light.weight", "light.bias"};
  return names;
}

template <class T>
BasicModelParams<T> BasicModelParams<T>::zeros(const ModelShape& shape) {
  shape.validate();
  BasicModelParams<T> p;
  p.shape = shape;
  for (auto& d : param_dims(shape)) p.tensors.emplace_back(d);
  p.touch();
  return p;
}

template <class T>
bool BasicModelParams<T>::all_finite() const {
  for (const auto& t : tensors)
    for (T v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

template <class T>
bool BasicModelParams<T>::same_shapes(const BasicModelParams& o) const {
  if (tensors.size() != o.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i)
    if (!tensors[i].same_shape(o.tensors[i])) return false;
  return true;
}

template <class T>
std::size_t BasicModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template struct BasicModelParams<float>;
template struct BasicModelParams<double>;

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(shape);
  Rng rng(derive_seed({seed, 0x696e6974ULL}));
  auto normal = [&rng]() {
    const double u1 = std::max(rng.uniform(), 1e-300), u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  int cin = shape.in_channels;
  for (int b = 0; b < 4; ++b) {
    const double std_dev = std::sqrt(2.0 / (cin * 9.0));
    for (float& v : p.conv_weight(b).data) v = static_cast<float>(std_dev * normal());
    for (float& v : p.conv_bias(b).data) v = 0.01f;
    cin = shape.widths[b];
  }
  for (float& v : p.tensors[kHeadWeight].data)
    v = static_cast<float>(std::sqrt(1.0 / shape.widths[3]) * normal());
  for (float& v : p.tensors[kLightWeight].data)
    v = static_cast<float>(std::sqrt(1.0 / shape.widths[shape.light_block - 1]) * normal());
  p.touch();
  return p;
}

Gradients Gradients::zeros_like(const ModelShape& shape) {
  Gradients g;
  for (auto& d : param_dims(shape)) g.tensors.emplace_back(d);
  return g;
}

Gradients& Gradients::operator+=(const Gradients& o) {
  if (tensors.size() != o.tensors.size()) throw std::invalid_argument("gradient size mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].same_shape(o.tensors[i]))
      throw std::invalid_argument("gradient shape mismatch");
    for (std::size_t j = 0; j < tensors[i].data.size(); ++j) tensors[i].data[j] += o.tensors[i].data[j];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& t : tensors)
    for (double& v : t.data) v *= s;
  return *this;
}

bool Gradients::all_finite() const {
  for (const auto& t : tensors)
    for (double v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

template <class T>
ForwardCache<T> forward(const BasicModelParams<T>& params, const Frame& frame, Heads heads) {
  const ModelShape& s = params.shape;
  if (frame.channels != s.in_channels)
    throw std::invalid_argument("forward: frame has " + std::to_string(frame.channels) +
                                " channels, model expects " + std::to_string(s.in_channels));
  if (frame.data.size() != frame.plane_size() * frame.channels)
    throw std::invalid_argument("forward: frame buffer does not match its shape");
  const int h = frame.height, w = frame.width;
  const std::size_t hw = frame.plane_size();

  ForwardCache<T> cache;
  cache.params_version = params.version;
  cache.width = w;
  cache.height = h;
  cache.input = BasicTensor<T>({static_cast<std::size_t>(frame.channels), static_cast<std::size_t>(h),
                                static_cast<std::size_t>(w)});
  std::copy(frame.data.begin(), frame.data.end(), cache.input.data.begin());

  const bool need_main = heads != Heads::Light;
  const int blocks = need_main ? 4 : s.light_block;
  const T* in = cache.input.data.data();
  int cin = s.in_channels;
  for (int b = 0; b < blocks; ++b) {
    auto& out = cache.features[b];
    out = BasicTensor<T>({static_cast<std::size_t>(s.widths[b]), static_cast<std::size_t>(h),
                          static_cast<std::size_t>(w)});
    conv3x3_relu(in, cin, params.conv_weight(b).data.data(), params.conv_bias(b).data.data(),
                 s.widths[b], h, w, s.dilations[b], out.data.data());
    in = out.data.data();
    cin = s.widths[b];
  }
  cache.blocks_run = blocks;

  const auto k = static_cast<std::size_t>(s.class_count);
  if (need_main) {
    BasicTensor<T> logits({k, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    project(cache.features[3].data.data(), s.widths[3], params.tensors[kHeadWeight].data.data(),
            params.tensors[kHeadBias].data.data(), s.class_count, hw, logits.data.data());
    cache.logits = std::move(logits);
  }
  if (heads != Heads::Main) {
    const int lb = s.light_block - 1;
    BasicTensor<T> light({k, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    project(cache.features[lb].data.data(), s.widths[lb], params.tensors[kLightWeight].data.data(),
            params.tensors[kLightBias].data.data(), s.class_count, hw, light.data.data());
    cache.light_logits = std::move(light);
  }
  return cache;
}

template <class T>
Gradients backward(const BasicModelParams<T>& params, const ForwardCache<T>& cache,
                   const BasicTensor<T>* dlogits, const BasicTensor<T>* dlight_logits) {
  if (cache.params_version != params.version)
    throw std::logic_error("backward: forward cache is stale for these parameters");
  const ModelShape& s = params.shape;
  const int h = cache.height, w = cache.width;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t expect = static_cast<std::size_t>(s.class_count) * hw;
  if (dlogits && (!cache.logits || dlogits->size() != expect))
    throw std::invalid_argument("backward: main-head gradient without matching forward output");
  if (dlight_logits && (!cache.light_logits || dlight_logits->size() != expect))
    throw std::invalid_argument("backward: light-head gradient without matching forward output");

  Gradients g = Gradients::zeros_like(s);
  std::array<BasicTensor<T>, 4> dfeat;
  for (int b = 0; b < cache.blocks_run; ++b) dfeat[b] = BasicTensor<T>(cache.features[b].dims);

  if (dlogits) {
    project_backward(cache.features[3].data.data(), s.widths[3],
                     params.tensors[kHeadWeight].data.data(), s.class_count, hw,
                     dlogits->data.data(), dfeat[3].data.data(),
                     g.tensors[kHeadWeight].data.data(), g.tensors[kHeadBias].data.data());
  }
  if (dlight_logits) {
    const int lb = s.light_block - 1;
    project_backward(cache.features[lb].data.data(), s.widths[lb],
                     params.tensors[kLightWeight].data.data(), s.class_count, hw,
                     dlight_logits->data.data(), dfeat[lb].data.data(),
                     g.tensors[kLightWeight].data.data(), g.tensors[kLightBias].data.data());
  }

  for (int b = cache.blocks_run - 1; b >= 0; --b) {
    const auto& feat = cache.features[b].data;
    auto& d = dfeat[b].data;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = feat[i] > T(0) ? d[i] : T(0);
    const int cin = b == 0 ? s.in_channels : s.widths[b - 1];
    const T* in = b == 0 ? cache.input.data.data() : cache.features[b - 1].data.data();
    conv3x3_backward_weights(d.data(), s.widths[b], in, cin, h, w, s.dilations[b],
                             g.tensors[2 * b].data.data(), g.tensors[2 * b + 1].data.data());
    if (b > 0) {
      BasicTensor<T> din(cache.features[b - 1].dims);
      conv3x3_backward_input(d.data(), s.widths[b], params.conv_weight(b).data.data(), cin, h, w,
                             s.dilations[b], din.data.data());
      auto& prev = dfeat[b - 1].data;
      for (std::size_t i = 0; i < prev.size(); ++i) prev[i] += din.data[i];
    }
  }
  return g;
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 3) throw std::invalid_argument("softmax: logits must be K x H x W");
  const std::size_t k = logits.dims[0], hw = logits.dims[1] * logits.dims[2];
  BasicTensor<T> out(logits.dims);
  std::vector<double> e(k);
  for (std::size_t p = 0; p < hw; ++p) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits.data[c * hw + p]));
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      e[c] = std::exp(static_cast<double>(logits.data[c * hw + p]) - mx);
      sum += e[c];
    }
    for (std::size_t c = 0; c < k; ++c) out.data[c * hw + p] = static_cast<T>(e[c] / sum);
  }
  return out;
}

template <class T>
LossResult<T> softmax_ce(const BasicTensor<T>& logits, std::span<const ClassId> targets,
                         std::span<const double> pixel_weights) {
  if (logits.rank() != 3) throw std::invalid_argument("softmax_ce: logits must be K x H x W");
  const std::size_t k = logits.dims[0], hw = logits.dims[1] * logits.dims[2];
  if (targets.size() != hw || pixel_weights.size() != hw)
    throw std::invalid_argument("softmax_ce: targets/weights do not match the logits");
  LossResult<T> r;
  r.grad = BasicTensor<T>(logits.dims);
  std::vector<double> e(k);
  const double inv_n = 1.0 / static_cast<double>(hw);
  double total = 0.0;
  for (std::size_t p = 0; p < hw; ++p) {
    const ClassId t = targets[p];
    if (t >= k) throw std::invalid_argument("softmax_ce: target id " + std::to_string(t) + " >= K");
    const double wp = pixel_weights[p];
    if (!(wp >= 0.0)) throw std::invalid_argument("softmax_ce: negative pixel weight");
    if (wp == 0.0) continue;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits.data[c * hw + p]));
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      e[c] = std::exp(static_cast<double>(logits.data[c * hw + p]) - mx);
      sum += e[c];
    }
    total += wp * (std::log(sum) + mx - static_cast<double>(logits.data[t * hw + p]));
    for (std::size_t c = 0; c < k; ++c) {
      const double prob = e[c] / sum;
      r.grad.data[c * hw + p] = static_cast<T>(wp * inv_n * (prob - (c == t ? 1.0 : 0.0)));
    }
  }
  r.loss = total * inv_n;
  return r;
}

template <class T>
LossResult<T> softmax_ce(const BasicTensor<T>& logits, std::span<const ClassId> targets,
                         double weight) {
  const std::vector<double> w(targets.size(), weight);
  return softmax_ce(logits, targets, std::span<const double>(w));
}

LabelMap argmax_labels(const Tensor& t) {
  if (t.rank() != 3) throw std::invalid_argument("argmax_labels: expected K x H x W");
  const std::size_t k = t.dims[0], hw = t.dims[1] * t.dims[2];
  LabelMap out(static_cast<int>(t.dims[2]), static_cast<int>(t.dims[1]));
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (t.data[c * hw + p] > t.data[best * hw + p]) best = c;
    out.ids[p] = static_cast<ClassId>(best);
  }
  return out;
}

PseudoLabel pseudo_label(const Tensor& probs, double tau) {
  check_probs(probs);
  const std::size_t k = probs.dims[0], hw = probs.dims[1] * probs.dims[2];
  PseudoLabel out;
  out.ids = LabelMap(static_cast<int>(probs.dims[2]), static_cast<int>(probs.dims[1]));
  std::size_t confident = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    double sum = 0.0;
    std::size_t best = 0;
    for (std::size_t c = 0; c < k; ++c) {
      sum += probs.data[c * hw + p];
      if (probs.data[c * hw + p] > probs.data[best * hw + p]) best = c;
    }
    if (std::abs(sum - 1.0) > 1e-4)
      throw std::invalid_argument("pseudo_label: probabilities at pixel " + std::to_string(p) +
                                  " sum to " + std::to_string(sum));
    out.ids.ids[p] = static_cast<ClassId>(best);
    if (probs.data[best * hw + p] >= tau) ++confident;
  }
  out.quality = static_cast<double>(confident) / static_cast<double>(hw);
  return out;
}

double domain_distance(const Tensor& student_probs, const Tensor& static_probs) {
  check_probs(student_probs);
  if (!student_probs.same_shape(static_probs))
    throw std::invalid_argument("domain_distance: probability tensors differ in shape");
  const std::size_t k = student_probs.dims[0], hw = student_probs.dims[1] * student_probs.dims[2];
  double total = 0.0;
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t t = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (static_probs.data[c * hw + p] > static_probs.data[t * hw + p]) t = c;
    const double q = std::max(static_cast<double>(student_probs.data[t * hw + p]), 1e-12);
    total -= std::log(q);
  }
  return total / static_cast<double>(hw);
}

OptimState OptimState::for_params(const ModelParams& params) {
  OptimState s;
  for (const auto& t : params.tensors) {
    s.m.emplace_back(t.dims);
    s.v.emplace_back(t.dims);
  }
  return s;
}

StepStatus adamw_step(ModelParams& params, const Gradients& grads, OptimState& state, double lr,
                      const AdamWConfig& cfg) {
  if (!(lr >= 0.0)) throw std::invalid_argument("adamw_step: learning rate must be >= 0");
  const std::size_t n = params.tensors.size();
  if (grads.tensors.size() != n || state.m.size() != n || state.v.size() != n)
    throw std::invalid_argument("adamw_step: parameter/gradient/state count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (grads.tensors[i].dims != params.tensors[i].dims || state.m[i].dims != params.tensors[i].dims ||
        state.v[i].dims != params.tensors[i].dims)
      throw std::invalid_argument("adamw_step: shape mismatch for " + param_names()[i]);
  }
  if (!grads.all_finite()) return StepStatus::SkippedNonFinite;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = params.tensors[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g = grads.tensors[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg.eps);
      p[j] = static_cast<float>(static_cast<double>(p[j]) * decay - lr * update);
    }
  }
  params.touch();
  return StepStatus::Applied;
}

void ema_update(ModelParams& teacher, const ModelParams& student, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("ema_update: decay must lie in [0,1]");
  if (!teacher.same_shapes(student)) throw std::invalid_argument("ema_update: shape mismatch");
  for (std::size_t i = 0; i < teacher.tensors.size(); ++i) {
    auto& t = teacher.tensors[i].data;
    const auto& s = student.tensors[i].data;
    for (std::size_t j = 0; j < t.size(); ++j)
      t[j] = static_cast<float>(decay * t[j] + (1.0 - decay) * s[j]);
  }
  teacher.touch();
}

template ForwardCache<float> forward(const BasicModelParams<float>&, const Frame&, Heads);
template ForwardCache<double> forward(const BasicModelParams<double>&, const Frame&, Heads);
template Gradients backward(const BasicModelParams<float>&, const ForwardCache<float>&,
                            const BasicTensor<float>*, const BasicTensor<float>*);
template Gradients backward(const BasicModelParams<double>&, const ForwardCache<double>&,
                            const BasicTensor<double>*, const BasicTensor<double>*);
template BasicTensor<float> softmax(const BasicTensor<float>&);
template BasicTensor<double> softmax(const BasicTensor<double>&);
template LossResult<float> softmax_ce(const BasicTensor<float>&, std::span<const ClassId>,
                                      std::span<const double>);
template LossResult<double> softmax_ce(const BasicTensor<double>&, std::span<const ClassId>,
                                       std::span<const double>);
template LossResult<float> softmax_ce(const BasicTensor<float>&, std::span<const ClassId>, double);
template LossResult<double> softmax_ce(const BasicTensor<double>&, std::span<const ClassId>, double);

}  // namespace streamadapt
