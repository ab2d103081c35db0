#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamadapt/image.hpp"
#include "streamadapt/tensor.hpp"

namespace streamadapt {

// Four 3x3 conv+ReLU blocks at full resolution, a 1x1 head to K logits, and a
// lightweight 1x1 head reading the output of block `light_block`.
struct ModelShape {
  int in_channels = 3;
  std::array<int, 4> widths{8, 16, 16, 16};
  std::array<int, 4> dilations{1, 2, 4, 8};
  int class_count = 8;
  int light_block = 2;  // 1-based block index read by the light head

  void validate() const;
  bool operator==(const ModelShape&) const = default;
};

// Tensor order: m1..m4 (weight, bias) pairs, head (weight, bias), light (weight, bias).
enum ParamIndex : std::size_t {
  kHeadWeight = 8,
  kHeadBias = 9,
  kLightWeight = 10,
  kLightBias = 11,
  kParamCount = 12,
};

std::uint64_t next_param_version();

template <class T>
struct BasicModelParams {
  ModelShape shape;
  std::vector<BasicTensor<T>> tensors;
  // Changes on every mutation; forward caches remember it.
  std::uint64_t version = 0;

  static BasicModelParams zeros(const ModelShape& shape);

  BasicTensor<T>& conv_weight(int block) { return tensors[2 * block]; }
  const BasicTensor<T>& conv_weight(int block) const { return tensors[2 * block]; }
  BasicTensor<T>& conv_bias(int block) { return tensors[2 * block + 1]; }
  const BasicTensor<T>& conv_bias(int block) const { return tensors[2 * block + 1]; }

  void touch() { version = next_param_version(); }
  bool all_finite() const;
  bool same_shapes(const BasicModelParams& o) const;
  std::size_t parameter_count() const;

  template <class U>
  BasicModelParams<U> cast() const {
    BasicModelParams<U> out;
    out.shape = shape;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    out.touch();
    return out;
  }
};

using ModelParams = BasicModelParams<float>;

// Names used in checkpoints: "m1.weight", ..., "head.bias", "light.weight", "light.bias".
const std::array<std::string, kParamCount>& param_names();

// He-normal conv weights, zero biases, small normal heads.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

// Per-parameter gradients, always accumulated in double.
struct Gradients {
  std::vector<BasicTensor<double>> tensors;

  static Gradients zeros_like(const ModelShape& shape);
  Gradients& operator+=(const Gradients& o);
  Gradients& operator*=(double s);
  bool all_finite() const;
};

enum class Heads : std::uint8_t { Main, Light, Both };

template <class T>
struct ForwardCache {
  std::uint64_t params_version = 0;
  int width = 0;
  int height = 0;
  int blocks_run = 0;
  BasicTensor<T> input;                   // C x H x W
  std::array<BasicTensor<T>, 4> features;  // post-ReLU block outputs
  std::optional<BasicTensor<T>> logits;        // K x H x W
  std::optional<BasicTensor<T>> light_logits;  // K x H x W
};

// Throws std::invalid_argument on a channel mismatch.
template <class T>
ForwardCache<T> forward(const BasicModelParams<T>& params, const Frame& frame,
                        Heads heads = Heads::Main);

// Gradients of all trainable tensors given upstream gradients for the heads
// that were run. Throws std::logic_error when the cache was produced by a
// different parameter version.
template <class T>
Gradients backward(const BasicModelParams<T>& params, const ForwardCache<T>& cache,
                   const BasicTensor<T>* dlogits, const BasicTensor<T>* dlight_logits = nullptr);

// Per-pixel softmax over the leading (class) axis, computed in double.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <class T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad;  // dLoss/dLogits
};

// loss = (1/N) sum_p w_p * CE(softmax(logits_p), target_p) over N pixels.
template <class T>
LossResult<T> softmax_ce(const BasicTensor<T>& logits, std::span<const ClassId> targets,
                         std::span<const double> pixel_weights);
template <class T>
LossResult<T> softmax_ce(const BasicTensor<T>& logits, std::span<const ClassId> targets,
                         double weight = 1.0);

LabelMap argmax_labels(const Tensor& logits_or_probs);

struct PseudoLabel {
  LabelMap ids;
  double quality = 0.0;  // fraction of pixels with max-prob >= tau
};

// Throws std::invalid_argument when a pixel's probabilities sum off 1 by > 1e-4.
PseudoLabel pseudo_label(const Tensor& probs, double tau);

// Mean over pixels of -log p_student[argmax static]; probabilities are floored
// at 1e-12 so the distance stays finite.
double domain_distance(const Tensor& student_probs, const Tensor& static_probs);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

struct OptimState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  static OptimState for_params(const ModelParams& params);
};

enum class StepStatus : std::uint8_t { Applied, SkippedNonFinite };

// Decoupled weight decay: p <- p*(1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps).
StepStatus adamw_step(ModelParams& params, const Gradients& grads, OptimState& state, double lr,
                      const AdamWConfig& cfg = {});

// teacher <- decay*teacher + (1-decay)*student.
void ema_update(ModelParams& teacher, const ModelParams& student, double decay);

}  // namespace streamadapt
