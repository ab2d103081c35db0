#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "streamadapt/dapmask.hpp"
#include "streamadapt/dhcontrol.hpp"
#include "streamadapt/dscmix.hpp"
#include "streamadapt/synthstream.hpp"
#include "streamadapt/tinyseg.hpp"

namespace streamadapt {

enum class Ablation : std::uint8_t { None, MaskOnly, MixOnly, NoAdapt };
enum class MaskStrategy : std::uint8_t { Ambiguity, Random };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
std::string to_string(MaskStrategy m);
MaskStrategy mask_strategy_from_string(const std::string& s);

struct PretrainConfig {
  int train_frames = 192;
  int val_frames = 16;
  int crop = 64;         // training scenes are generated at crop x crop
  int batch = 4;
  int min_epochs = 30;
  int max_epochs = 60;
  double lr = 4e-3;
  double miou_floor = 0.85;
  double light_weight = 1.0;  // weight of the light head's CE term

  bool operator==(const PretrainConfig&) const = default;
};

struct BufferParams {
  int source_frames = 64;
  double temperature = 0.01;
  BufferConfig build;

  bool operator==(const BufferParams& o) const {
    return source_frames == o.source_frames && temperature == o.temperature &&
           build.capacity == o.build.capacity && build.draw_budget == o.build.draw_budget &&
           build.min_component == o.build.min_component;
  }
};

struct AdaptConfig {
  Ablation ablation = Ablation::None;
  MaskStrategy mask_strategy = MaskStrategy::Ambiguity;
  bool replay = true;         // false: mix branch trains on the raw target
  bool burst = false;         // run all L iterations on the triggering frame
  bool literal_blend = false;
  double tau = 0.9;
  double ema_decay = 0.999;
  FrequencySpec frequency;

  bool operator==(const AdaptConfig& o) const;
};

struct EvalConfig {
  int frames_per_segment = 8;

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SceneSpec scene = SceneSpec::make_default();
  DomainProfile profile = DomainProfile::pyramidal(Condition::Rain, 5, 60);
  ModelShape model;
  AdamWConfig optimizer;
  ControllerConfig controller;
  PretrainConfig pretrain;
  BufferParams buffer;
  AdaptConfig adapt;
  EvalConfig eval;

  static RunConfig make_default(std::uint64_t seed = 0);
  // Sets the master seed and the scene/profile seeds derived from it.
  void apply_seed(std::uint64_t seed);
  // Throws std::invalid_argument on any inconsistency.
  void validate() const;

  // Seeds for the individual stages, all derived from `seed`.
  std::uint64_t pretrain_seed() const;
  std::uint64_t buffer_seed() const;
  std::uint64_t adapt_seed() const;
  std::uint64_t eval_seed() const;

  bool operator==(const RunConfig& o) const;
};

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace streamadapt
