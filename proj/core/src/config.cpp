#include "streamadapt/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "streamadapt/random.hpp"

namespace streamadapt {
namespace {

using nlohmann::json;

std::string texture_name(Texture t) {
  switch (t) {
    case Texture::Flat: return "flat";
    case Texture::Stripes: return "stripes";
    case Texture::Checker: return "checker";
    case Texture::Speckle: return "speckle";
    case Texture::Dots: return "dots";
    case Texture::Gradient: return "gradient";
  }
  return "flat";
}

Texture texture_from_name(const std::string& s) {
  for (Texture t : {Texture::Flat, Texture::Stripes, Texture::Checker, Texture::Speckle, Texture::Dots,
                    Texture::Gradient})
    if (texture_name(t) == s) return t;
  throw std::invalid_argument("unknown texture '" + s + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json scene_to_json(const SceneSpec& s) {
  json palette = json::array();
  for (const ClassStyle& c : s.palette)
    palette.push_back({{"base", c.base},
                       {"texture", texture_name(c.texture)},
                       {"amplitude", c.amplitude},
                       {"period", c.period},
                       {"orientation", c.orientation},
                       {"outlined", c.outlined}});
  return {{"class_count", s.class_count}, {"layout_seed", s.layout_seed},
          {"object_density", s.object_density}, {"width", s.width},
          {"height", s.height}, {"pixel_noise", s.pixel_noise},
          {"class_shares", s.class_shares}, {"palette", palette}};
}

SceneSpec scene_from_json(const json& j) {
  const int k = j.value("class_count", 8);
  SceneSpec s = SceneSpec::make_default(k, j.value<std::uint64_t>("layout_seed", 0));
  read_opt(j, "object_density", s.object_density);
  read_opt(j, "width", s.width);
  read_opt(j, "height", s.height);
  read_opt(j, "pixel_noise", s.pixel_noise);
  read_opt(j, "class_shares", s.class_shares);
  if (j.contains("palette")) {
    s.palette.clear();
    for (const json& c : j.at("palette")) {
      ClassStyle st;
      st.base = c.at("base").get<std::array<float, 3>>();
      st.texture = texture_from_name(c.at("texture").get<std::string>());
      st.amplitude = c.at("amplitude").get<float>();
      st.period = c.at("period").get<float>();
      st.orientation = c.at("orientation").get<float>();
      st.outlined = c.at("outlined").get<bool>();
      s.palette.push_back(st);
    }
  }
  return s;
}

json profile_to_json(const DomainProfile& p) {
  json segs = json::array();
  for (const Segment& s : p.segments)
    segs.push_back({{"condition", to_string(s.condition)}, {"intensity", s.intensity}, {"frames", s.frame_count}});
  return {{"seed", p.seed}, {"segments", segs}};
}

DomainProfile profile_from_json(const json& j) {
  DomainProfile p;
  p.seed = j.value<std::uint64_t>("seed", 0);
  for (const json& s : j.at("segments"))
    p.segments.push_back({condition_from_string(s.at("condition").get<std::string>()),
                          s.at("intensity").get<double>(), s.at("frames").get<int>()});
  return p;
}

json to_json_value(const RunConfig& c) {
  const ModelShape& m = c.model;
  const ScheduleConfig& s = c.controller.schedule;
  const FrequencySpec& f = c.adapt.frequency;
  json schedule = {{"b_source", s.b_source}, {"b_hard", s.b_hard}, {"kl_min", s.kl_min},
                   {"kl_max", s.kl_max},     {"lr_min", s.lr_min}, {"lr_max", s.lr_max},
                   {"mix_min", s.mix_min},   {"mix_max", s.mix_max}, {"mask_min", s.mask_min},
                   {"mask_max", s.mask_max}, {"kl_override", nullptr}};
  if (s.kl_override) schedule["kl_override"] = *s.kl_override;
  return {
      {"seed", c.seed},
      {"scene", scene_to_json(c.scene)},
      {"profile", profile_to_json(c.profile)},
      {"model",
       {{"in_channels", m.in_channels},
        {"widths", m.widths},
        {"dilations", m.dilations},
        {"class_count", m.class_count},
        {"light_block", m.light_block}}},
      {"optimizer",
       {{"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"weight_decay", c.optimizer.weight_decay},
        {"eps", c.optimizer.eps}}},
      {"controller",
       {{"bin_size", c.controller.bin_size},
        {"alpha", c.controller.alpha},
        {"z", c.controller.z},
        {"distance_scale", c.controller.distance_scale},
        {"calibration_frames", c.controller.calibration_frames},
        {"schedule", schedule}}},
      {"pretrain",
       {{"train_frames", c.pretrain.train_frames},
        {"val_frames", c.pretrain.val_frames},
        {"crop", c.pretrain.crop},
        {"batch", c.pretrain.batch},
        {"min_epochs", c.pretrain.min_epochs},
        {"max_epochs", c.pretrain.max_epochs},
        {"lr", c.pretrain.lr},
        {"miou_floor", c.pretrain.miou_floor},
        {"light_weight", c.pretrain.light_weight}}},
      {"buffer",
       {{"source_frames", c.buffer.source_frames},
        {"temperature", c.buffer.temperature},
        {"capacity", c.buffer.build.capacity},
        {"draw_budget", c.buffer.build.draw_budget},
        {"min_component", c.buffer.build.min_component}}},
      {"adapt",
       {{"ablation", to_string(c.adapt.ablation)},
        {"mask_strategy", to_string(c.adapt.mask_strategy)},
        {"replay", c.adapt.replay},
        {"burst", c.adapt.burst},
        {"literal_blend", c.adapt.literal_blend},
        {"tau", c.adapt.tau},
        {"ema_decay", c.adapt.ema_decay},
        {"patch_size", f.patch_size},
        {"epsilon", f.epsilon},
        {"hf_cutoff", f.cutoff},
        {"amplitude_scale", f.amplitude_scale}}},
      {"eval", {{"frames_per_segment", c.eval.frames_per_segment}}},
  };
}

RunConfig from_json_value(const json& j) {
  RunConfig c = RunConfig::make_default(j.value<std::uint64_t>("seed", 0));
  if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));
  if (j.contains("profile")) c.profile = profile_from_json(j.at("profile"));
  if (j.contains("model")) {
    const json& m = j.at("model");
    read_opt(m, "in_channels", c.model.in_channels);
    read_opt(m, "widths", c.model.widths);
    read_opt(m, "dilations", c.model.dilations);
    read_opt(m, "class_count", c.model.class_count);
    read_opt(m, "light_block", c.model.light_block);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    read_opt(o, "beta1", c.optimizer.beta1);
    read_opt(o, "beta2", c.optimizer.beta2);
    read_opt(o, "weight_decay", c.optimizer.weight_decay);
    read_opt(o, "eps", c.optimizer.eps);
  }
  if (j.contains("controller")) {
    const json& k = j.at("controller");
    read_opt(k, "bin_size", c.controller.bin_size);
    read_opt(k, "alpha", c.controller.alpha);
    read_opt(k, "z", c.controller.z);
    read_opt(k, "distance_scale", c.controller.distance_scale);
    read_opt(k, "calibration_frames", c.controller.calibration_frames);
    if (k.contains("schedule")) {
      const json& s = k.at("schedule");
      ScheduleConfig& d = c.controller.schedule;
      read_opt(s, "b_source", d.b_source);
      read_opt(s, "b_hard", d.b_hard);
      read_opt(s, "kl_min", d.kl_min);
      read_opt(s, "kl_max", d.kl_max);
      read_opt(s, "lr_min", d.lr_min);
      read_opt(s, "lr_max", d.lr_max);
      read_opt(s, "mix_min", d.mix_min);
      read_opt(s, "mix_max", d.mix_max);
      read_opt(s, "mask_min", d.mask_min);
      read_opt(s, "mask_max", d.mask_max);
      if (s.contains("kl_override") && !s.at("kl_override").is_null())
        d.kl_override = s.at("kl_override").get<double>();
      else
        d.kl_override.reset();
    }
  }
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    read_opt(p, "train_frames", c.pretrain.train_frames);
    read_opt(p, "val_frames", c.pretrain.val_frames);
    read_opt(p, "crop", c.pretrain.crop);
    read_opt(p, "batch", c.pretrain.batch);
    read_opt(p, "min_epochs", c.pretrain.min_epochs);
    read_opt(p, "max_epochs", c.pretrain.max_epochs);
    read_opt(p, "lr", c.pretrain.lr);
    read_opt(p, "miou_floor", c.pretrain.miou_floor);
    read_opt(p, "light_weight", c.pretrain.light_weight);
  }
  if (j.contains("buffer")) {
    const json& b = j.at("buffer");
    read_opt(b, "source_frames", c.buffer.source_frames);
    read_opt(b, "temperature", c.buffer.temperature);
    read_opt(b, "capacity", c.buffer.build.capacity);
    read_opt(b, "draw_budget", c.buffer.build.draw_budget);
    read_opt(b, "min_component", c.buffer.build.min_component);
  }
  if (j.contains("adapt")) {
    const json& a = j.at("adapt");
    if (a.contains("ablation")) c.adapt.ablation = ablation_from_string(a.at("ablation").get<std::string>());
    if (a.contains("mask_strategy"))
      c.adapt.mask_strategy = mask_strategy_from_string(a.at("mask_strategy").get<std::string>());
    read_opt(a, "replay", c.adapt.replay);
    read_opt(a, "burst", c.adapt.burst);
    read_opt(a, "literal_blend", c.adapt.literal_blend);
    read_opt(a, "tau", c.adapt.tau);
    read_opt(a, "ema_decay", c.adapt.ema_decay);
    read_opt(a, "patch_size", c.adapt.frequency.patch_size);
    read_opt(a, "epsilon", c.adapt.frequency.epsilon);
    read_opt(a, "hf_cutoff", c.adapt.frequency.cutoff);
    read_opt(a, "amplitude_scale", c.adapt.frequency.amplitude_scale);
  }
  if (j.contains("eval")) read_opt(j.at("eval"), "frames_per_segment", c.eval.frames_per_segment);
  return c;
}

}  // namespace

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::MaskOnly: return "mask-only";
    case Ablation::MixOnly: return "mix-only";
    case Ablation::NoAdapt: return "no-adapt";
  }
  return "none";
}

Ablation ablation_from_string(const std::string& s) {
  for (Ablation a : {Ablation::None, Ablation::MaskOnly, Ablation::MixOnly, Ablation::NoAdapt})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown ablation '" + s + "' (none, mask-only, mix-only, no-adapt)");
}

std::string to_string(MaskStrategy m) { return m == MaskStrategy::Ambiguity ? "ambiguity" : "random"; }

MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "ambiguity") return MaskStrategy::Ambiguity;
  if (s == "random") return MaskStrategy::Random;
  throw std::invalid_argument("unknown mask strategy '" + s + "' (ambiguity, random)");
}

bool AdaptConfig::operator==(const AdaptConfig& o) const {
  return ablation == o.ablation && mask_strategy == o.mask_strategy && replay == o.replay && burst == o.burst &&
         literal_blend == o.literal_blend && tau == o.tau && ema_decay == o.ema_decay &&
         frequency.patch_size == o.frequency.patch_size && frequency.epsilon == o.frequency.epsilon &&
         frequency.cutoff == o.frequency.cutoff && frequency.amplitude_scale == o.frequency.amplitude_scale;
}

RunConfig RunConfig::make_default(std::uint64_t seed) {
  RunConfig c;
  c.controller.z = (c.controller.schedule.b_hard - c.controller.schedule.b_source) / 7.0;
  c.apply_seed(seed);
  return c;
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  scene.layout_seed = derive_seed({s, 0x4c41ULL});
  profile.seed = derive_seed({s, 0x5052ULL});
}

std::uint64_t RunConfig::pretrain_seed() const { return derive_seed({seed, 0x5054ULL}); }
std::uint64_t RunConfig::buffer_seed() const { return derive_seed({seed, 0x4255ULL}); }
std::uint64_t RunConfig::adapt_seed() const { return derive_seed({seed, 0x4144ULL}); }
std::uint64_t RunConfig::eval_seed() const { return derive_seed({seed, 0x4556ULL}); }

void RunConfig::validate() const {
  scene.validate();
  profile.validate();
  model.validate();
  controller.validate();
  adapt.frequency.validate();
  if (model.class_count != scene.class_count)
    throw std::invalid_argument("config: model and scene disagree on the class count");
  if (model.in_channels != 3) throw std::invalid_argument("config: the stream produces 3-channel frames");
  PatchGrid::for_frame(scene.width, scene.height, adapt.frequency.patch_size);
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw std::invalid_argument("config: AdamW betas must lie in [0,1)");
  if (!(optimizer.weight_decay >= 0.0 && optimizer.eps > 0.0))
    throw std::invalid_argument("config: AdamW weight decay must be >= 0 and eps > 0");
  if (pretrain.train_frames < 1 || pretrain.val_frames < 1 || pretrain.batch < 1 || pretrain.crop < 8 ||
      pretrain.min_epochs < 0 || pretrain.max_epochs < std::max(1, pretrain.min_epochs) || !(pretrain.lr > 0.0) ||
      !(pretrain.miou_floor >= 0.0 && pretrain.miou_floor <= 1.0) || !(pretrain.light_weight >= 0.0))
    throw std::invalid_argument("config: invalid pretrain settings");
  if (buffer.source_frames < 1 || !(buffer.temperature > 0.0) || buffer.build.capacity < 1 ||
      buffer.build.min_component < 1)
    throw std::invalid_argument("config: invalid buffer settings");
  if (!(adapt.tau >= 0.0 && adapt.tau <= 1.0)) throw std::invalid_argument("config: tau must lie in [0,1]");
  if (!(adapt.ema_decay >= 0.0 && adapt.ema_decay <= 1.0))
    throw std::invalid_argument("config: EMA decay must lie in [0,1]");
  if (eval.frames_per_segment < 1) throw std::invalid_argument("config: frames_per_segment must be >= 1");
}

bool RunConfig::operator==(const RunConfig& o) const { return config_to_json(*this) == config_to_json(o); }

std::string config_to_json(const RunConfig& cfg) { return to_json_value(cfg).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  try {
    return from_json_value(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << config_to_json(cfg);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace streamadapt
