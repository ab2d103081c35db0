#include "streamadapt/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "streamadapt/random.hpp"

namespace streamadapt {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor main_probs(const ModelParams& params, const Frame& frame) {
  return softmax(*forward(params, frame, Heads::Main).logits);
}

// Segments scored as forward: up to and including the first one at peak intensity.
int hardest_segment(const DomainProfile& p) {
  int best = 0;
  for (int s = 1; s < static_cast<int>(p.segments.size()); ++s)
    if (p.segments[s].intensity > p.segments[best].intensity) best = s;
  return best;
}

}  // namespace

MiouResult evaluate_segment(const ModelParams& params, const RunConfig& cfg, int segment) {
  ConfusionMatrix cm(cfg.model.class_count);
  for (int i = 0; i < cfg.eval.frames_per_segment; ++i) {
    const StreamSample s = held_out_sample(cfg.profile, cfg.scene, segment, i, cfg.eval_seed());
    cm.add(argmax_labels(*forward(params, s.frame, Heads::Main).logits), s.labels);
  }
  return compute_miou(cm);
}

std::vector<LabelMap> predict(const ModelParams& params, const std::vector<Frame>& frames) {
  std::vector<LabelMap> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(argmax_labels(*forward(params, f, Heads::Main).logits));
  return out;
}

MiouResult evaluate(const ModelParams& params, const std::vector<Frame>& frames,
                    const std::vector<LabelMap>& truths) {
  return compute_miou(predict(params, frames), truths, params.shape.class_count);
}

PretrainResult pretrain(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const PretrainConfig& pc = cfg.pretrain;
  const std::uint64_t seed = cfg.pretrain_seed();

  SceneSpec crop_spec = cfg.scene;
  crop_spec.width = crop_spec.height = pc.crop;
  std::vector<Scene> train;
  train.reserve(pc.train_frames);
  for (int i = 0; i < pc.train_frames; ++i)
    train.push_back(gen_scene(crop_spec, derive_seed({seed, 0x5452ULL, static_cast<std::uint64_t>(i)})));
  std::vector<Frame> val_frames;
  std::vector<LabelMap> val_labels;
  for (int i = 0; i < pc.val_frames; ++i) {
    Scene s = gen_scene(cfg.scene, derive_seed({seed, 0x5641ULL, static_cast<std::uint64_t>(i)}));
    val_frames.push_back(std::move(s.frame));
    val_labels.push_back(std::move(s.labels));
  }

  ModelParams params = init_params(cfg.model, seed);
  OptimState optim = OptimState::for_params(params);
  Rng rng(derive_seed({seed, 0x5348ULL}));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PretrainResult result;
  for (int epoch = 1; epoch <= pc.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
    double epoch_loss = 0.0;
    // Cosine decay over min_epochs, then held at the floor.
    const double progress = pc.min_epochs > 0 ? std::min(1.0, (epoch - 1.0) / pc.min_epochs) : 1.0;
    const double lr = pc.lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    for (std::size_t start = 0; start < order.size(); start += pc.batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(pc.batch));
      Gradients acc = Gradients::zeros_like(cfg.model);
      for (std::size_t k = start; k < end; ++k) {
        const Scene& s = train[order[k]];
        const auto cache = forward(params, s.frame, Heads::Both);
        auto main = softmax_ce(*cache.logits, s.labels.ids, 1.0);
        auto light = softmax_ce(*cache.light_logits, s.labels.ids, pc.light_weight);
        epoch_loss += main.loss + light.loss;
        acc += backward(params, cache, &main.grad, &light.grad);
      }
      acc *= 1.0 / static_cast<double>(end - start);
      adamw_step(params, acc, optim, lr, cfg.optimizer);
    }
    result.val_miou = evaluate(params, val_frames, val_labels).miou;
    result.history.push_back(result.val_miou);
    result.epochs = epoch;
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "pretrain epoch %d loss %.4f val mIoU %.4f\n", epoch,
                    epoch_loss / static_cast<double>(train.size()), result.val_miou);
      *log << line << std::flush;
    }
    if (epoch >= pc.min_epochs && result.val_miou >= pc.miou_floor) {
      result.checkpoint = Checkpoint::from_source(params);
      return result;
    }
  }
  throw std::runtime_error("pretrain: validation mIoU " + std::to_string(result.val_miou) +
                           " below the floor " + std::to_string(pc.miou_floor) + " after " +
                           std::to_string(pc.max_epochs) + " epochs");
}

std::vector<Scene> source_scenes(const RunConfig& cfg) {
  std::vector<Scene> out;
  out.reserve(cfg.buffer.source_frames);
  for (int i = 0; i < cfg.buffer.source_frames; ++i)
    out.push_back(gen_scene(cfg.scene, derive_seed({cfg.buffer_seed(), 0x5343ULL, static_cast<std::uint64_t>(i)})));
  return out;
}

ReplayBuffer build_source_buffer(const RunConfig& cfg) {
  const std::vector<Scene> scenes = source_scenes(cfg);
  std::vector<Frame> frames;
  std::vector<LabelMap> labels;
  for (const Scene& s : scenes) {
    frames.push_back(s.frame);
    labels.push_back(s.labels);
  }
  const SamplingDist dist = sampling_probs(class_frequencies(labels, cfg.scene.class_count), cfg.buffer.temperature);
  return build_buffer(frames, labels, dist, cfg.buffer.build, derive_seed({cfg.buffer_seed(), 0x4442ULL}));
}

MaskedLoss masked_loss(const ModelParams& student, const ModelParams& teacher, const Frame& frame,
                       const MaskGrid& mask, double tau) {
  MaskedLoss out;
  out.pseudo = pseudo_label(main_probs(teacher, frame), tau);
  const Frame masked = apply_mask(frame, mask);
  if (out.pseudo.quality <= 0.0) {
    out.grads = Gradients::zeros_like(student.shape);
    return out;
  }
  const auto cache = forward(student, masked, Heads::Main);
  const auto ce = softmax_ce(*cache.logits, out.pseudo.ids.ids, out.pseudo.quality);
  out.loss = ce.loss;
  out.grads = backward(student, cache, &ce.grad);
  return out;
}

LossAndGrads mixed_loss(const ModelParams& student, const MixResult& mix) {
  const auto cache = forward(student, mix.frame, Heads::Main);
  const auto ce = softmax_ce(*cache.logits, mix.labels.ids, 1.0);
  return {ce.loss, backward(student, cache, &ce.grad)};
}

AdaptState AdaptState::from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.student.same_shapes(ckpt.teacher) || !ckpt.student.same_shapes(ckpt.statik))
    throw std::invalid_argument("checkpoint networks differ in shape");
  AdaptState s;
  s.student = ckpt.student;
  s.teacher = ckpt.teacher;
  s.statik = ckpt.statik;
  s.optim = ckpt.optim;
  return s;
}

Checkpoint AdaptState::to_checkpoint() const { return Checkpoint{student, teacher, statik, optim}; }

void AdaptState::begin_order(const AdaptationOrder& order) {
  active = ActiveOrder{order, 0, orders_started++, student};
  if (order.iterations <= 0) active.reset();
}

StepReport adapt_step(AdaptState& state, const Frame& frame, const ReplayBuffer* buffer,
                      const AdaptConfig& cfg, const AdamWConfig& opt, std::uint64_t seed) {
  StepReport rep;
  if (!state.active || cfg.ablation == Ablation::NoAdapt) return rep;
  ActiveOrder& act = *state.active;
  if (act.iteration >= act.order.iterations) {
    state.active.reset();
    return rep;
  }
  const std::uint64_t step_seed =
      derive_seed({seed, act.index, static_cast<std::uint64_t>(act.iteration)});
  const bool use_mask = cfg.ablation != Ablation::MixOnly;
  const bool use_mix = cfg.ablation != Ablation::MaskOnly;

  Gradients grads = Gradients::zeros_like(state.student.shape);
  PseudoLabel pseudo;
  if (use_mask) {
    MaskGrid mask;
    if (cfg.mask_strategy == MaskStrategy::Ambiguity) {
      mask = build_mask(energy_map(frame, cfg.frequency), act.order.alpha_mask);
    } else {
      const PatchGrid grid = PatchGrid::for_frame(frame.width, frame.height, cfg.frequency.patch_size);
      mask = random_mask(grid, act.order.alpha_mask, derive_seed({step_seed, 0x4d41ULL}));
    }
    MaskedLoss ml = masked_loss(state.student, state.teacher, frame, mask, cfg.tau);
    rep.loss_mask = ml.loss;
    grads += ml.grads;
    pseudo = std::move(ml.pseudo);
  }
  if (use_mix) {
    if (!use_mask) pseudo = pseudo_label(main_probs(state.teacher, frame), cfg.tau);
    const MixResult mixed =
        (cfg.replay && buffer && buffer->total_cutouts() > 0)
            ? mix(frame, pseudo.ids, *buffer, act.order.alpha_mix, derive_seed({step_seed, 0x4d49ULL}),
                  MixOptions{cfg.literal_blend})
            : identity_mix(frame, pseudo.ids);
    LossAndGrads lm = mixed_loss(state.student, mixed);
    rep.loss_mix = lm.loss;
    grads += lm.grads;
  }
  rep.total = rep.loss_mask + rep.loss_mix;
  rep.lr = lr_at(act.order, act.iteration);

  if (!std::isfinite(rep.total) || !grads.all_finite()) {
    state.student = act.snapshot;
    state.student.touch();
    state.diagnostics.push_back("non-finite loss at order " + std::to_string(act.index) + " iteration " +
                                std::to_string(act.iteration) + "; student restored");
    ++state.rollbacks;
    state.active.reset();
    rep.rolled_back = true;
    return rep;
  }
  adamw_step(state.student, grads, state.optim, rep.lr, opt);
  ema_update(state.teacher, state.student, cfg.ema_decay);
  rep.ran = true;
  ++state.iterations_run;
  if (++act.iteration >= act.order.iterations) state.active.reset();
  return rep;
}

double safe_h_miou(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  for (double v : values)
    if (!(v > 0.0)) return 0.0;
  return h_miou(values);
}

double source_distance(const RunConfig& cfg, const Checkpoint& ckpt) {
  double sum = 0.0;
  const int n = cfg.controller.calibration_frames;
  for (int i = 0; i < n; ++i) {
    const Scene s = gen_scene(cfg.scene, derive_seed({cfg.buffer_seed(), 0x4341ULL, static_cast<std::uint64_t>(i)}));
    sum += domain_distance(main_probs(ckpt.student, s.frame),
                           softmax(*forward(ckpt.statik, s.frame, Heads::Light).light_logits));
  }
  return sum / n;
}

double distance_scale(const RunConfig& cfg, const Checkpoint& ckpt) {
  if (cfg.controller.distance_scale > 0.0) return cfg.controller.distance_scale;
  const double d = source_distance(cfg, ckpt);
  if (!(d > 0.0)) throw std::runtime_error("distance calibration: source distance is zero");
  return cfg.controller.schedule.b_source / d;
}

RunResult run_stream(const RunConfig& cfg, const Checkpoint& ckpt, const ReplayBuffer* buffer,
                     std::ostream* log) {
  cfg.validate();
  if (!(ckpt.student.shape == cfg.model))
    throw std::invalid_argument("run_stream: checkpoint model shape does not match the config");
  if (buffer && buffer->class_count() != cfg.model.class_count)
    throw std::invalid_argument("run_stream: replay buffer class count does not match the config");

  AdaptState state = AdaptState::from_checkpoint(ckpt);
  state.optim = OptimState::for_params(state.student);
  Controller controller(cfg.controller);
  RunResult result;
  RunReport& rep = result.report;
  rep.ablation = to_string(cfg.adapt.ablation);
  const int total = cfg.profile.total_frames();
  const int peak = hardest_segment(cfg.profile);
  result.records.reserve(total);
  const std::uint64_t adapt_seed = cfg.adapt_seed();
  rep.distance_scale = distance_scale(cfg, ckpt);

  for (int t = 0; t < total; ++t) {
    const StreamSample sample = next(cfg.profile, cfg.scene, t);
    const Frame& frame = sample.frame;
    MetricsRecord rec;
    rec.frame = t;
    rec.tag = sample.tag;

    const auto t0 = Clock::now();
    const Tensor probs = main_probs(state.student, frame);
    const Tensor static_probs = softmax(*forward(state.statik, frame, Heads::Light).light_logits);
    rec.distance = rep.distance_scale * domain_distance(probs, static_probs);
    if (auto order = controller.step(t, rec.distance)) {
      ++rep.shifts;
      if (cfg.adapt.ablation != Ablation::NoAdapt) state.begin_order(*order);
    }
    if (state.active && cfg.adapt.ablation != Ablation::NoAdapt) {
      rec.adapting = true;
      rec.order_length = state.active->order.iterations;
      rec.order_iteration = state.active->iteration;
      do {
        const StepReport sr = adapt_step(state, frame, buffer, cfg.adapt, cfg.optimizer, adapt_seed);
        rec.lr = sr.lr;
        rec.loss += sr.total;
      } while (cfg.adapt.burst && state.active);
    }
    rec.seconds = seconds_since(t0);
    rep.seconds += rec.seconds;

    const LabelMap pred = argmax_labels(probs);
    ConfusionMatrix cm(cfg.model.class_count);
    cm.add(pred, sample.labels);
    const MiouResult m = compute_miou(cm);
    rec.iou = m.iou;
    rec.miou = m.miou;
    result.records.push_back(std::move(rec));

    const int seg = sample.tag.segment;
    const bool last_of_segment = t + 1 == total || cfg.profile.segment_index(t + 1) != seg;
    if (last_of_segment) {
      const Segment& sp = cfg.profile.segments[seg];
      SegmentScore score{seg, sp.condition, sp.intensity, seg <= peak,
                         evaluate_segment(state.student, cfg, seg).miou};
      (score.forward ? rep.forward_miou : rep.backward_miou).push_back(score.miou);
      rep.segments.push_back(score);
      if (log) {
        char line[160];
        std::snprintf(line, sizeof line, "segment %d %s %.2f %s mIoU %.4f\n", seg, to_string(sp.condition).c_str(),
                      sp.intensity, score.forward ? "F" : "B", score.miou);
        *log << line << std::flush;
      }
    }
  }

  rep.frames = total;
  rep.fps = rep.seconds > 0.0 ? total / rep.seconds : 0.0;
  rep.adapt_iterations = state.iterations_run;
  rep.rollbacks = state.rollbacks;
  rep.hardest_segment = peak;
  for (const SegmentScore& s : rep.segments)
    if (s.segment == peak) rep.hardest_miou = s.miou;
  std::vector<const SegmentScore*> clear;
  for (const SegmentScore& s : rep.segments)
    if (s.condition == Condition::Clear) clear.push_back(&s);
  if (!clear.empty()) {
    rep.initial_clear_miou = clear.front()->miou;
    rep.final_clear_miou = clear.back()->miou;
  }
  rep.h_forward = safe_h_miou(rep.forward_miou);
  rep.h_backward = safe_h_miou(rep.backward_miou);
  std::vector<double> all = rep.forward_miou;
  all.insert(all.end(), rep.backward_miou.begin(), rep.backward_miou.end());
  rep.h_total = safe_h_miou(all);
  result.trace = controller.trace();
  result.final_state = state.to_checkpoint();
  return result;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records, int class_count) {
  os << "# streamadapt metrics schema " << kMetricsSchemaVersion << '\n';
  os << "frame,segment,condition,intensity,miou";
  for (int c = 0; c < class_count; ++c) os << ",iou_" << c;
  os << ",adapting,distance,order_iteration,order_length,lr,loss\n";
  char buf[64];
  auto num = [&](double v) -> const char* {
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const MetricsRecord& r : records) {
    os << r.frame << ',' << r.tag.segment << ',' << to_string(r.tag.condition) << ',' << num(r.tag.intensity);
    os << ',' << num(r.miou);
    for (int c = 0; c < class_count; ++c) os << ',' << num(c < static_cast<int>(r.iou.size()) ? r.iou[c] : NAN);
    os << ',' << (r.adapting ? 1 : 0) << ',' << num(r.distance) << ',' << r.order_iteration << ','
       << r.order_length << ',' << num(r.lr) << ',' << num(r.loss) << '\n';
  }
}

void write_timing_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << "frame,seconds\n";
  char line[64];
  for (const MetricsRecord& r : records) {
    std::snprintf(line, sizeof line, "%d,%.9f\n", r.frame, r.seconds);
    os << line;
  }
}

std::string report_to_json(const RunReport& r) {
  nlohmann::json segs = nlohmann::json::array();
  for (const SegmentScore& s : r.segments)
    segs.push_back({{"segment", s.segment},
                    {"condition", to_string(s.condition)},
                    {"intensity", s.intensity},
                    {"half", s.forward ? "F" : "B"},
                    {"miou", s.miou}});
  const nlohmann::json j = {{"ablation", r.ablation},
                            {"segments", segs},
                            {"forward_miou", r.forward_miou},
                            {"backward_miou", r.backward_miou},
                            {"h_miou_forward", r.h_forward},
                            {"h_miou_backward", r.h_backward},
                            {"h_miou_total", r.h_total},
                            {"fps", r.fps},
                            {"seconds", r.seconds},
                            {"frames", r.frames},
                            {"distance_scale", r.distance_scale},
                            {"shifts", r.shifts},
                            {"adapt_iterations", r.adapt_iterations},
                            {"rollbacks", r.rollbacks},
                            {"hardest_segment", r.hardest_segment},
                            {"hardest_miou", r.hardest_miou},
                            {"initial_clear_miou", r.initial_clear_miou},
                            {"final_clear_miou", r.final_clear_miou}};
  return j.dump(2) + "\n";
}

void write_run_outputs(const std::filesystem::path& dir, const RunResult& result, int class_count) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot open " + (dir / name).string() + " for writing");
    return os;
  };
  {
    auto os = open("metrics.csv");
    write_metrics_csv(os, result.records, class_count);
  }
  {
    auto os = open("timing.csv");
    write_timing_csv(os, result.records);
  }
  {
    auto os = open("controller_trace.csv");
    write_trace_csv(os, result.trace);
  }
  {
    auto os = open("report.json");
    os << report_to_json(result.report);
  }
  save_checkpoint(result.final_state, dir / "final.rdsc");
}

}  // namespace streamadapt
