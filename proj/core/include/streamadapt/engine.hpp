#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "streamadapt/checkpoint.hpp"
#include "streamadapt/config.hpp"
#include "streamadapt/metrics.hpp"

namespace streamadapt {

struct PretrainResult {
  Checkpoint checkpoint;
  double val_miou = 0.0;
  int epochs = 0;
  std::vector<double> history;  // validation mIoU per epoch
};

// Supervised training of both heads on clear scenes. Stops at the first epoch
// >= min_epochs whose validation mIoU reaches the floor; throws
// std::runtime_error (with the final mIoU) when max_epochs is exhausted.
PretrainResult pretrain(const RunConfig& cfg, std::ostream* log = nullptr);

std::vector<LabelMap> predict(const ModelParams& params, const std::vector<Frame>& frames);
MiouResult evaluate(const ModelParams& params, const std::vector<Frame>& frames,
                    const std::vector<LabelMap>& truths);

// mIoU of `params` on the held-out evaluation frames of one profile segment.
MiouResult evaluate_segment(const ModelParams& params, const RunConfig& cfg, int segment);

// Clear source scenes for the replay buffer.
std::vector<Scene> source_scenes(const RunConfig& cfg);
ReplayBuffer build_source_buffer(const RunConfig& cfg);

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

struct MaskedLoss {
  double loss = 0.0;
  Gradients grads;
  PseudoLabel pseudo;  // teacher on the unmasked frame
};

// Teacher pseudo-labels on the unmasked frame; quality-weighted CE of the
// student on the masked frame.
MaskedLoss masked_loss(const ModelParams& student, const ModelParams& teacher, const Frame& frame,
                       const MaskGrid& mask, double tau);
// Unweighted CE of the student on x_mix against y_mix.
LossAndGrads mixed_loss(const ModelParams& student, const MixResult& mix);

struct ActiveOrder {
  AdaptationOrder order;
  int iteration = 0;
  std::uint64_t index = 0;
  ModelParams snapshot;  // student before the order started
};

struct AdaptState {
  ModelParams student;
  ModelParams teacher;
  ModelParams statik;
  OptimState optim;
  std::optional<ActiveOrder> active;
  std::uint64_t orders_started = 0;
  int iterations_run = 0;
  int rollbacks = 0;
  std::vector<std::string> diagnostics;

  static AdaptState from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;
  // Replaces any active order.
  void begin_order(const AdaptationOrder& order);
};

struct StepReport {
  bool ran = false;
  bool rolled_back = false;
  double loss_mask = 0.0;
  double loss_mix = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

// One adaptation iteration of the active order on `frame`: DAP mask at the
// order's alpha_mask -> masked_loss, DSC mix at its alpha_mix -> mixed_loss,
// one AdamW step at lr_at(iteration), then the EMA teacher update. A
// non-finite loss restores the pre-order student and ends the order.
// `buffer` may be null, in which case the mix is the identity.
StepReport adapt_step(AdaptState& state, const Frame& frame, const ReplayBuffer* buffer,
                      const AdaptConfig& cfg, const AdamWConfig& opt, std::uint64_t seed);

struct MetricsRecord {
  int frame = 0;
  SegmentTag tag;
  std::vector<double> iou;
  double miou = 0.0;
  double seconds = 0.0;
  bool adapting = false;
  double distance = 0.0;
  int order_iteration = -1;
  int order_length = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct SegmentScore {
  int segment = 0;
  Condition condition = Condition::Clear;
  double intensity = 0.0;
  bool forward = true;
  double miou = 0.0;
};

struct RunReport {
  std::string ablation;
  std::vector<SegmentScore> segments;
  std::vector<double> forward_miou;
  std::vector<double> backward_miou;
  double h_forward = 0.0;
  double h_backward = 0.0;
  double h_total = 0.0;
  double fps = 0.0;
  double seconds = 0.0;
  int frames = 0;
  double distance_scale = 1.0;
  int shifts = 0;
  int adapt_iterations = 0;
  int rollbacks = 0;
  int hardest_segment = 0;
  double hardest_miou = 0.0;
  double initial_clear_miou = 0.0;
  double final_clear_miou = 0.0;
};

struct RunResult {
  RunReport report;
  std::vector<MetricsRecord> records;
  std::vector<TraceRow> trace;
  Checkpoint final_state;
};

// Mean domain distance of the checkpoint's student against its static light
// head over clear source scenes.
double source_distance(const RunConfig& cfg, const Checkpoint& ckpt);
// cfg.controller.distance_scale, or B_source / source_distance when it is 0.
double distance_scale(const RunConfig& cfg, const Checkpoint& ckpt);

// Streams the profile once. Each frame: timed student inference, domain
// distance to the static light head, controller update, and (when an order
// is active) adaptation on that frame only. Every segment is scored on
// held-out frames when its last frame has been processed; segments up to the
// first peak-intensity one form the forward half, the rest the backward half.
RunResult run_stream(const RunConfig& cfg, const Checkpoint& ckpt, const ReplayBuffer* buffer,
                     std::ostream* log = nullptr);

// Harmonic mean that reports 0 instead of throwing when a value is <= 0.
double safe_h_miou(const std::vector<double>& values);

inline constexpr int kMetricsSchemaVersion = 1;
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records, int class_count);
void write_timing_csv(std::ostream& os, const std::vector<MetricsRecord>& records);
std::string report_to_json(const RunReport& report);

// metrics.csv, timing.csv, controller_trace.csv, report.json, final.rdsc.
void write_run_outputs(const std::filesystem::path& dir, const RunResult& result, int class_count);

}  // namespace streamadapt
