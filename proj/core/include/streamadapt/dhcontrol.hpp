#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace streamadapt {

// Bin-averaged distance signal. Every `bin_size` observations one smoothed
// sample is emitted: A_0 = first bin mean, A_i = alpha*mean + (1-alpha)*A_{i-1}.
struct SignalState {
  int bin_size = 20;
  double alpha = 1.0;
  std::vector<double> history;   // raw d_t
  std::vector<double> smoothed;  // A_i
  double bin_sum = 0.0;
  int bin_fill = 0;

  static SignalState make(int bin_size, double alpha);
  void validate() const;
};

// Throws std::invalid_argument for a non-finite or negative d.
std::optional<double> observe(SignalState& state, double d);

// Discretized level B with threshold z; the first sample initializes B_0 = A_0.
struct DiscreteState {
  double z = 0.25;
  bool initialized = false;
  double level = 0.0;     // B_i
  double previous = 0.0;  // B_{i-1}
  double last_shift = 0.0;

  static DiscreteState make(double z);
};

struct DiscreteStep {
  double level = 0.0;
  bool shift = false;
  double delta = 0.0;  // B_i - B_{i-1}
};

// B_i = A_i if |B_{i-1} - A_i| > z, else B_{i-1}.
DiscreteStep discretize(DiscreteState& state, double a);

struct ScheduleConfig {
  double b_source = 0.8;
  double b_hard = 2.55;
  double kl_min = 187;
  double kl_max = 562;
  double lr_min = 1.5e-4;  // K_eta at B_source
  double lr_max = 6e-5;    // K_eta at B_hard
  double mix_min = 0.5;
  double mix_max = 0.75;
  double mask_min = 0.3;
  double mask_max = 0.7;
  // Replaces the interpolated K_l when set (e.g. 750).
  std::optional<double> kl_override;

  void validate() const;
  bool operator==(const ScheduleConfig&) const = default;
};

enum class ShiftDirection : std::uint8_t { TowardSource, AwayFromSource };

struct AdaptationOrder {
  int iterations = 0;  // L
  double lr = 0.0;     // K_eta
  double alpha_mix = 0.0;
  double alpha_mask = 0.0;
  double k_l = 0.0;
  ShiftDirection direction = ShiftDirection::AwayFromSource;
};

// Linear interpolation between lo (at B_source) and hi (at B_hard) with B
// clamped to [B_source, B_hard]. Exact at both endpoints.
double schedule_lerp(double level, const ScheduleConfig& cfg, double lo, double hi);

// L = round(K_l * |dB| / z); K_l = K_l^max when dB >= 0, else interpolated.
AdaptationOrder order_adaptation(double delta, double level, const ScheduleConfig& cfg, double z);

// K_eta * (1 - iteration / L); throws std::out_of_range when iteration >= L.
double lr_at(const AdaptationOrder& order, int iteration);

struct ControllerConfig {
  int bin_size = 20;
  double alpha = 1.0;
  double z = 0.25;
  ScheduleConfig schedule;
  // Raw distances are multiplied by this before observe(). Zero means
  // calibrate: B_source / mean distance over `calibration_frames` clear
  // source frames, so the source domain sits at B_source.
  double distance_scale = 0.0;
  int calibration_frames = 16;

  void validate() const;
  bool operator==(const ControllerConfig&) const = default;
};

// One row of the controller trace, written for every emitted bin.
struct TraceRow {
  int frame = 0;
  double d = 0.0;
  double a = 0.0;
  double b = 0.0;
  bool shift = false;
  double delta = 0.0;
  AdaptationOrder order;  // zero iterations unless shift
};

// observe + discretize + order_adaptation as one state machine.
class Controller {
 public:
  explicit Controller(const ControllerConfig& cfg);

  // Returns an order when this observation closes a bin that shifts B.
  std::optional<AdaptationOrder> step(int frame, double d);

  const std::vector<TraceRow>& trace() const { return trace_; }
  const SignalState& signal() const { return signal_; }
  const DiscreteState& discrete() const { return discrete_; }

 private:
  ControllerConfig cfg_;
  SignalState signal_;
  DiscreteState discrete_;
  std::vector<TraceRow> trace_;
};

std::string trace_csv_header();
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows);

}  // namespace streamadapt
