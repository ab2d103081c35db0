#include "streamadapt/dhcontrol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace streamadapt {

SignalState SignalState::make(int bin_size, double alpha) {
  SignalState s;
  s.bin_size = bin_size;
  s.alpha = alpha;
  s.validate();
  return s;
}

void SignalState::validate() const {
  if (bin_size < 1) throw std::invalid_argument("controller: bin size must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("controller: smoothing weight must lie in (0,1]");
}

std::optional<double> observe(SignalState& s, double d) {
  if (!std::isfinite(d) || d < 0.0)
    throw std::invalid_argument("observe: distance must be finite and >= 0");
  s.history.push_back(d);
  s.bin_sum += d;
  if (++s.bin_fill < s.bin_size) return std::nullopt;
  const double mean = s.bin_sum / s.bin_size;
  s.bin_sum = 0.0;
  s.bin_fill = 0;
  const double a = s.smoothed.empty() ? mean : s.alpha * mean + (1.0 - s.alpha) * s.smoothed.back();
  s.smoothed.push_back(a);
  return a;
}

DiscreteState DiscreteState::make(double z) {
  if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("controller: z must be > 0");
  DiscreteState s;
  s.z = z;
  return s;
}

DiscreteStep discretize(DiscreteState& s, double a) {
  if (!s.initialized) {
    s.initialized = true;
    s.level = s.previous = a;
    s.last_shift = 0.0;
    return {a, false, 0.0};
  }
  s.previous = s.level;
  if (std::abs(s.level - a) > s.z) {
    s.level = a;
    s.last_shift = s.level - s.previous;
    return {s.level, true, s.last_shift};
  }
  return {s.level, false, 0.0};
}

void ScheduleConfig::validate() const {
  if (!(b_source < b_hard)) throw std::invalid_argument("schedule: B_source must be < B_hard");
  if (!(kl_min >= 0.0 && kl_min <= kl_max)) throw std::invalid_argument("schedule: need 0 <= K_l^min <= K_l^max");
  if (!(lr_min >= 0.0 && lr_max >= 0.0)) throw std::invalid_argument("schedule: learning rates must be >= 0");
  auto check_range = [](double lo, double hi, const char* what) {
    if (!(lo >= 0.0 && lo <= hi && hi <= 1.0))
      throw std::invalid_argument(std::string("schedule: ") + what + " range must satisfy 0 <= min <= max <= 1");
  };
  check_range(mix_min, mix_max, "alpha_mix");
  check_range(mask_min, mask_max, "alpha_mask");
  if (kl_override && !(*kl_override >= 0.0)) throw std::invalid_argument("schedule: K_l override must be >= 0");
}

double schedule_lerp(double level, const ScheduleConfig& cfg, double lo, double hi) {
  const double b = std::clamp(level, cfg.b_source, cfg.b_hard);
  const double t = (b - cfg.b_source) / (cfg.b_hard - cfg.b_source);
  return (1.0 - t) * lo + t * hi;
}

AdaptationOrder order_adaptation(double delta, double level, const ScheduleConfig& cfg, double z) {
  cfg.validate();
  if (!(z > 0.0)) throw std::invalid_argument("order_adaptation: z must be > 0");
  if (!std::isfinite(delta) || !std::isfinite(level))
    throw std::invalid_argument("order_adaptation: non-finite controller state");
  AdaptationOrder o;
  o.direction = delta >= 0.0 ? ShiftDirection::AwayFromSource : ShiftDirection::TowardSource;
  o.k_l = cfg.kl_override ? *cfg.kl_override
          : delta >= 0.0  ? cfg.kl_max
                          : schedule_lerp(level, cfg, cfg.kl_min, cfg.kl_max);
  o.iterations = static_cast<int>(std::lround(o.k_l * std::abs(delta) / z));
  o.lr = schedule_lerp(level, cfg, cfg.lr_min, cfg.lr_max);
  o.alpha_mix = schedule_lerp(level, cfg, cfg.mix_min, cfg.mix_max);
  o.alpha_mask = schedule_lerp(level, cfg, cfg.mask_min, cfg.mask_max);
  return o;
}

double lr_at(const AdaptationOrder& order, int iteration) {
  if (iteration < 0 || iteration >= order.iterations)
    throw std::out_of_range("lr_at: iteration " + std::to_string(iteration) + " outside [0, " +
                            std::to_string(order.iterations) + ")");
  return order.lr * (1.0 - static_cast<double>(iteration) / order.iterations);
}

void ControllerConfig::validate() const {
  SignalState::make(bin_size, alpha);
  DiscreteState::make(z);
  schedule.validate();
  if (!(distance_scale >= 0.0) || !std::isfinite(distance_scale))
    throw std::invalid_argument("controller: distance_scale must be >= 0 (0 calibrates)");
  if (calibration_frames < 1) throw std::invalid_argument("controller: calibration_frames must be >= 1");
}

Controller::Controller(const ControllerConfig& cfg)
    : cfg_(cfg),
      signal_(SignalState::make(cfg.bin_size, cfg.alpha)),
      discrete_(DiscreteState::make(cfg.z)) {
  cfg_.schedule.validate();
}

std::optional<AdaptationOrder> Controller::step(int frame, double d) {
  const auto a = observe(signal_, d);
  if (!a) return std::nullopt;
  const DiscreteStep ds = discretize(discrete_, *a);
  TraceRow row{frame, d, *a, ds.level, ds.shift, ds.delta, {}};
  std::optional<AdaptationOrder> order;
  if (ds.shift) {
    order = order_adaptation(ds.delta, ds.level, cfg_.schedule, cfg_.z);
    row.order = *order;
  }
  trace_.push_back(row);
  return order;
}

std::string trace_csv_header() { return "frame,d,A,B,shift,dB,L,K_eta,alpha_mix,alpha_mask"; }

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  os << trace_csv_header() << '\n';
  char line[512];
  for (const TraceRow& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%d,%.17g,%d,%.17g,%.17g,%.17g\n", r.frame, r.d, r.a,
                  r.b, r.shift ? 1 : 0, r.delta, r.order.iterations, r.order.lr, r.order.alpha_mix,
                  r.order.alpha_mask);
    os << line;
  }
}

}  // namespace streamadapt
