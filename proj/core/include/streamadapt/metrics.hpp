#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "streamadapt/image.hpp"

namespace streamadapt {

// K x K counts, row = truth, column = prediction.
struct ConfusionMatrix {
  int class_count = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(int class_count = 0);
  // Throws std::invalid_argument on a shape mismatch or an id >= K.
  void add(const LabelMap& prediction, const LabelMap& truth);
  std::uint64_t at(int truth, int prediction) const {
    return counts[static_cast<std::size_t>(truth) * class_count + prediction];
  }
};

struct MiouResult {
  std::vector<double> iou;       // per class; NaN when absent from both prediction and truth
  std::vector<std::uint8_t> present;
  double miou = 0.0;             // mean over present classes
};

// IoU_c = TP / (TP + FP + FN); classes absent from both sides are excluded.
MiouResult compute_miou(const ConfusionMatrix& cm);
MiouResult compute_miou(std::span<const LabelMap> predictions, std::span<const LabelMap> truths,
                        int class_count);

// n / sum(1/v_i); throws std::invalid_argument when the list is empty or any
// value is <= 0.
double h_miou(std::span<const double> values);

}  // namespace streamadapt
