#include "streamadapt/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace streamadapt {

ConfusionMatrix::ConfusionMatrix(int k) : class_count(k), counts(static_cast<std::size_t>(k) * k, 0) {
  if (k < 0) throw std::invalid_argument("ConfusionMatrix: negative class count");
}

void ConfusionMatrix::add(const LabelMap& prediction, const LabelMap& truth) {
  if (prediction.width != truth.width || prediction.height != truth.height ||
      prediction.ids.size() != truth.ids.size())
    throw std::invalid_argument("compute_miou: prediction and truth differ in shape");
  for (std::size_t i = 0; i < truth.ids.size(); ++i) {
    const int t = truth.ids[i], p = prediction.ids[i];
    if (t >= class_count || p >= class_count) throw std::invalid_argument("compute_miou: class id out of range");
    ++counts[static_cast<std::size_t>(t) * class_count + p];
  }
}

MiouResult compute_miou(const ConfusionMatrix& cm) {
  const int k = cm.class_count;
  MiouResult r;
  r.iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.present.assign(k, 0);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    r.present[c] = 1;
    sum += r.iou[c];
    ++n;
  }
  r.miou = n > 0 ? sum / n : 0.0;
  return r;
}

MiouResult compute_miou(std::span<const LabelMap> predictions, std::span<const LabelMap> truths,
                        int class_count) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("compute_miou: prediction and truth counts differ");
  ConfusionMatrix cm(class_count);
  for (std::size_t i = 0; i < truths.size(); ++i) cm.add(predictions[i], truths[i]);
  return compute_miou(cm);
}

double h_miou(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("h_miou: no values");
  double inv = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw std::invalid_argument("h_miou: every value must be > 0");
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

}  // namespace streamadapt
