#include "streamadapt/image.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace streamadapt {

Frame::Frame(int w, int h, int c, float fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {
  if (w <= 0 || h <= 0 || c <= 0) throw std::invalid_argument("Frame: non-positive shape");
}

LabelMap::LabelMap(int w, int h, ClassId fill)
    : width(w), height(h), ids(static_cast<std::size_t>(w) * h, fill) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("LabelMap: non-positive shape");
}

void validate(const Frame& frame) {
  if (frame.width <= 0 || frame.height <= 0 || frame.channels <= 0)
    throw std::invalid_argument("frame has a non-positive dimension");
  if (frame.data.size() != frame.plane_size() * frame.channels)
    throw std::invalid_argument("frame buffer size does not match its shape");
  for (float v : frame.data) {
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::invalid_argument("frame value outside [0,1]: " + std::to_string(v));
  }
}

void validate(const LabelMap& labels, int class_count) {
  if (labels.ids.size() != static_cast<std::size_t>(labels.width) * labels.height)
    throw std::invalid_argument("label buffer size does not match its shape");
  for (ClassId id : labels.ids) {
    if (id >= class_count)
      throw std::invalid_argument("label id " + std::to_string(id) + " >= class count " +
                                  std::to_string(class_count));
  }
}

std::vector<double> luminance(const Frame& frame) {
  const std::size_t n = frame.plane_size();
  std::vector<double> out(n);
  if (frame.channels < 3) {
    for (std::size_t i = 0; i < n; ++i) out[i] = frame.data[i];
    return out;
  }
  const float* r = frame.data.data();
  const float* g = r + n;
  const float* b = g + n;
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

}  // namespace streamadapt
