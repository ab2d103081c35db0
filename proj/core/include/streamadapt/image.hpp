#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace streamadapt {

using ClassId = std::uint8_t;

// Channel-planar image with values in [0,1]. Plane c occupies
// data[c*H*W, (c+1)*H*W), rows are contiguous inside a plane.
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Frame() = default;
  Frame(int w, int h, int c = 3, float fill = 0.0f);

  std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
  std::span<float> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

  float& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const Frame&) const = default;
};

// Per-pixel class ids, row-major, same spatial shape as its Frame.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<ClassId> ids;

  LabelMap() = default;
  LabelMap(int w, int h, ClassId fill = 0);

  std::size_t size() const { return ids.size(); }
  ClassId& at(int y, int x) { return ids[static_cast<std::size_t>(y) * width + x]; }
  ClassId at(int y, int x) const { return ids[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

// Throws std::invalid_argument when values leave [0,1] or the buffer size is wrong.
void validate(const Frame& frame);
// Throws std::invalid_argument when an id is >= class_count or the buffer size is wrong.
void validate(const LabelMap& labels, int class_count);

// 0.299 R + 0.587 G + 0.114 B; single-channel frames are returned as-is.
std::vector<double> luminance(const Frame& frame);

}  // namespace streamadapt
