#include "streamadapt/frame_io.hpp"

#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace streamadapt {

using namespace detail;

void write_frame(std::ostream& os, const Frame& frame) {
  if (frame.data.size() != frame.plane_size() * frame.channels)
    throw std::invalid_argument("write_frame: buffer does not match shape");
  put_magic(os, "RDSF");
  put<std::uint16_t>(os, kFrameFileVersion);
  put<std::uint16_t>(os, checked_narrow<std::uint16_t>(frame.width, "frame width"));
  put<std::uint16_t>(os, checked_narrow<std::uint16_t>(frame.height, "frame height"));
  put<std::uint8_t>(os, checked_narrow<std::uint8_t>(frame.channels, "frame channels"));
  put_floats(os, frame.data);
}

Frame read_frame(std::istream& is) {
  expect_magic(is, "RDSF", "frame file");
  if (get<std::uint16_t>(is) != kFrameFileVersion) throw std::runtime_error("frame file: unsupported version");
  const int w = get<std::uint16_t>(is);
  const int h = get<std::uint16_t>(is);
  const int c = get<std::uint8_t>(is);
  Frame f(w, h, c);
  f.data = get_floats(is, f.data.size());
  return f;
}

void write_labels(std::ostream& os, const LabelMap& labels) {
  if (labels.ids.size() != static_cast<std::size_t>(labels.width) * labels.height)
    throw std::invalid_argument("write_labels: buffer does not match shape");
  put_magic(os, "RDSL");
  put<std::uint16_t>(os, kFrameFileVersion);
  put<std::uint16_t>(os, checked_narrow<std::uint16_t>(labels.width, "label width"));
  put<std::uint16_t>(os, checked_narrow<std::uint16_t>(labels.height, "label height"));
  put_bytes(os, labels.ids.data(), labels.ids.size());
}

LabelMap read_labels(std::istream& is) {
  expect_magic(is, "RDSL", "label file");
  if (get<std::uint16_t>(is) != kFrameFileVersion) throw std::runtime_error("label file: unsupported version");
  const int w = get<std::uint16_t>(is);
  const int h = get<std::uint16_t>(is);
  LabelMap l(w, h);
  get_bytes(is, l.ids.data(), l.ids.size());
  return l;
}

void save_frame(const Frame& frame, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_frame(os, frame);
}

Frame load_frame(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_frame(is);
}

void save_labels(const LabelMap& labels, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_labels(os, labels);
}

LabelMap load_labels(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_labels(is);
}

}  // namespace streamadapt
