#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "streamadapt/image.hpp"

namespace streamadapt {

// RDSF: "RDSF", version u16, width u16, height u16, channels u8, then
// float32 little-endian planar pixel data.
// RDSL: "RDSL", version u16, width u16, height u16, then u8 ids.
inline constexpr std::uint16_t kFrameFileVersion = 1;

void write_frame(std::ostream& os, const Frame& frame);
Frame read_frame(std::istream& is);
void write_labels(std::ostream& os, const LabelMap& labels);
LabelMap read_labels(std::istream& is);

void save_frame(const Frame& frame, const std::filesystem::path& path);
Frame load_frame(const std::filesystem::path& path);
void save_labels(const LabelMap& labels, const std::filesystem::path& path);
LabelMap load_labels(const std::filesystem::path& path);

}  // namespace streamadapt
