#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamadapt/tinyseg.hpp"

namespace streamadapt {

// RDSC: "RDSC", version u16, tensor count u32, then per tensor: name length
// u16 + UTF-8 name, rank u8, dims u32 each, float32 little-endian data.
// Tensor names: "<student|teacher|static>/<param>", "optim/m/<param>",
// "optim/v/<param>", "optim/step", "meta/dilations", "meta/light_block".
struct Checkpoint {
  ModelParams student;
  ModelParams teacher;
  ModelParams statik;  // frozen source model
  OptimState optim;

  // All three networks and a fresh optimizer from one parameter set.
  static Checkpoint from_source(const ModelParams& source);
  bool operator==(const Checkpoint& o) const;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_named_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_named_tensors(std::istream& is);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace streamadapt
