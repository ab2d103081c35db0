#include "streamadapt/checkpoint.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "binary_io.hpp"

namespace streamadapt {
namespace {

constexpr char kMagic[5] = "RDSC";

void append_params(std::vector<NamedTensor>& out, const std::string& prefix, const ModelParams& p) {
  for (std::size_t i = 0; i < p.tensors.size(); ++i)
    out.push_back({prefix + param_names()[i], p.tensors[i]});
}

ModelParams take_params(std::map<std::string, Tensor>& all, const std::string& prefix,
                        const ModelShape& shape) {
  ModelParams p = ModelParams::zeros(shape);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto it = all.find(prefix + param_names()[i]);
    if (it == all.end()) throw std::runtime_error("checkpoint is missing " + prefix + param_names()[i]);
    if (it->second.dims != p.tensors[i].dims)
      throw std::runtime_error("checkpoint tensor " + it->first + " has unexpected dims");
    p.tensors[i] = std::move(it->second);
  }
  p.touch();
  return p;
}

const Tensor& require(const std::map<std::string, Tensor>& all, const std::string& name) {
  auto it = all.find(name);
  if (it == all.end()) throw std::runtime_error("checkpoint is missing " + name);
  return it->second;
}

bool same_values(const ModelParams& a, const ModelParams& b) {
  if (!(a.shape == b.shape) || a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    if (!(a.tensors[i] == b.tensors[i])) return false;
  return true;
}

}  // namespace

Checkpoint Checkpoint::from_source(const ModelParams& source) {
  Checkpoint c{source, source, source, OptimState::for_params(source)};
  return c;
}

bool Checkpoint::operator==(const Checkpoint& o) const {
  return same_values(student, o.student) && same_values(teacher, o.teacher) &&
         same_values(statik, o.statik) && optim.m == o.optim.m && optim.v == o.optim.v &&
         optim.step == o.optim.step;
}

void write_named_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  using namespace detail;
  put_magic(os, kMagic);
  put<std::uint16_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, checked_narrow<std::uint32_t>(tensors.size(), "tensor count"));
  for (const auto& nt : tensors) {
    nt.tensor.check_invariant();
    put<std::uint16_t>(os, checked_narrow<std::uint16_t>(nt.name.size(), "tensor name"));
    put_bytes(os, nt.name.data(), nt.name.size());
    put<std::uint8_t>(os, checked_narrow<std::uint8_t>(nt.tensor.rank(), "tensor rank"));
    for (auto d : nt.tensor.dims) put<std::uint32_t>(os, checked_narrow<std::uint32_t>(d, "tensor dim"));
    put_floats(os, nt.tensor.data);
  }
}

std::vector<NamedTensor> read_named_tensors(std::istream& is) {
  using namespace detail;
  expect_magic(is, kMagic, "checkpoint");
  const auto version = get<std::uint16_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name.resize(get<std::uint16_t>(is));
    get_bytes(is, nt.name.data(), nt.name.size());
    const auto rank = get<std::uint8_t>(is);
    for (int r = 0; r < rank; ++r) nt.tensor.dims.push_back(get<std::uint32_t>(is));
    nt.tensor.data = get_floats(is, Tensor::element_count(nt.tensor.dims));
    out.push_back(std::move(nt));
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  append_params(tensors, "student/", ckpt.student);
  append_params(tensors, "teacher/", ckpt.teacher);
  append_params(tensors, "static/", ckpt.statik);
  for (std::size_t i = 0; i < ckpt.optim.m.size(); ++i) {
    tensors.push_back({"optim/m/" + param_names()[i], ckpt.optim.m[i]});
    tensors.push_back({"optim/v/" + param_names()[i], ckpt.optim.v[i]});
  }
  tensors.push_back({"optim/step", Tensor({1}, static_cast<float>(ckpt.optim.step))});
  Tensor dil({4});
  for (int b = 0; b < 4; ++b) dil.data[b] = static_cast<float>(ckpt.student.shape.dilations[b]);
  tensors.push_back({"meta/dilations", dil});
  tensors.push_back({"meta/light_block", Tensor({1}, static_cast<float>(ckpt.student.shape.light_block))});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_named_tensors(os, tensors);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::map<std::string, Tensor> all;
  for (auto& nt : read_named_tensors(is)) {
    const std::string name = nt.name;
    if (!all.emplace(name, std::move(nt.tensor)).second)
      throw std::runtime_error("checkpoint has duplicate tensor " + name);
  }

  ModelShape shape;
  const Tensor& w1 = require(all, "student/m1.weight");
  if (w1.rank() != 4) throw std::runtime_error("checkpoint: m1.weight must be rank 4");
  shape.in_channels = static_cast<int>(w1.dims[1]);
  for (int b = 0; b < 4; ++b) {
    const Tensor& w = require(all, "student/m" + std::to_string(b + 1) + ".weight");
    if (w.rank() != 4) throw std::runtime_error("checkpoint: conv weights must be rank 4");
    shape.widths[b] = static_cast<int>(w.dims[0]);
  }
  const Tensor& head = require(all, "student/head.weight");
  if (head.rank() != 2) throw std::runtime_error("checkpoint: head.weight must be rank 2");
  shape.class_count = static_cast<int>(head.dims[0]);
  const Tensor& dil = require(all, "meta/dilations");
  if (dil.size() != 4) throw std::runtime_error("checkpoint: meta/dilations must hold 4 values");
  for (int b = 0; b < 4; ++b) shape.dilations[b] = static_cast<int>(dil.data[b]);
  shape.light_block = static_cast<int>(require(all, "meta/light_block").data.at(0));
  shape.validate();

  Checkpoint c;
  c.student = take_params(all, "student/", shape);
  c.teacher = take_params(all, "teacher/", shape);
  c.statik = take_params(all, "static/", shape);
  c.optim = OptimState::for_params(c.student);
  for (std::size_t i = 0; i < c.optim.m.size(); ++i) {
    for (auto* kind : {"m", "v"}) {
      const std::string name = std::string("optim/") + kind + "/" + param_names()[i];
      Tensor t = require(all, name);
      if (t.dims != c.student.tensors[i].dims)
        throw std::runtime_error("checkpoint tensor " + name + " has unexpected dims");
      (kind[0] == 'm' ? c.optim.m[i] : c.optim.v[i]) = std::move(t);
    }
  }
  c.optim.step = static_cast<std::int64_t>(require(all, "optim/step").data.at(0));
  return c;
}

}  // namespace streamadapt
