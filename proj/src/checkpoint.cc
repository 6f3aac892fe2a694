// syncasr/checkpoint.cc

// Copyright 2026   syncasr authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "syncasr/checkpoint.h"

#include <cstring>
#include <fstream>


namespace syncasr {

Parameter &ParameterSet::Add(const std::string &name, Mat init) {
  if (Find(name) != nullptr)
    throw ContractError("duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  return *params_.back();
}

Parameter *ParameterSet::Find(const std::string &name) {
  for (auto &p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter *ParameterSet::Find(const std::string &name) const {
  for (const auto &p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::vector<Parameter *> ParameterSet::All() {
  std::vector<Parameter *> out;
  for (auto &p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter *> ParameterSet::All() const {
  std::vector<const Parameter *> out;
  for (const auto &p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::ScalarCount() const {
  std::size_t n = 0;
  for (const auto &p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterSet::ZeroGrad() {
  for (auto &p : params_) p->ZeroGrad();
}

void WriteCheckpoint(const std::string &path,
                     const std::vector<NamedTensor> &tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  WriteU32(os, kCheckpointVersion);
  WriteU32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor &t : tensors) {
    WriteU32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    WriteU32(os, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) WriteU32(os, d);
    for (Eigen::Index i = 0; i < t.value.size(); ++i)
      WriteF64(os, t.value.data()[i]);
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<NamedTensor> ReadCheckpoint(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  ByteReader in(is, path);
  char magic[sizeof(kCheckpointMagic)];
  in.Read(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw FormatError(path + ": bad checkpoint magic at byte 0");
  const std::uint32_t version = in.U32();
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version) + " at byte 8");
  const std::uint32_t count = in.U32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const std::uint32_t len = in.U32();
    t.name.resize(len);
    in.Read(t.name.data(), len);
    const std::uint32_t rank = in.U32();
    if (rank < 1 || rank > 2)
      throw FormatError(path + ": tensor " + t.name + " has rank " +
                        std::to_string(rank) + " at byte " +
                        std::to_string(in.position()));
    for (std::uint32_t r = 0; r < rank; ++r) t.dims.push_back(in.U32());
    const Eigen::Index rows = rank == 2 ? t.dims[0] : 1;
    const Eigen::Index cols = rank == 2 ? t.dims[1] : t.dims[0];
    t.value.resize(rows, cols);
    for (Eigen::Index i = 0; i < t.value.size(); ++i)
      t.value.data()[i] = in.F64();
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> Snapshot(const ParameterSet &params) {
  std::vector<NamedTensor> out;
  for (const Parameter *p : params.All())
    out.push_back({p->name,
                   {static_cast<std::uint32_t>(p->value.rows()),
                    static_cast<std::uint32_t>(p->value.cols())},
                   p->value});
  return out;
}

void Restore(ParameterSet &params, const std::vector<NamedTensor> &tensors) {
  for (Parameter *p : params.All()) {
    const NamedTensor *found = nullptr;
    for (const NamedTensor &t : tensors)
      if (t.name == p->name) found = &t;
    if (found == nullptr)
      throw FormatError("checkpoint is missing parameter " + p->name);
    if (found->value.rows() != p->value.rows() ||
        found->value.cols() != p->value.cols())
      throw DimensionError("parameter " + p->name + ": checkpoint shape " +
                           ShapeString(found->value) + " vs model shape " +
                           ShapeString(p->value));
    p->value = found->value;
  }
}

std::vector<NamedTensor> AverageCheckpoints(
    const std::vector<std::vector<NamedTensor>> &checkpoints) {
  if (checkpoints.empty()) throw ContractError("no checkpoints to average");
  std::vector<NamedTensor> mean = checkpoints.front();
  for (std::size_t c = 1; c < checkpoints.size(); ++c) {
    const auto &ck = checkpoints[c];
    if (ck.size() != mean.size())
      throw FormatError("checkpoint " + std::to_string(c) + " has " +
                        std::to_string(ck.size()) + " tensors, expected " +
                        std::to_string(mean.size()));
    for (std::size_t i = 0; i < mean.size(); ++i) {
      if (ck[i].name != mean[i].name)
        throw FormatError("checkpoint " + std::to_string(c) +
                          ": tensor name " + ck[i].name + " where " +
                          mean[i].name + " was expected");
      if (ck[i].dims != mean[i].dims)
        throw DimensionError("checkpoint " + std::to_string(c) +
                             ": shape mismatch for parameter " + ck[i].name);
      mean[i].value += ck[i].value;
    }
  }
  for (NamedTensor &t : mean)
    t.value /= static_cast<double>(checkpoints.size());
  return mean;
}

std::vector<NamedTensor> AverageCheckpointFiles(
    const std::vector<std::string> &paths) {
  std::vector<std::vector<NamedTensor>> all;
  for (const std::string &p : paths) all.push_back(ReadCheckpoint(p));
  return AverageCheckpoints(all);
}

}  // namespace syncasr
