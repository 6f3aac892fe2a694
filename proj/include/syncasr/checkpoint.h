// syncasr/checkpoint.h

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

#ifndef SYNCASR_CHECKPOINT_H_
#define SYNCASR_CHECKPOINT_H_

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "syncasr/binary-io.h"
#include "syncasr/tensor.h"

namespace syncasr {

/// Owns the trainable tensors of a model.  Addresses are stable, and the
/// registration order is the serialization order.
class ParameterSet {
 public:
  Parameter &Add(const std::string &name, Mat init);
  Parameter *Find(const std::string &name);
  const Parameter *Find(const std::string &name) const;

  std::vector<Parameter *> All();
  std::vector<const Parameter *> All() const;
  std::size_t size() const { return params_.size(); }
  std::size_t ScalarCount() const;

  void ZeroGrad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// One serialized tensor.  `dims` has rank 1 or 2; data is row-major.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  Mat value;
};

// Binary layout, all integers little-endian:
//   magic "SYNCCKPT" (8 bytes), u32 version (1), u32 tensor count,
//   per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
//   f64 data[prod(dims)] row-major.
inline constexpr char kCheckpointMagic[8] = {'S', 'Y', 'N', 'C',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void WriteCheckpoint(const std::string &path,
                     const std::vector<NamedTensor> &tensors);
std::vector<NamedTensor> ReadCheckpoint(const std::string &path);

std::vector<NamedTensor> Snapshot(const ParameterSet &params);
/// Copies values by name; every parameter must be present with equal shape.
void Restore(ParameterSet &params, const std::vector<NamedTensor> &tensors);

/// Arithmetic mean of each tensor across checkpoints.  Names, order and
/// shapes must agree; the error names the offending tensor.
std::vector<NamedTensor> AverageCheckpoints(
    const std::vector<std::vector<NamedTensor>> &checkpoints);
std::vector<NamedTensor> AverageCheckpointFiles(
    const std::vector<std::string> &paths);

}  // namespace syncasr

#endif  // SYNCASR_CHECKPOINT_H_
