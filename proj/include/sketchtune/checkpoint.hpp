// Copyright 2026 The sketchtune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SKETCHTUNE_CHECKPOINT_HPP_
#define SKETCHTUNE_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sketchtune/autodiff.hpp"

namespace sketchtune {

using Json = nlohmann::json;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Single-file archive of named f64 tensors plus run metadata.
///
/// Layout: 8-byte magic "SKTCKPT\0", u32 version, u64 header length, a JSON header
/// ({kind, epoch, rng_state, config, meta, tensors:[{name, shape, dtype, offset, nbytes}]}),
/// then the tensor payload as little-endian column-major doubles.
struct Checkpoint {
  std::string kind;
  long long epoch = 0;
  std::string rng_state;
  Json config = Json::object();
  Json meta = Json::object();
  std::vector<std::pair<std::string, ad::Matrix>> tensors;

  const ad::Matrix& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;

  void put_params(const ad::ParameterSet& params, const std::string& prefix = "");
  /// Copies stored tensors into params; every parameter must be present with a matching shape.
  void get_params(ad::ParameterSet& params, const std::string& prefix = "") const;
};

/// Writes to a sibling temp file and renames over the target.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Atomic text/binary file write (temp + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace sketchtune

#endif  // SKETCHTUNE_CHECKPOINT_HPP_
