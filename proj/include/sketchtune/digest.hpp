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

#ifndef SKETCHTUNE_DIGEST_HPP_
#define SKETCHTUNE_DIGEST_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace sketchtune {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// 64-bit FNV-1a; stable across platforms, used for token hashing.
std::uint64_t fnv1a64(std::string_view text);

/// Mixes a base seed with a tag into an independent stream seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace sketchtune

#endif  // SKETCHTUNE_DIGEST_HPP_
