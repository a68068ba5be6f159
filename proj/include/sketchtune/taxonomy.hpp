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

#ifndef SKETCHTUNE_TAXONOMY_HPP_
#define SKETCHTUNE_TAXONOMY_HPP_

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace sketchtune {

struct Category {
  std::string_view name;
  std::span<const std::string_view> classes;
};

/// The six SketchDUO categories and their thirty classes.
std::span<const Category> categories();

/// Number of classes across all categories (30).
std::size_t class_count();

/// Canonical class spelling ("Alarm Clock") for a case/underscore-insensitive match.
std::optional<std::string_view> canonical_class(std::string_view name);

/// Canonical category name owning a class, if the class is known.
std::optional<std::string_view> category_of(std::string_view class_name);

/// Canonical category spelling for a case-insensitive match.
std::optional<std::string_view> canonical_category(std::string_view name);

/// Lowercases and maps underscores to spaces.
std::string fold_name(std::string_view name);

}  // namespace sketchtune

#endif  // SKETCHTUNE_TAXONOMY_HPP_
