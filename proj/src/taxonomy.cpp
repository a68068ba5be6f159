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

#include "sketchtune/taxonomy.hpp"

#include <array>
#include <cctype>

namespace sketchtune {

namespace {

constexpr std::array<std::string_view, 4> kFashion = {"Hat", "Shoe", "T-shirt", "Umbrella"};
constexpr std::array<std::string_view, 8> kAnimals = {"Butterfly", "Cat",      "Cow",   "Dog",
                                                      "Elephant",  "Fish",     "Horse", "Rabbit"};
constexpr std::array<std::string_view, 5> kNature = {"Flower", "Leaf", "Moon", "Sun", "Tree"};
constexpr std::array<std::string_view, 4> kFictional = {"Angel", "Mermaid", "Snowman", "Teddy Bear"};
constexpr std::array<std::string_view, 5> kFood = {"Apple", "Banana", "Cake", "Pineapple", "Strawberry"};
constexpr std::array<std::string_view, 4> kHousehold = {"Alarm Clock", "Bicycle", "House", "Mug"};

const std::array<Category, 6> kCategories = {{
    {"Fashion Items", kFashion},
    {"Animals", kAnimals},
    {"Nature & Environment", kNature},
    {"Fictional Characters & Symbols", kFictional},
    {"Fruits & Food", kFood},
    {"Household Items", kHousehold},
}};

}  // namespace

std::span<const Category> categories() { return kCategories; }

std::size_t class_count() {
  std::size_t n = 0;
  for (const auto& c : kCategories) n += c.classes.size();
  return n;
}

std::string fold_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) out.push_back(c == '_' ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::optional<std::string_view> canonical_class(std::string_view name) {
  const auto folded = fold_name(name);
  for (const auto& cat : kCategories)
    for (auto cls : cat.classes)
      if (fold_name(cls) == folded) return cls;
  return std::nullopt;
}

std::optional<std::string_view> category_of(std::string_view class_name) {
  const auto folded = fold_name(class_name);
  for (const auto& cat : kCategories)
    for (auto cls : cat.classes)
      if (fold_name(cls) == folded) return cat.name;
  return std::nullopt;
}

std::optional<std::string_view> canonical_category(std::string_view name) {
  const auto folded = fold_name(name);
  for (const auto& cat : kCategories)
    if (fold_name(cat.name) == folded) return cat.name;
  return std::nullopt;
}

}  // namespace sketchtune
