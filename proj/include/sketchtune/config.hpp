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

#ifndef SKETCHTUNE_CONFIG_HPP_
#define SKETCHTUNE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace sketchtune {

enum class Stage { dataset, vae, unet, ddpo, eval, generate };
enum class Mode { toy, real };

std::string to_string(Stage s);
std::string to_string(Mode m);
std::optional<Stage> parse_stage(const std::string& s);
std::optional<Mode> parse_mode(const std::string& s);

struct ConfigIssue {
  std::string field;
  std::string message;
};

struct ConfigCheck {
  std::vector<ConfigIssue> errors;
  std::vector<ConfigIssue> warnings;
  bool ok() const { return errors.empty(); }
};

/// Reads a JSON config tree. Entries of "include" (a string or array, relative to the including
/// file) are loaded first and the including file is merge-patched over them. Relative values under
/// "paths" are made absolute against the directory of the file that sets them.
nlohmann::json load_config_tree(const std::filesystem::path& path);

/// Built-in defaults for every section.
nlohmann::json default_config_tree();

/// Schema, range and path checks on a tree; never throws and never touches the filesystem
/// beyond existence checks.
ConfigCheck check_config(const nlohmann::json& tree);

/// Loads and checks a config file. Load failures are reported as errors on the "file" field.
ConfigCheck validate_config(const std::filesystem::path& path);

struct ExperimentConfig {
  Stage stage = Stage::dataset;
  Mode mode = Mode::toy;
  std::uint64_t seed = 0;
  /// Defaults merged under the user tree; "include" removed.
  nlohmann::json tree;
  std::vector<ConfigIssue> warnings;

  const nlohmann::json& section(const std::string& name) const { return tree.at(name); }
  /// Value of paths.<key> when set and non-empty.
  std::optional<std::filesystem::path> path(const std::string& key) const;
};

/// Checks the tree and applies defaults. Throws ConfigInvalid for the first error.
ExperimentConfig make_config(const nlohmann::json& tree);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace sketchtune

#endif  // SKETCHTUNE_CONFIG_HPP_
