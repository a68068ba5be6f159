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

#ifndef SKETCHTUNE_PIPELINE_HPP_
#define SKETCHTUNE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "sketchtune/config.hpp"
#include "sketchtune/ddpo.hpp"
#include "sketchtune/diffusion.hpp"
#include "sketchtune/vqa.hpp"

namespace sketchtune {

/// Seed of the frozen toy feature stack shared by the VAE perceptual loss and evaluation.
inline constexpr std::uint64_t kToyExtractorSeed = 0x5ce7c4;

struct ArtifactEntry {
  /// Relative to the run directory; files outside it keep their absolute path.
  std::string path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunRecord {
  std::string run_id;
  std::filesystem::path dir;
  std::string stage;
  nlohmann::json config;
  std::string input_hash;
  std::string status;
  std::string error;
  std::string started_at;
  std::string finished_at;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<ArtifactEntry> artifacts;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord load_run_record(const std::filesystem::path& run_dir);

/// SKETCHTUNE_RUNS_DIR, else paths.runs, else ./runs.
std::filesystem::path runs_root(const ExperimentConfig& cfg);

/// Executes one stage under runs/<timestamp>-<hash>/ and writes run.json last. Stage failures are
/// recorded with status "failed" and rethrown.
RunRecord run_stage(const ExperimentConfig& cfg);

/// Re-hashes every artifact of a completed run; returns the mismatching or missing paths.
std::vector<std::string> verify_run(const std::filesystem::path& run_dir);

/// "heuristic", "constant:<answer>", "http://host:port/path" or "none" (null).
std::unique_ptr<VqaBackend> make_backend(const std::string& spec);

/// A sampler restored from a unet or ddpo checkpoint: denoiser, schedule, text encoder and the
/// decoder from latents to images.
struct Generator {
  ToyDenoiser model;
  NoiseSchedule schedule;
  HashedTextEncoder encoder;
  LatentDecoder decode;
  nlohmann::json meta;

  /// Decoded sample; the reverse-process record is copied to trajectory when given.
  Raster generate(const std::string& prompt, std::uint64_t seed, DiffusionTrajectory* trajectory = nullptr) const;
};

/// Throws MissingPrerequisite("unet") when the file is absent or was not written by a unet or
/// ddpo stage, and MissingPrerequisite("vae") when a latent model's autoencoder is missing.
Generator load_generator(const std::filesystem::path& checkpoint,
                         const std::optional<std::filesystem::path>& vae_override = std::nullopt);

}  // namespace sketchtune

#endif  // SKETCHTUNE_PIPELINE_HPP_
