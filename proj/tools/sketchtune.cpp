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

// Command-line entry point. Every training or evaluation command builds an experiment config from
// an optional --config file plus flag overrides and runs one stage in a fresh run directory.

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "sketchtune/config.hpp"
#include "sketchtune/error.hpp"
#include "sketchtune/pipeline.hpp"
#include "sketchtune/vae.hpp"
#include "sketchtune/vqa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sketchtune;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kPrerequisite = 3, kDivergence = 4 };

void set_field(json& j, const std::string& dotted, json value) {
  json* cur = &j;
  std::size_t start = 0;
  for (auto dot = dotted.find('.'); dot != std::string::npos; dot = dotted.find('.', start)) {
    cur = &(*cur)[dotted.substr(start, dot - start)];
    start = dot + 1;
  }
  (*cur)[dotted.substr(start)] = std::move(value);
}

/// Collects flag overrides for one command.
class Overrides {
 public:
  explicit Overrides(CLI::App* app) : app_(app) {}

  template <class T>
  void bind(const std::string& flag, const std::string& field, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    apply_.push_back([=](json& j) {
      if (opt->count()) set_field(j, field, *value);
    });
  }

  void bind_path(const std::string& flag, const std::string& field, const std::string& help) {
    auto value = std::make_shared<std::string>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    apply_.push_back([=](json& j) {
      if (opt->count()) set_field(j, field, fs::absolute(*value).lexically_normal().string());
    });
  }

  void bind_flag(const std::string& flag, const std::string& field, bool value, const std::string& help) {
    CLI::Option* opt = app_->add_flag(flag, help);
    apply_.push_back([=](json& j) {
      if (opt->count()) set_field(j, field, value);
    });
  }

  void bind_list(const std::string& flag, const std::string& field, const std::string& help) {
    auto value = std::make_shared<std::string>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    apply_.push_back([=](json& j) {
      if (!opt->count()) return;
      json list = json::array();
      std::stringstream ss(*value);
      for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) list.push_back(item);
      set_field(j, field, list);
    });
  }

  void apply(json& j) const {
    for (const auto& f : apply_) f(j);
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> apply_;
};

struct StageCommand {
  std::string config_file;
  std::unique_ptr<Overrides> overrides;
  json fixed = json::object();
};

int report_error(const std::exception& e) {
  if (const auto* c = dynamic_cast<const ConfigInvalid*>(&e)) {
    std::cerr << "config error: " << c->what() << "\n";
    return kConfigError;
  }
  if (const auto* p = dynamic_cast<const MissingPrerequisite*>(&e)) {
    std::cerr << "missing prerequisite: " << p->stage() << "\n";
    return kPrerequisite;
  }
  if (dynamic_cast<const DivergenceDetected*>(&e)) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  }
  std::cerr << "error: " << e.what() << "\n";
  return kFailure;
}

int run_command(const StageCommand& cmd) {
  json tree = json::object();
  if (!cmd.config_file.empty()) {
    try {
      tree = load_config_tree(cmd.config_file);
    } catch (const ConfigInvalid&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigInvalid("file", e.what());
    }
  }
  tree.merge_patch(cmd.fixed);
  cmd.overrides->apply(tree);
  const ExperimentConfig cfg = make_config(tree);
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w.field << ": " << w.message << "\n";
  const RunRecord rec = run_stage(cfg);
  std::cout << "run: " << rec.dir.string() << "\n" << rec.summary.dump(2) << "\n";
  if (rec.summary.contains("ok") && !rec.summary["ok"].get<bool>()) return kFailure;
  return kOk;
}

StageCommand& add_stage(CLI::App* sub, std::vector<std::unique_ptr<StageCommand>>& cmds, json fixed) {
  cmds.push_back(std::make_unique<StageCommand>());
  StageCommand& c = *cmds.back();
  c.fixed = std::move(fixed);
  c.overrides = std::make_unique<Overrides>(sub);
  sub->add_option("--config", c.config_file, "experiment config (JSON)");
  c.overrides->bind<std::uint64_t>("--seed", "seed", "random seed");
  c.overrides->bind_path("--runs", "paths.runs", "runs root (SKETCHTUNE_RUNS_DIR wins)");
  c.overrides->bind<std::string>("--mode", "mode", "toy or real");
  sub->callback([&c] { throw CLI::RuntimeError(run_command(c)); });
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sketchtune: sketch-style fine-tuning toolkit"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<StageCommand>> cmds;

  auto* dataset = app.add_subcommand("dataset", "dataset tools");
  dataset->require_subcommand(1);
  {
    auto& c = add_stage(dataset->add_subcommand("validate", "check a manifest"), cmds,
                        {{"stage", "dataset"}, {"dataset", {{"action", "validate"}}}});
    c.overrides->bind_path("--data", "paths.data", "manifest to check");
    c.overrides->bind_flag("--skip-images", "dataset.check_images", false, "do not open image files");
  }
  {
    auto& c = add_stage(dataset->add_subcommand("augment", "expand originals with the augmentation menu"), cmds,
                        {{"stage", "dataset"}, {"dataset", {{"action", "augment"}}}});
    c.overrides->bind_path("--data", "paths.data", "manifest of originals");
    c.overrides->bind_path("--out", "paths.output", "output directory (default: inside the run)");
  }
  {
    auto& c = add_stage(dataset->add_subcommand("split", "stratified train/test split"), cmds,
                        {{"stage", "dataset"}, {"dataset", {{"action", "split"}}}});
    c.overrides->bind_path("--data", "paths.data", "manifest to split");
    c.overrides->bind<double>("--fraction", "dataset.train_fraction", "training fraction");
    c.overrides->bind_path("--out", "paths.output", "output directory (default: inside the run)");
  }
  {
    auto& c = add_stage(dataset->add_subcommand("synth", "procedural toy dataset"), cmds,
                        {{"stage", "dataset"}, {"dataset", {{"action", "synth"}}}});
    c.overrides->bind<std::size_t>("--positives", "dataset.positive_originals", "positive originals");
    c.overrides->bind<std::size_t>("--negatives", "dataset.negative_originals", "negative originals");
    c.overrides->bind<int>("--size", "dataset.size", "image side in pixels");
    c.overrides->bind_path("--out", "paths.output", "output directory (default: inside the run)");
  }

  auto* vae = app.add_subcommand("vae", "autoencoder fine-tuning");
  vae->require_subcommand(1);
  {
    auto& c = add_stage(vae->add_subcommand("train", "train the toy autoencoder"), cmds, {{"stage", "vae"}});
    c.overrides->bind_path("--data", "paths.data", "training manifest");
    c.overrides->bind<int>("--epochs", "vae.epochs", "epochs");
    c.overrides->bind<double>("--lr", "vae.learning_rate", "learning rate");
    c.overrides->bind<double>("--lambda", "vae.lpips_weight", "perceptual loss weight");
    c.overrides->bind<double>("--kl-weight", "vae.kl_weight", "KL weight");
  }
  std::string rec_ckpt, rec_in, rec_out;
  auto* reconstruct = vae->add_subcommand("reconstruct", "reconstruct one image through a checkpoint");
  reconstruct->add_option("--ckpt", rec_ckpt, "autoencoder checkpoint")->required();
  reconstruct->add_option("--in", rec_in, "input PNG")->required();
  reconstruct->add_option("--out", rec_out, "output PNG: input and reconstruction side by side")->required();
  reconstruct->callback([&] {
    const ToyAutoencoder model = ToyAutoencoder::from_checkpoint(load_checkpoint(rec_ckpt));
    const Raster in = Raster(read_png(rec_in).luma());
    const int size = model.config().image_size;
    if (in.height() != size || in.width() != size)
      throw ShapeMismatch("image must be " + std::to_string(size) + "x" + std::to_string(size));
    const Eigen::MatrixXd out = model.reconstruct(unit_column(in));
    const Raster tiles[] = {in, gray_from_column(out.col(0), size, size)};
    write_png(rec_out, hconcat(tiles));
  });

  auto* unet = app.add_subcommand("unet", "denoiser fine-tuning");
  unet->require_subcommand(1);
  {
    auto& c = add_stage(unet->add_subcommand("train", "train the toy denoiser"), cmds, {{"stage", "unet"}});
    c.overrides->bind_path("--data", "paths.data", "training manifest");
    c.overrides->bind_path("--vae-ckpt", "paths.vae_checkpoint", "autoencoder checkpoint (latent mode)");
    c.overrides->bind<int>("--epochs", "unet.epochs", "epochs");
    c.overrides->bind<int>("--steps", "unet.steps", "diffusion steps T");
    c.overrides->bind_flag("--pixel", "unet.latent", false, "diffuse downsampled pixels instead of latents");
  }

  auto* ddpo = app.add_subcommand("ddpo", "reward fine-tuning");
  ddpo->require_subcommand(1);
  {
    auto& c = add_stage(ddpo->add_subcommand("train", "policy-gradient fine-tuning"), cmds, {{"stage", "ddpo"}});
    c.overrides->bind_path("--data", "paths.data", "manifest supplying prompts and QA sets");
    c.overrides->bind_path("--unet-ckpt", "paths.unet_checkpoint", "denoiser checkpoint from a unet run");
    c.overrides->bind_path("--vae-ckpt", "paths.vae_checkpoint", "override the autoencoder checkpoint");
    c.overrides->bind_path("--resume", "paths.resume", "DDPO checkpoint to resume from");
    c.overrides->bind<int>("--updates", "ddpo.updates", "number of updates");
    c.overrides->bind<std::string>("--reward", "ddpo.reward", "whiteness or vqa");
    c.overrides->bind<std::string>("--backend", "ddpo.backend", "VQA backend");
    c.overrides->bind<double>("--alpha", "ddpo.alpha", "instance/sketch reward blend");
  }

  // Two forms: --prompt --out writes one image directly; otherwise a run samples every manifest prompt.
  std::string gen_prompt, gen_out, gen_traj;
  {
    auto* sub = app.add_subcommand("generate", "sample images from a denoiser checkpoint");
    auto& c = add_stage(sub, cmds, {{"stage", "generate"}});
    c.overrides->bind_path("--data", "paths.data", "manifest supplying prompts");
    c.overrides->bind_path("--ckpt", "paths.unet_checkpoint", "unet or ddpo checkpoint");
    c.overrides->bind_path("--vae-ckpt", "paths.vae_checkpoint", "override the autoencoder checkpoint");
    c.overrides->bind<std::size_t>("--limit", "generate.limit", "maximum number of prompts (0 = all)");
    sub->add_option("--prompt", gen_prompt, "sample a single prompt instead of a manifest");
    sub->add_option("--out", gen_out, "output PNG for --prompt");
    sub->add_option("--traj", gen_traj, "also write the reverse-process trajectory");
    sub->callback([&c, &gen_prompt, &gen_out, &gen_traj] {
      if (gen_prompt.empty()) throw CLI::RuntimeError(run_command(c));
      if (gen_out.empty()) throw ConfigInvalid("out", "--prompt needs --out");
      json tree = json::object();
      c.overrides->apply(tree);
      const auto* ckpt = tree.contains("paths") ? &tree["paths"] : nullptr;
      if (!ckpt || !ckpt->contains("unet_checkpoint")) throw ConfigInvalid("ckpt", "--prompt needs --ckpt");
      std::optional<fs::path> vae;
      if (ckpt->contains("vae_checkpoint")) vae = ckpt->at("vae_checkpoint").get<std::string>();
      const Generator gen = load_generator(ckpt->at("unet_checkpoint").get<std::string>(), vae);
      const std::uint64_t seed = tree.value("seed", std::uint64_t{0});
      DiffusionTrajectory traj;
      write_png(gen_out, gen.generate(gen_prompt, seed, gen_traj.empty() ? nullptr : &traj));
      if (!gen_traj.empty()) save_trajectory(gen_traj, traj);
      std::cout << gen_out << "\n";
    });
  }

  auto* eval = app.add_subcommand("eval", "evaluation");
  eval->require_subcommand(1);
  {
    auto& c = add_stage(eval->add_subcommand("run", "FID, CLIP alignment and TIFAScore"), cmds, {{"stage", "eval"}});
    c.overrides->bind_path("--gen", "paths.gen_dir", "directory of <record id>.png files");
    c.overrides->bind_path("--ref", "paths.data", "reference manifest");
    c.overrides->bind<std::string>("--backend", "eval.backend", "VQA backend for TIFAScore");
    c.overrides->bind<int>("--bootstrap", "eval.bootstrap", "bootstrap resamples for the FID std");
    c.overrides->bind_list("--metrics", "eval.metrics", "comma-separated subset of fid,clip,tifa");
  }

  auto* reward = app.add_subcommand("reward", "reward scoring");
  reward->require_subcommand(1);
  std::string score_image, score_qa, score_backend = "heuristic";
  double score_alpha = 0.5;
  auto* score = reward->add_subcommand("score", "score one image against a QA file");
  score->add_option("--ckpt-image", score_image, "image to score")->required();
  score->add_option("--qa", score_qa, "QA file: JSON array of {q, a, kind}")->required();
  score->add_option("--alpha", score_alpha, "instance/sketch blend")->check(CLI::Range(0.0, 1.0));
  score->add_option("--backend", score_backend, "heuristic, constant:<answer> or http://host:port/path");
  score->callback([&] {
    auto backend = make_backend(score_backend);
    if (!backend) throw ConfigInvalid("backend", "a backend is required");
    const RewardReport rep = vqa_reward_or_fallback(*backend, read_png(score_image), load_qa_file(score_qa), score_alpha);
    std::cout << to_json(rep).dump(2) << "\n";
  });

  std::string check_path;
  auto* config = app.add_subcommand("config", "config utilities");
  config->require_subcommand(1);
  auto* check = config->add_subcommand("validate", "check a config file without running it");
  check->add_option("path", check_path, "config file")->required();
  check->callback([&] {
    const ConfigCheck c = validate_config(check_path);
    for (const auto& w : c.warnings) std::cerr << "warning: " << w.field << ": " << w.message << "\n";
    for (const auto& e : c.errors) std::cerr << "error: " << e.field << ": " << e.message << "\n";
    if (!c.ok()) throw CLI::RuntimeError(kConfigError);
    std::cout << "ok\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::RuntimeError& e) {
    return e.get_exit_code();
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return kOk;
}
