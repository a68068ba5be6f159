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

#include "sketchtune/config.hpp"

#include <fstream>
#include <set>

#include "sketchtune/error.hpp"

namespace sketchtune {

using Json = nlohmann::json;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::dataset: return "dataset";
    case Stage::vae: return "vae";
    case Stage::unet: return "unet";
    case Stage::ddpo: return "ddpo";
    case Stage::eval: return "eval";
    case Stage::generate: return "generate";
  }
  return "?";
}

std::string to_string(Mode m) { return m == Mode::toy ? "toy" : "real"; }

std::optional<Stage> parse_stage(const std::string& s) {
  for (Stage st : {Stage::dataset, Stage::vae, Stage::unet, Stage::ddpo, Stage::eval, Stage::generate})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::optional<Mode> parse_mode(const std::string& s) {
  if (s == "toy") return Mode::toy;
  if (s == "real") return Mode::real;
  return std::nullopt;
}

namespace {

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Json load_tree(const std::filesystem::path& path, std::vector<std::filesystem::path>& stack) {
  const auto canonical = std::filesystem::weakly_canonical(path);
  for (const auto& p : stack)
    if (p == canonical) throw ConfigInvalid("include", "include cycle through " + path.string());
  stack.push_back(canonical);
  Json tree = read_json(path);
  if (!tree.is_object()) throw ConfigInvalid("file", path.string() + " must hold a JSON object");
  const auto dir = canonical.parent_path();
  if (tree.contains("paths") && tree["paths"].is_object())
    for (auto& [key, value] : tree["paths"].items())
      if (value.is_string() && !value.get<std::string>().empty()) {
        std::filesystem::path p = value.get<std::string>();
        if (p.is_relative()) value = (dir / p).lexically_normal().string();
      }
  Json base = Json::object();
  if (tree.contains("include")) {
    Json inc = tree["include"];
    if (inc.is_string()) inc = Json::array({inc});
    if (!inc.is_array()) throw ConfigInvalid("include", "must be a string or an array of strings");
    for (const auto& e : inc) {
      if (!e.is_string()) throw ConfigInvalid("include", "must be a string or an array of strings");
      std::filesystem::path p = e.get<std::string>();
      base.merge_patch(load_tree(p.is_relative() ? dir / p : p, stack));
    }
    tree.erase("include");
  }
  base.merge_patch(tree);
  stack.pop_back();
  return base;
}

const Json* lookup(const Json& tree, const std::string& dotted) {
  const Json* cur = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

struct NumberRule {
  const char* field;
  double lo;
  double hi;
  bool lo_open;
  bool integer;
};

constexpr double kInf = 1e300;

const NumberRule kNumberRules[] = {
    {"dataset.positive_originals", 0, kInf, false, true},
    {"dataset.negative_originals", 0, kInf, false, true},
    {"dataset.size", 8, 4096, false, true},
    {"dataset.train_fraction", 0, 1, true, false},
    {"vae.epochs", 0, kInf, false, true},
    {"vae.batch_size", 1, kInf, false, true},
    {"vae.learning_rate", 0, kInf, true, false},
    {"vae.kl_weight", 0, kInf, false, false},
    {"vae.lpips_weight", 0, kInf, false, false},
    {"vae.hidden", 1, kInf, false, true},
    {"vae.latent_side", 1, kInf, false, true},
    {"vae.checkpoint_interval", 0, kInf, false, true},
    {"unet.epochs", 0, kInf, false, true},
    {"unet.batch_size", 1, kInf, false, true},
    {"unet.learning_rate", 0, kInf, true, false},
    {"unet.steps", 1, kInf, false, true},
    {"unet.beta_min", 0, 1, true, false},
    {"unet.beta_max", 0, 1, true, false},
    {"unet.channels", 1, kInf, false, true},
    {"unet.embed_dim", 1, kInf, false, true},
    {"unet.time_dim", 2, kInf, false, true},
    {"unet.side", 2, kInf, false, true},
    {"ddpo.updates", 0, kInf, false, true},
    {"ddpo.rollouts_per_prompt", 1, kInf, false, true},
    {"ddpo.prompts_per_update", 1, kInf, false, true},
    {"ddpo.prompts", 1, kInf, false, true},
    {"ddpo.learning_rate", 0, kInf, true, false},
    {"ddpo.clip_norm", 0, kInf, true, false},
    {"ddpo.alpha", 0, 1, false, false},
    {"ddpo.epsilon", 0, kInf, true, false},
    {"ddpo.checkpoint_interval", 0, kInf, false, true},
    {"ddpo.whiteness_threshold", 0, 255, false, true},
    {"eval.bootstrap", 0, kInf, false, true},
    {"eval.alpha", 0, 1, false, false},
    {"generate.limit", 0, kInf, false, true},
};

bool path_exists(const Json& tree, const char* key) {
  const Json* v = lookup(tree, std::string("paths.") + key);
  return v && v->is_string() && !v->get<std::string>().empty() && std::filesystem::exists(v->get<std::string>());
}

bool path_set(const Json& tree, const char* key) {
  const Json* v = lookup(tree, std::string("paths.") + key);
  return v && v->is_string() && !v->get<std::string>().empty();
}

}  // namespace

Json load_config_tree(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> stack;
  return load_tree(path, stack);
}

Json default_config_tree() {
  return Json::parse(R"({
    "mode": "toy",
    "paths": {"data": "", "runs": "", "output": "", "vae_checkpoint": "", "unet_checkpoint": "",
              "gen_dir": "", "resume": ""},
    "dataset": {"action": "validate", "positive_originals": 200, "negative_originals": 0, "size": 64,
                "train_fraction": 0.8, "check_images": true},
    "vae": {"epochs": 15, "batch_size": 8, "learning_rate": 0.001, "kl_weight": 0.0, "lpips_weight": 0.1,
            "recon": "l2", "hidden": 256, "latent_side": 8, "checkpoint_interval": 5},
    "unet": {"epochs": 30, "batch_size": 20, "learning_rate": 0.002, "steps": 50, "beta_min": 0.001,
             "beta_max": 0.2, "channels": 16, "embed_dim": 16, "time_dim": 16, "latent": true, "side": 8},
    "ddpo": {"updates": 200, "rollouts_per_prompt": 4, "prompts_per_update": 2, "prompts": 2,
             "learning_rate": 0.001, "clip_norm": 1.0, "alpha": 0.5, "epsilon": 1e-6, "checkpoint_interval": 50,
             "reward": "whiteness", "backend": "heuristic", "whiteness_threshold": 230},
    "eval": {"metrics": ["fid", "clip", "tifa"], "bootstrap": 100, "backend": "heuristic", "alpha": 0.5},
    "generate": {"limit": 0}
  })");
}

ConfigCheck check_config(const Json& tree) {
  ConfigCheck c;
  auto error = [&](std::string field, std::string msg) { c.errors.push_back({std::move(field), std::move(msg)}); };
  if (!tree.is_object()) {
    error("file", "config must be a JSON object");
    return c;
  }
  static const std::set<std::string> kKnown = {"stage", "mode", "seed", "paths", "dataset", "vae",
                                                "unet",  "ddpo", "eval", "generate", "include"};
  for (const auto& [key, value] : tree.items())
    if (!kKnown.count(key)) c.warnings.push_back({key, "unknown key ignored"});

  std::optional<Stage> stage;
  if (const Json* s = lookup(tree, "stage"); !s || !s->is_string())
    error("stage", "missing or not a string");
  else if (!(stage = parse_stage(s->get<std::string>())))
    error("stage", "unknown stage '" + s->get<std::string>() + "'");

  Mode mode = Mode::toy;
  if (const Json* m = lookup(tree, "mode")) {
    auto parsed = m->is_string() ? parse_mode(m->get<std::string>()) : std::nullopt;
    if (!parsed)
      error("mode", "must be 'toy' or 'real'");
    else
      mode = *parsed;
  }
  if (mode == Mode::real && stage && *stage != Stage::dataset)
    error("mode", "real mode needs external pretrained model adapters, which are not bundled");

  const Json* seed = lookup(tree, "seed");
  if (!seed) {
    if (mode == Mode::toy) error("seed", "seed is mandatory in toy mode");
  } else if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<long long>() >= 0)) {
    error("seed", "must be a non-negative integer");
  }

  for (const auto& rule : kNumberRules) {
    const Json* v = lookup(tree, rule.field);
    if (!v) continue;
    if (!v->is_number()) {
      error(rule.field, "must be a number");
      continue;
    }
    if (rule.integer && !v->is_number_integer()) {
      error(rule.field, "must be an integer");
      continue;
    }
    const double x = v->get<double>();
    const bool below = rule.lo_open ? !(x > rule.lo) : !(x >= rule.lo);
    if (below || !(x <= rule.hi)) {
      const std::string f = rule.field;
      if (f.ends_with(".alpha"))
        error(f, "alpha out of [0,1]");
      else if (f == "vae.lpips_weight")
        error(f, "lambda must be >= 0");
      else if (f == "unet.steps")
        error(f, "T must be >= 1");
      else
        error(f, "out of range");
    }
  }
  const Json* bmin = lookup(tree, "unet.beta_min");
  const Json* bmax = lookup(tree, "unet.beta_max");
  if (bmin && bmax && bmin->is_number() && bmax->is_number() && bmin->get<double>() > bmax->get<double>())
    error("unet.beta_min", "must not exceed unet.beta_max");

  if (const Json* r = lookup(tree, "vae.recon"); r && !(r->is_string() && (*r == "l2" || *r == "l1")))
    error("vae.recon", "must be 'l2' or 'l1'");
  if (const Json* r = lookup(tree, "ddpo.reward"); r && !(r->is_string() && (*r == "whiteness" || *r == "vqa")))
    error("ddpo.reward", "must be 'whiteness' or 'vqa'");
  if (const Json* m = lookup(tree, "eval.metrics")) {
    if (!m->is_array()) {
      error("eval.metrics", "must be an array");
    } else {
      for (const auto& e : *m)
        if (!(e.is_string() && (e == "fid" || e == "clip" || e == "tifa")))
          error("eval.metrics", "unknown metric " + e.dump());
    }
  }

  std::string action = "validate";
  if (const Json* a = lookup(tree, "dataset.action")) {
    static const std::set<std::string> kActions = {"synth", "validate", "augment", "split"};
    if (!a->is_string() || !kActions.count(a->get<std::string>()))
      error("dataset.action", "must be one of synth, validate, augment, split");
    else
      action = a->get<std::string>();
  }

  if (const Json* p = lookup(tree, "paths"); p && !p->is_object()) error("paths", "must be an object");
  if (stage) {
    const bool needs_data = !(*stage == Stage::dataset && action == "synth");
    if (needs_data && !path_set(tree, "data"))
      error("paths.data", "a dataset manifest is required for this stage");
    else if (needs_data && !path_exists(tree, "data"))
      error("paths.data", "path does not exist: " + lookup(tree, "paths.data")->get<std::string>());
    if (*stage == Stage::eval) {
      if (!path_set(tree, "gen_dir"))
        error("paths.gen_dir", "a directory of generated images is required");
      else if (!path_exists(tree, "gen_dir"))
        error("paths.gen_dir", "path does not exist: " + lookup(tree, "paths.gen_dir")->get<std::string>());
    }
    if (path_set(tree, "resume") && !path_exists(tree, "resume"))
      error("paths.resume", "path does not exist: " + lookup(tree, "paths.resume")->get<std::string>());
    if (*stage == Stage::vae && !lookup(tree, "vae.lpips_weight"))
      c.warnings.push_back({"vae.lpips_weight", "lambda omitted; default 0.1 applied"});
  }
  return c;
}

ConfigCheck validate_config(const std::filesystem::path& path) {
  try {
    return check_config(load_config_tree(path));
  } catch (const ConfigInvalid& e) {
    ConfigCheck c;
    c.errors.push_back({e.field(), e.what()});
    return c;
  } catch (const std::exception& e) {
    ConfigCheck c;
    c.errors.push_back({"file", e.what()});
    return c;
  }
}

std::optional<std::filesystem::path> ExperimentConfig::path(const std::string& key) const {
  const Json* v = lookup(tree, "paths." + key);
  if (!v || !v->is_string() || v->get<std::string>().empty()) return std::nullopt;
  return std::filesystem::path(v->get<std::string>());
}

ExperimentConfig make_config(const Json& tree) {
  const ConfigCheck check = check_config(tree);
  if (!check.ok()) throw ConfigInvalid(check.errors.front().field, check.errors.front().message);
  ExperimentConfig cfg;
  cfg.tree = default_config_tree();
  Json user = tree;
  user.erase("include");
  cfg.tree.merge_patch(user);
  cfg.stage = *parse_stage(cfg.tree.at("stage").get<std::string>());
  cfg.mode = *parse_mode(cfg.tree.at("mode").get<std::string>());
  cfg.seed = cfg.tree.contains("seed") ? cfg.tree.at("seed").get<std::uint64_t>() : 0;
  cfg.warnings = check.warnings;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return make_config(load_config_tree(path)); }

}  // namespace sketchtune
