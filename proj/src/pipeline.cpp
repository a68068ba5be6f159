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

#include "sketchtune/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sketchtune/augment.hpp"
#include "sketchtune/checkpoint.hpp"
#include "sketchtune/dataset.hpp"
#include "sketchtune/digest.hpp"
#include "sketchtune/error.hpp"
#include "sketchtune/eval.hpp"
#include "sketchtune/perceptual.hpp"
#include "sketchtune/synthetic.hpp"
#include "sketchtune/vae.hpp"
#include "sketchtune/vqa_http.hpp"

namespace sketchtune {

namespace fs = std::filesystem;

namespace {

std::string utc_now(const char* format) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), format, &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::string digest_if_exists(const std::optional<fs::path>& p) {
  if (!p || !fs::exists(*p)) return "-";
  if (fs::is_directory(*p)) return "dir:" + p->string();
  return sha256_file(*p);
}

// Paths inside the run directory are reported relative to it so reruns produce identical reports.
std::string report_path(const fs::path& p, const fs::path& run_dir) {
  const auto rel = p.lexically_normal().lexically_relative(run_dir.lexically_normal());
  return !rel.empty() && *rel.begin() != ".." ? rel.generic_string() : p.string();
}

Plane vstack(const Plane& top, const Plane& bottom) {
  Plane out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

/// Box-filter downsampling of square [0,1] images, columns in and out.
Eigen::MatrixXd downsample(const Eigen::MatrixXd& images, int size, int side) {
  if (size % side != 0) throw ConfigInvalid("unet.side", "must divide the image size");
  const int f = size / side;
  Eigen::MatrixXd out(side * side, images.cols());
  for (Eigen::Index j = 0; j < images.cols(); ++j)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double s = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) s += images((y * f + dy) * size + x * f + dx, j);
        out(y * side + x, j) = s / (f * f);
      }
  return out;
}

int first_image_size(const DatasetManifest& m) {
  for (const auto& r : m.records) {
    const Raster img = read_png(m.image_path(r));
    if (!img.is_square()) throw ShapeMismatch("image " + r.id + " is not square");
    return static_cast<int>(img.height());
  }
  throw InsufficientData("manifest has no records");
}

std::vector<const SketchRecord*> positive_originals(const DatasetManifest& m) {
  std::vector<const SketchRecord*> out;
  for (const auto& r : m.records)
    if (r.polarity == Polarity::positive && r.provenance.is_original()) out.push_back(&r);
  return out;
}

struct StageOutput {
  nlohmann::json summary = nlohmann::json::object();
  std::vector<fs::path> extra_roots;
};

fs::path output_dir(const ExperimentConfig& cfg, const fs::path& run_dir) {
  if (auto p = cfg.path("output")) return *p;
  return run_dir / "data";
}

StageOutput run_dataset(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const auto& sec = cfg.section("dataset");
  const std::string action = sec.at("action").get<std::string>();
  StageOutput out;
  out.summary["action"] = action;
  const fs::path dest = output_dir(cfg, run_dir);
  if (!(dest.lexically_normal().string().rfind(run_dir.lexically_normal().string(), 0) == 0) && action != "validate")
    out.extra_roots.push_back(dest);

  auto report_validation = [&](const DatasetManifest& m) {
    ValidateOptions vo;
    vo.check_image_files = sec.at("check_images").get<bool>();
    const ValidationReport rep = validate_dataset(m, vo);
    nlohmann::json findings = nlohmann::json::array();
    for (const auto& f : rep.findings) findings.push_back({{"id", f.record_id}, {"code", f.code}, {"message", f.message}});
    write_json(run_dir / "metrics" / "validation.json",
               {{"ok", rep.ok()},
                {"findings", findings},
                {"positive_originals", rep.positive_originals},
                {"negative_originals", rep.negative_originals},
                {"augmentation_complete", rep.augmentation_complete}});
    out.summary["ok"] = rep.ok();
    out.summary["findings"] = rep.findings.size();
    out.summary["counts"] = {{"positive", m.counts.positive},
                             {"negative", m.counts.negative},
                             {"total", m.counts.total()},
                             {"qa_positive", m.counts.qa_positive},
                             {"qa_negative", m.counts.qa_negative},
                             {"qa_total", m.counts.qa_total()}};
  };

  if (action == "synth") {
    SyntheticOptions o;
    o.positive_originals = sec.at("positive_originals").get<std::size_t>();
    o.negative_originals = sec.at("negative_originals").get<std::size_t>();
    o.size = sec.at("size").get<int>();
    o.seed = derive_seed(cfg.seed, "synthetic");
    report_validation(write_synthetic_dataset(dest, o));
    out.summary["manifest"] = report_path(dest / "manifest.jsonl", run_dir);
  } else if (action == "validate") {
    LoadOptions lo;
    lo.check_images = false;
    report_validation(load_manifest(*cfg.path("data"), lo));
  } else if (action == "augment") {
    const DatasetManifest m = load_manifest(*cfg.path("data"));
    report_validation(augment_dataset(m, dest, derive_seed(cfg.seed, "augment")));
    out.summary["manifest"] = report_path(dest / "manifest.jsonl", run_dir);
  } else {
    const DatasetManifest m = load_manifest(*cfg.path("data"));
    auto [train, test] = split_dataset(m, sec.at("train_fraction").get<double>(), derive_seed(cfg.seed, "split"));
    for (auto* part : {&train, &test})
      for (auto& r : part->records) r.image = m.image_path(r).lexically_normal().string();
    train.base_dir = test.base_dir = dest;
    fs::create_directories(dest);
    write_manifest(dest / "train.jsonl", train);
    write_manifest(dest / "test.jsonl", test);
    out.summary["train"] = {{"path", report_path(dest / "train.jsonl", run_dir)}, {"records", train.records.size()}};
    out.summary["test"] = {{"path", report_path(dest / "test.jsonl", run_dir)}, {"records", test.records.size()}};
  }
  return out;
}

StageOutput run_vae(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const auto& sec = cfg.section("vae");
  const DatasetManifest m = load_manifest(*cfg.path("data"));
  const int size = first_image_size(m);
  const Eigen::MatrixXd data = load_image_matrix(m, size, true);
  if (data.cols() == 0) throw InsufficientData("no positive sketches to train on");

  VaeLossConfig loss;
  loss.kl_weight = sec.at("kl_weight").get<double>();
  loss.lpips_weight = sec.at("lpips_weight").get<double>();
  loss.recon_norm = sec.at("recon").get<std::string>() == "l1" ? ReconNorm::L1 : ReconNorm::L2;
  AutoencoderConfig arch;
  arch.image_size = size;
  arch.hidden = sec.at("hidden").get<int>();
  arch.latent_side = sec.at("latent_side").get<int>();
  arch.seed = derive_seed(cfg.seed, "vae.init");
  VaeTrainOptions opts;
  opts.epochs = sec.at("epochs").get<int>();
  opts.batch_size = sec.at("batch_size").get<int>();
  opts.learning_rate = sec.at("learning_rate").get<double>();
  opts.seed = derive_seed(cfg.seed, "vae.train");
  opts.checkpoint_interval = sec.at("checkpoint_interval").get<int>();
  opts.checkpoint_dir = run_dir / "checkpoints";
  const auto extractor = PerceptualExtractor::toy(size, size, kToyExtractorSeed);
  const VaeTrainResult res = train_vae(data, loss, arch, opts, extractor);

  std::vector<VaeEpochMetrics> trace{res.initial};
  trace.insert(trace.end(), res.trace.begin(), res.trace.end());
  write_text(run_dir / "metrics" / "vae_trace.csv", metric_trace_csv(trace));

  const Eigen::Index shown = std::min<Eigen::Index>(8, data.cols());
  const Eigen::MatrixXd recon = res.model.reconstruct(data.leftCols(shown));
  std::vector<Raster> top, bottom;
  for (Eigen::Index j = 0; j < shown; ++j) {
    top.push_back(gray_from_column(data.col(j), size, size));
    bottom.push_back(gray_from_column(recon.col(j), size, size));
  }
  write_png(run_dir / "images" / "reconstructions.png",
            Raster(vstack(hconcat(top).planes.front(), hconcat(bottom).planes.front())));

  StageOutput out;
  out.summary = {{"images", data.cols()},
                 {"final_mse", res.trace.empty() ? res.initial.mse : res.trace.back().mse},
                 {"final_lpips", res.trace.empty() ? res.initial.lpips : res.trace.back().lpips},
                 {"checkpoint", "checkpoints/vae_final.ckpt"}};
  return out;
}

StageOutput run_unet(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const auto& sec = cfg.section("unet");
  const DatasetManifest m = load_manifest(*cfg.path("data"));
  const int size = first_image_size(m);
  const bool latent = sec.at("latent").get<bool>();
  nlohmann::json meta = {{"latent", latent}, {"image_size", size}};

  std::vector<const SketchRecord*> recs;
  for (const auto& r : m.records)
    if (r.polarity == Polarity::positive) recs.push_back(&r);
  if (recs.empty()) throw InsufficientData("no positive sketches to train on");
  const Eigen::MatrixXd images = load_image_matrix(m, size, true);

  Eigen::MatrixXd x0;
  int side = 0;
  if (latent) {
    const auto vae_path = cfg.path("vae_checkpoint");
    if (!vae_path || !fs::exists(*vae_path)) throw MissingPrerequisite("vae");
    const Checkpoint vck = load_checkpoint(*vae_path);
    if (vck.kind != "vae") throw MissingPrerequisite("vae");
    const ToyAutoencoder vae = ToyAutoencoder::from_checkpoint(vck);
    if (vae.config().image_size != size) throw ShapeMismatch("autoencoder was trained on a different image size");
    const Eigen::MatrixXd z = vae.encode(images).mean;
    const double mean = z.mean();
    const double sd = std::sqrt((z.array() - mean).square().mean());
    const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
    x0 = z * scale;
    side = vae.config().latent_side;
    meta["latent_scale"] = scale;
    meta["vae_checkpoint"] = vae_path->string();
    meta["vae_sha256"] = sha256_file(*vae_path);
  } else {
    side = sec.at("side").get<int>();
    x0 = (downsample(images, size, side).array() * 2.0 - 1.0).matrix();
  }

  const NoiseSchedule schedule = make_schedule(sec.at("steps").get<int>(), ScheduleKind::linear,
                                               sec.at("beta_min").get<double>(), sec.at("beta_max").get<double>());
  DenoiserConfig dc;
  dc.side = side;
  dc.channels = sec.at("channels").get<int>();
  dc.embed_dim = sec.at("embed_dim").get<int>();
  dc.time_dim = sec.at("time_dim").get<int>();
  dc.seed = derive_seed(cfg.seed, "unet.init");
  const std::uint64_t text_seed = derive_seed(cfg.seed, "text");
  const HashedTextEncoder encoder(dc.embed_dim, text_seed);
  std::vector<ad::Matrix> tokens;
  for (const auto* r : recs) tokens.push_back(encoder.embed(r->caption).tokens);

  ToyDenoiser model(dc);
  DenoiserTrainOptions opts;
  opts.epochs = sec.at("epochs").get<int>();
  opts.batch_size = sec.at("batch_size").get<int>();
  opts.learning_rate = sec.at("learning_rate").get<double>();
  opts.seed = derive_seed(cfg.seed, "unet.train");
  const std::vector<double> trace = train_denoiser(model, x0, tokens, schedule, opts);

  std::ostringstream csv;
  csv << "epoch,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) csv << i + 1 << ',' << trace[i] << '\n';
  write_text(run_dir / "metrics" / "unet_loss.csv", csv.str());

  Checkpoint ck = model.to_checkpoint();
  ck.epoch = opts.epochs;
  ck.meta.update(meta);
  ck.meta["schedule"] = schedule_json(schedule);
  ck.meta["text_seed"] = text_seed;
  ck.config = cfg.tree;
  fs::create_directories(run_dir / "checkpoints");
  save_checkpoint(run_dir / "checkpoints" / "unet.ckpt", ck);

  StageOutput out;
  out.summary = {{"samples", x0.cols()},
                 {"final_loss", trace.empty() ? 0.0 : trace.back()},
                 {"checkpoint", "checkpoints/unet.ckpt"}};
  return out;
}

std::vector<PromptSpec> prompt_set(const DatasetManifest& m, std::size_t limit) {
  std::vector<PromptSpec> prompts;
  for (const auto* r : positive_originals(m)) {
    if (limit && prompts.size() >= limit) break;
    prompts.push_back({r->id, r->caption, r->qa});
  }
  if (prompts.empty()) throw InsufficientData("no positive originals to take prompts from");
  return prompts;
}

StageOutput run_ddpo(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const auto& sec = cfg.section("ddpo");
  const auto unet_path = cfg.path("unet_checkpoint");
  if (!unet_path) throw MissingPrerequisite("unet");
  const Checkpoint probe = fs::exists(*unet_path) ? load_checkpoint(*unet_path) : Checkpoint{};
  if (probe.kind != "unet") throw MissingPrerequisite("unet");
  Generator gen = load_generator(*unet_path, cfg.path("vae_checkpoint"));

  LoadOptions lo;
  lo.check_images = false;
  const DatasetManifest m = load_manifest(*cfg.path("data"), lo);
  const std::vector<PromptSpec> prompts = prompt_set(m, sec.at("prompts").get<std::size_t>());

  DdpoConfig dc;
  dc.rollouts_per_prompt = sec.at("rollouts_per_prompt").get<int>();
  dc.prompts_per_update = sec.at("prompts_per_update").get<int>();
  dc.updates = sec.at("updates").get<int>();
  dc.learning_rate = sec.at("learning_rate").get<double>();
  dc.clip_norm = sec.at("clip_norm").get<double>();
  dc.alpha = sec.at("alpha").get<double>();
  dc.epsilon = sec.at("epsilon").get<double>();
  dc.checkpoint_interval = sec.at("checkpoint_interval").get<int>();
  dc.seed = derive_seed(cfg.seed, "ddpo");

  std::unique_ptr<VqaBackend> backend;
  std::unique_ptr<CachedBackend> cached;
  RewardFn reward;
  if (sec.at("reward").get<std::string>() == "whiteness") {
    reward = whiteness_reward_fn(sec.at("whiteness_threshold").get<int>());
  } else {
    backend = make_backend(sec.at("backend").get<std::string>());
    if (!backend) throw ConfigInvalid("ddpo.backend", "the vqa reward needs a backend");
    cached = std::make_unique<CachedBackend>(*backend);
    reward = vqa_reward_fn(*cached, dc.alpha);
  }

  DdpoRunOptions ro;
  ro.checkpoint_dir = run_dir / "checkpoints";
  ro.resume_from = cfg.path("resume");
  ro.extra_meta = gen.meta;
  const DdpoResult res = train_ddpo(gen.model, prompts, gen.encoder, gen.decode, reward, gen.schedule, dc, ro);

  write_text(run_dir / "metrics" / "reward_curve.csv", reward_curve_csv(res.curve));
  std::ostringstream means;
  means << "update,mean_reward\n" << std::setprecision(17);
  for (std::size_t i = 0; i < res.mean_rewards.size(); ++i) means << i << ',' << res.mean_rewards[i] << '\n';
  write_text(run_dir / "metrics" / "mean_reward.csv", means.str());
  fs::create_directories(run_dir / "images");
  write_png(run_dir / "images" / "reward_curve.png", reward_curve_plot(res.curve));

  StageOutput out;
  out.summary = {{"updates", res.mean_rewards.size()},
                 {"initial_mean_reward", res.mean_rewards.empty() ? 0.0 : res.mean_rewards.front()},
                 {"final_mean_reward", res.mean_rewards.empty() ? 0.0 : res.mean_rewards.back()},
                 {"dropped_rollouts", res.dropped},
                 {"skipped_updates", res.skipped_updates}};
  if (!res.checkpoints.empty()) out.summary["checkpoint"] = report_path(res.checkpoints.back(), run_dir);
  return out;
}

StageOutput run_generate(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const auto ckpt = cfg.path("unet_checkpoint");
  if (!ckpt) throw MissingPrerequisite("unet");
  const Generator gen = load_generator(*ckpt, cfg.path("vae_checkpoint"));
  LoadOptions lo;
  lo.check_images = false;
  const DatasetManifest m = load_manifest(*cfg.path("data"), lo);
  const auto prompts = prompt_set(m, cfg.section("generate").at("limit").get<std::size_t>());
  fs::create_directories(run_dir / "images");
  for (const auto& p : prompts) write_png(run_dir / "images" / (p.id + ".png"), gen.generate(p.prompt, derive_seed(cfg.seed, p.id)));
  StageOutput out;
  out.summary = {{"generated", prompts.size()}, {"gen_dir", "images"}};
  return out;
}

StageOutput run_eval(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const auto& sec = cfg.section("eval");
  LoadOptions lo;
  lo.check_images = false;
  const DatasetManifest ref = load_manifest(*cfg.path("data"), lo);
  auto backend = make_backend(sec.at("backend").get<std::string>());
  EvalOptions eo;
  eo.metrics.clear();
  for (const auto& m : sec.at("metrics")) eo.metrics.insert(m.get<std::string>());
  eo.backend = backend.get();
  eo.bootstrap_resamples = sec.at("bootstrap").get<int>();
  eo.seed = derive_seed(cfg.seed, "eval");
  eo.extractor_seed = kToyExtractorSeed;
  const EvalReport rep = evaluate_run(*cfg.path("gen_dir"), ref, eo);
  write_json(run_dir / "metrics" / "eval.json", to_json(rep));
  write_text(run_dir / "report.md", to_markdown(rep));
  StageOutput out;
  for (const auto& [name, metric] : rep.metrics) out.summary[name] = {{"mean", metric.mean}, {"std", metric.std}};
  out.summary["errors"] = rep.errors;
  out.summary["skipped"] = rep.skipped.size();
  return out;
}

void collect_files(const fs::path& root, const fs::path& run_dir, std::vector<ArtifactEntry>& out) {
  if (!fs::exists(root)) return;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto rel = f.lexically_relative(run_dir);
    const bool inside = !rel.empty() && *rel.begin() != "..";
    if (inside && rel == "run.json") continue;
    out.push_back({inside ? rel.generic_string() : f.string(), sha256_file(f), fs::file_size(f)});
  }
}

}  // namespace

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : r.artifacts) artifacts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  return {{"run_id", r.run_id},         {"stage", r.stage},           {"status", r.status},
          {"error", r.error},           {"input_hash", r.input_hash}, {"started_at", r.started_at},
          {"finished_at", r.finished_at}, {"config", r.config},       {"summary", r.summary},
          {"artifacts", artifacts}};
}

RunRecord load_run_record(const fs::path& run_dir) {
  std::ifstream in(run_dir / "run.json");
  if (!in) throw IoError("no run.json in " + run_dir.string());
  const auto j = nlohmann::json::parse(in);
  RunRecord r;
  r.dir = run_dir;
  r.run_id = j.at("run_id").get<std::string>();
  r.stage = j.at("stage").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.input_hash = j.at("input_hash").get<std::string>();
  r.started_at = j.at("started_at").get<std::string>();
  r.finished_at = j.at("finished_at").get<std::string>();
  r.config = j.at("config");
  r.summary = j.at("summary");
  for (const auto& a : j.at("artifacts"))
    r.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>(), a.at("bytes").get<std::uintmax_t>()});
  return r;
}

fs::path runs_root(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("SKETCHTUNE_RUNS_DIR"); env && *env) return env;
  if (auto p = cfg.path("runs")) return *p;
  return fs::current_path() / "runs";
}

RunRecord run_stage(const ExperimentConfig& cfg) {
  RunRecord rec;
  rec.stage = to_string(cfg.stage);
  rec.config = cfg.tree;
  rec.started_at = utc_now("%Y-%m-%dT%H:%M:%SZ");
  std::string inputs = cfg.tree.dump();
  for (const char* key : {"data", "vae_checkpoint", "unet_checkpoint", "resume", "gen_dir"})
    inputs += std::string("\n") + key + "=" + digest_if_exists(cfg.path(key));
  rec.input_hash = sha256_hex(std::string_view(inputs));

  const fs::path root = runs_root(cfg);
  fs::create_directories(root);
  const std::string base = utc_now("%Y%m%d-%H%M%S") + "-" + rec.input_hash.substr(0, 8);
  rec.run_id = base;
  for (int k = 2; fs::exists(root / rec.run_id); ++k) rec.run_id = base + "-" + std::to_string(k);
  rec.dir = root / rec.run_id;
  for (const char* sub : {"checkpoints", "metrics", "images"}) fs::create_directories(rec.dir / sub);
  write_json(rec.dir / "config.json", cfg.tree);

  StageOutput out;
  try {
    switch (cfg.stage) {
      case Stage::dataset: out = run_dataset(cfg, rec.dir); break;
      case Stage::vae: out = run_vae(cfg, rec.dir); break;
      case Stage::unet: out = run_unet(cfg, rec.dir); break;
      case Stage::ddpo: out = run_ddpo(cfg, rec.dir); break;
      case Stage::eval: out = run_eval(cfg, rec.dir); break;
      case Stage::generate: out = run_generate(cfg, rec.dir); break;
    }
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.error = e.what();
    rec.finished_at = utc_now("%Y-%m-%dT%H:%M:%SZ");
    collect_files(rec.dir, rec.dir, rec.artifacts);
    write_json(rec.dir / "run.json", to_json(rec));
    throw;
  }
  rec.summary = out.summary;
  write_json(rec.dir / "report.json", {{"stage", rec.stage}, {"summary", rec.summary}});
  collect_files(rec.dir, rec.dir, rec.artifacts);
  for (const auto& extra : out.extra_roots) collect_files(extra, rec.dir, rec.artifacts);
  rec.status = "completed";
  rec.finished_at = utc_now("%Y-%m-%dT%H:%M:%SZ");
  write_json(rec.dir / "run.json", to_json(rec));
  return rec;
}

std::vector<std::string> verify_run(const fs::path& run_dir) {
  const RunRecord r = load_run_record(run_dir);
  std::vector<std::string> problems;
  for (const auto& a : r.artifacts) {
    const fs::path p = fs::path(a.path).is_absolute() ? fs::path(a.path) : run_dir / a.path;
    if (!fs::exists(p))
      problems.push_back(a.path + ": missing");
    else if (sha256_file(p) != a.sha256)
      problems.push_back(a.path + ": digest mismatch");
  }
  return problems;
}

std::unique_ptr<VqaBackend> make_backend(const std::string& spec) {
  if (spec.empty() || spec == "none") return nullptr;
  if (spec == "heuristic") return std::make_unique<HeuristicBackend>();
  if (spec.rfind("constant:", 0) == 0) return std::make_unique<ConstantBackend>(spec.substr(9));
  if (spec.rfind("http://", 0) == 0) {
    HttpBackendOptions o;
    const std::string rest = spec.substr(7);
    const auto slash = rest.find('/');
    const std::string hostport = rest.substr(0, slash);
    if (slash != std::string::npos) o.path = rest.substr(slash);
    const auto colon = hostport.find(':');
    o.host = hostport.substr(0, colon);
    if (colon != std::string::npos) o.port = std::stoi(hostport.substr(colon + 1));
    return std::make_unique<HttpBackend>(o);
  }
  throw ConfigInvalid("backend", "unknown backend '" + spec + "'");
}

Raster Generator::generate(const std::string& prompt, std::uint64_t seed, DiffusionTrajectory* trajectory) const {
  SampleResult res = sample(model, encoder.embed(prompt), schedule, seed);
  if (trajectory) {
    res.trajectory.prompt = prompt;
    *trajectory = std::move(res.trajectory);
  }
  return decode(res.latent);
}

Generator load_generator(const fs::path& checkpoint, const std::optional<fs::path>& vae_override) {
  if (!fs::exists(checkpoint)) throw MissingPrerequisite("unet");
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.kind != "unet" && ck.kind != "ddpo") throw MissingPrerequisite("unet");
  Generator g;
  g.meta = ck.meta;
  g.meta.erase("adam_steps");
  g.meta.erase("curve");
  g.meta.erase("mean_rewards");
  g.meta.erase("dropped");
  g.meta.erase("skipped_updates");
  g.model = ToyDenoiser::from_checkpoint(ck, ck.kind == "ddpo" ? "model." : "");
  g.schedule = schedule_from_json(ck.meta.at("schedule"));
  g.encoder = HashedTextEncoder(g.model.config().embed_dim, ck.meta.at("text_seed").get<std::uint64_t>());
  const int side = g.model.config().side;
  if (ck.meta.at("latent").get<bool>()) {
    const fs::path vae_path = vae_override ? *vae_override : fs::path(ck.meta.at("vae_checkpoint").get<std::string>());
    if (!fs::exists(vae_path)) throw MissingPrerequisite("vae");
    if (sha256_file(vae_path) != ck.meta.at("vae_sha256").get<std::string>())
      throw MissingPrerequisite("vae (checkpoint differs from the one the denoiser was trained against)");
    auto vae = std::make_shared<ToyAutoencoder>(ToyAutoencoder::from_checkpoint(load_checkpoint(vae_path)));
    const double scale = ck.meta.at("latent_scale").get<double>();
    g.decode = [vae, scale](const ad::Matrix& latent) {
      const int size = vae->config().image_size;
      const Eigen::MatrixXd px = vae->decode(latent / scale);
      return gray_from_column(px.col(0), size, size);
    };
  } else {
    g.decode = pixel_decoder(side);
  }
  return g;
}

}  // namespace sketchtune
