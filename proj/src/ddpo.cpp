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

#include "sketchtune/ddpo.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "sketchtune/digest.hpp"
#include "sketchtune/error.hpp"
#include "sketchtune/plot.hpp"

namespace sketchtune {

RewardFn vqa_reward_fn(VqaBackend& backend, double alpha) {
  return [&backend, alpha](const Raster& image, const PromptSpec& prompt) {
    return vqa_reward_or_fallback(backend, image, prompt.qa, alpha).r_vqa;
  };
}

double whiteness(const Raster& image, int threshold) {
  if (image.empty()) throw InvalidArgument("whiteness of an empty image");
  const Plane y = image.luma();
  return static_cast<double>((y.cast<int>() >= threshold).count()) / static_cast<double>(y.size());
}

RewardFn whiteness_reward_fn(int threshold) {
  return [threshold](const Raster& image, const PromptSpec&) { return whiteness(image, threshold); };
}

LatentDecoder pixel_decoder(int side) {
  return [side](const ad::Matrix& latent) {
    if (latent.size() != static_cast<Eigen::Index>(side) * side) throw ShapeMismatch("pixel decoder: latent size");
    PlaneF p(side, side);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) p(y, x) = std::clamp((latent(y * side + x, 0) + 1.0) / 2.0, 0.0, 1.0);
    return Raster(from_unit(p));
  };
}

void DdpoConfig::validate() const {
  if (rollouts_per_prompt < 1) throw ConfigInvalid("ddpo.rollouts_per_prompt", "must be positive");
  if (prompts_per_update < 1) throw ConfigInvalid("ddpo.prompts_per_update", "must be positive");
  if (updates < 0) throw ConfigInvalid("ddpo.updates", "must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigInvalid("ddpo.learning_rate", "must be positive");
  if (!(clip_norm > 0.0)) throw ConfigInvalid("ddpo.clip_norm", "must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigInvalid("ddpo.alpha", "alpha out of [0,1]");
  if (!(epsilon > 0.0)) throw ConfigInvalid("ddpo.epsilon", "must be positive");
  if (checkpoint_interval < 0) throw ConfigInvalid("ddpo.checkpoint_interval", "must be non-negative");
}

void PerPromptStats::update(const std::string& prompt_id, double reward) {
  Cell& c = cells_[prompt_id];
  ++c.n;
  const double delta = reward - c.mean;
  c.mean += delta / static_cast<double>(c.n);
  c.m2 += delta * (reward - c.mean);
}

std::size_t PerPromptStats::count(const std::string& prompt_id) const {
  auto it = cells_.find(prompt_id);
  return it == cells_.end() ? 0 : it->second.n;
}

double PerPromptStats::mean(const std::string& prompt_id) const {
  auto it = cells_.find(prompt_id);
  return it == cells_.end() ? 0.0 : it->second.mean;
}

double PerPromptStats::variance(const std::string& prompt_id) const {
  auto it = cells_.find(prompt_id);
  if (it == cells_.end() || it->second.n == 0) return 0.0;
  return std::max(0.0, it->second.m2 / static_cast<double>(it->second.n));
}

double PerPromptStats::stddev(const std::string& prompt_id) const { return std::sqrt(variance(prompt_id)); }

RolloutBatch collect_rollouts(const ToyDenoiser& model, const std::vector<PromptSpec>& prompts,
                              const std::vector<std::size_t>& selected, const HashedTextEncoder& encoder,
                              const LatentDecoder& decode, const RewardFn& reward, const NoiseSchedule& schedule,
                              const DdpoConfig& cfg, long long update) {
  RolloutBatch batch;
  for (std::size_t p : selected) {
    if (p >= prompts.size()) throw InvalidArgument("prompt index out of range");
    const PromptSpec& spec = prompts[p];
    const ConditionEmbedding cond = encoder.embed(spec.prompt);
    for (int k = 0; k < cfg.rollouts_per_prompt; ++k) {
      const std::uint64_t seed =
          derive_seed(cfg.seed, "rollout/" + std::to_string(update) + "/" + spec.id + "/" + std::to_string(k));
      SampleResult s = sample(model, cond, schedule, seed);
      double r = 0.0;
      try {
        r = reward(decode(s.latent), spec);
      } catch (const BackendFailure& e) {
        batch.dropped.emplace_back(spec.id + "#" + std::to_string(k), e.what());
        continue;
      }
      if (!(r >= 0.0 && r <= 1.0)) throw InvalidRange("reward outside [0,1] for prompt " + spec.id);
      Rollout ro;
      ro.trajectory = std::move(s.trajectory);
      ro.prompt_id = spec.id;
      ro.prompt_index = p;
      ro.reward = r;
      batch.rollouts.push_back(std::move(ro));
    }
  }
  return batch;
}

void normalize_advantages(std::vector<Rollout>& rollouts, const PerPromptStats& stats, double epsilon) {
  for (auto& r : rollouts) {
    const double sd = stats.stddev(r.prompt_id);
    r.advantage = sd == 0.0 ? 0.0 : (r.reward - stats.mean(r.prompt_id)) / (sd + epsilon);
  }
}

ad::Var reinforce_surrogate(ad::Var mean, const ad::Matrix& x_prev, const Eigen::VectorXd& variances, double weight) {
  if (mean.rows() != x_prev.rows() || mean.cols() != x_prev.cols() || variances.size() != x_prev.cols())
    throw ShapeMismatch("reinforce_surrogate: inconsistent shapes");
  ad::Tape& tape = *mean.tape();
  ad::Matrix w(x_prev.rows(), x_prev.cols());
  for (Eigen::Index j = 0; j < x_prev.cols(); ++j) {
    if (!(variances(j) > 0.0)) throw DegenerateVariance("surrogate step with non-positive variance");
    w.col(j).setConstant(weight / (2.0 * variances(j)));
  }
  ad::Var diff = ad::sub(tape.constant(x_prev), mean);
  return ad::sum(ad::cwise_mul(ad::square(diff), tape.constant(std::move(w))));
}

Eigen::VectorXd estimate_policy_gradient(const Eigen::VectorXd& theta, double sigma,
                                         const std::function<double(const Eigen::VectorXd&)>& reward, int samples,
                                         std::uint64_t seed) {
  if (samples < 1 || !(sigma > 0.0)) throw InvalidArgument("estimate_policy_gradient: bad sample count or sigma");
  ad::ParameterSet params;
  params.add("theta", theta);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::VectorXd var = Eigen::VectorXd::Constant(1, sigma * sigma);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(theta.size());
  for (int i = 0; i < samples; ++i) {
    Eigen::VectorXd x(theta.size());
    for (Eigen::Index d = 0; d < x.size(); ++d) x(d) = theta(d) + sigma * normal(rng);
    const double r = reward(x);
    params.zero_grad();
    ad::Tape tape;
    tape.backward(reinforce_surrogate(tape.parameter(params[0]), x, var, r));
    acc -= params[0].grad;
  }
  return acc / static_cast<double>(samples);
}

PolicyStepResult policy_gradient_step(ToyDenoiser& model, Adam& optimizer, const std::vector<Rollout>& rollouts,
                                      const std::vector<PromptSpec>& prompts, const HashedTextEncoder& encoder,
                                      const NoiseSchedule& schedule, const DdpoConfig& cfg) {
  PolicyStepResult res;
  const bool any_signal = std::any_of(rollouts.begin(), rollouts.end(), [](const Rollout& r) { return r.advantage != 0.0; });
  if (rollouts.empty() || !any_signal) {
    res.skipped = true;
    res.reason = "no learning signal";
    return res;
  }
  std::map<std::size_t, ad::Matrix> tokens;
  for (const auto& r : rollouts)
    if (!tokens.count(r.prompt_index)) tokens.emplace(r.prompt_index, encoder.embed(prompts.at(r.prompt_index).prompt).tokens);

  ad::Tape tape;
  ad::Var total;
  bool have_total = false;
  for (const auto& r : rollouts) {
    const auto& tr = r.trajectory;
    const int n = tr.steps - 1;
    if (r.advantage == 0.0 || n < 1) continue;
    if (tr.steps != schedule.steps) throw ShapeMismatch("rollout sampled with a different schedule");
    std::vector<int> steps(static_cast<std::size_t>(n));
    ad::Matrix keep(tr.states.rows(), n), eps_coef(tr.states.rows(), n);
    Eigen::VectorXd variances(n);
    for (int k = 0; k < n; ++k) {
      const int t = tr.step_at(k);
      steps[static_cast<std::size_t>(k)] = t;
      const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
      keep.col(k).setConstant(inv_sqrt_alpha);
      eps_coef.col(k).setConstant(-inv_sqrt_alpha * schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t)));
      variances(k) = schedule.posterior_variance(t);
    }
    const ad::Matrix x_t = tr.states.leftCols(n);
    const ad::Matrix x_prev = tr.states.middleCols(1, n);
    std::vector<const ad::Matrix*> toks(static_cast<std::size_t>(n), &tokens.at(r.prompt_index));
    ad::Var eps_hat = model.predict(tape, tape.constant(x_t), steps, toks);
    ad::Var mean = ad::add(tape.constant(x_t.cwiseProduct(keep)), ad::cwise_mul(eps_hat, tape.constant(eps_coef)));
    ad::Var term = reinforce_surrogate(mean, x_prev, variances, r.advantage);
    total = have_total ? ad::add(total, term) : term;
    have_total = true;
  }
  if (!have_total) {
    res.skipped = true;
    res.reason = "no stochastic steps";
    return res;
  }
  ad::Var loss = ad::scale(total, 1.0 / static_cast<double>(rollouts.size()));
  res.loss = loss.scalar();
  model.params().zero_grad();
  tape.backward(loss);
  if (!std::isfinite(res.loss) || !grads_finite(model.params())) {
    model.params().zero_grad();
    res.skipped = true;
    res.reason = "non-finite gradient";
    return res;
  }
  res.grad_norm = clip_grad_norm(model.params(), cfg.clip_norm);
  optimizer.step(model.params());
  return res;
}

namespace {

Json curve_json(const std::vector<RewardCurveRow>& rows) {
  Json j = Json::array();
  for (const auto& r : rows) j.push_back({r.update, r.prompt_id, r.mean_reward, r.std_reward});
  return j;
}

std::vector<RewardCurveRow> curve_from_json(const Json& j) {
  std::vector<RewardCurveRow> rows;
  for (const auto& e : j)
    rows.push_back({e.at(0).get<long long>(), e.at(1).get<std::string>(), e.at(2).get<double>(), e.at(3).get<double>()});
  return rows;
}

}  // namespace

DdpoResult train_ddpo(ToyDenoiser& model, const std::vector<PromptSpec>& prompts, const HashedTextEncoder& encoder,
                      const LatentDecoder& decode, const RewardFn& reward, const NoiseSchedule& schedule,
                      const DdpoConfig& cfg, const DdpoRunOptions& options) {
  cfg.validate();
  if (prompts.empty()) throw InsufficientData("DDPO needs at least one prompt");
  Adam adam(model.params(), {cfg.learning_rate});
  DdpoResult result;
  long long start = 0;
  if (options.resume_from) {
    const Checkpoint ckpt = load_checkpoint(*options.resume_from);
    if (ckpt.kind != "ddpo") throw FormatError("resume checkpoint is not a DDPO checkpoint");
    ckpt.get_params(model.params(), "model.");
    adam.load_state(model.params(), ckpt.tensors, ckpt.meta.at("adam_steps").get<long long>());
    start = ckpt.epoch;
    result.curve = curve_from_json(ckpt.meta.at("curve"));
    result.mean_rewards = ckpt.meta.at("mean_rewards").get<std::vector<double>>();
    result.dropped = ckpt.meta.at("dropped").get<std::size_t>();
    result.skipped_updates = ckpt.meta.at("skipped_updates").get<std::size_t>();
  }
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  const std::size_t per_update = std::min<std::size_t>(static_cast<std::size_t>(cfg.prompts_per_update), prompts.size());
  for (long long u = start; u < cfg.updates; ++u) {
    std::vector<std::size_t> selected;
    for (std::size_t j = 0; j < per_update; ++j)
      selected.push_back((static_cast<std::size_t>(u) * per_update + j) % prompts.size());
    RolloutBatch batch = collect_rollouts(model, prompts, selected, encoder, decode, reward, schedule, cfg, u);
    result.dropped += batch.dropped.size();
    PerPromptStats stats;
    for (const auto& r : batch.rollouts) stats.update(r.prompt_id, r.reward);
    normalize_advantages(batch.rollouts, stats, cfg.epsilon);
    const PolicyStepResult step = policy_gradient_step(model, adam, batch.rollouts, prompts, encoder, schedule, cfg);
    if (step.skipped) ++result.skipped_updates;

    double sum = 0.0;
    for (const auto& r : batch.rollouts) sum += r.reward;
    const double mean_reward = batch.rollouts.empty() ? 0.0 : sum / static_cast<double>(batch.rollouts.size());
    result.mean_rewards.push_back(mean_reward);
    for (std::size_t p : selected) {
      const std::string& id = prompts[p].id;
      if (stats.count(id) == 0) continue;
      result.curve.push_back({u, id, stats.mean(id), stats.stddev(id)});
    }
    if (options.on_update) options.on_update(u, mean_reward, step);

    const bool due = cfg.checkpoint_interval > 0 && ((u + 1) % cfg.checkpoint_interval == 0 || u + 1 == cfg.updates);
    if (options.checkpoint_dir && due) {
      Checkpoint ckpt;
      ckpt.kind = "ddpo";
      ckpt.epoch = u + 1;
      ckpt.meta = options.extra_meta;
      ckpt.meta.update(model.to_checkpoint().meta);
      ckpt.meta["adam_steps"] = adam.steps();
      ckpt.meta["curve"] = curve_json(result.curve);
      ckpt.meta["mean_rewards"] = result.mean_rewards;
      ckpt.meta["dropped"] = result.dropped;
      ckpt.meta["skipped_updates"] = result.skipped_updates;
      ckpt.meta["schedule"] = schedule_json(schedule);
      ckpt.put_params(model.params(), "model.");
      for (auto& t : adam.state(model.params())) ckpt.tensors.push_back(std::move(t));
      std::ostringstream name;
      name << "ddpo_" << std::setw(5) << std::setfill('0') << (u + 1) << ".ckpt";
      const auto path = *options.checkpoint_dir / name.str();
      save_checkpoint(path, ckpt);
      result.checkpoints.push_back(path);
    }
  }
  return result;
}

std::string reward_curve_csv(const std::vector<RewardCurveRow>& rows) {
  std::ostringstream out;
  out << "update,prompt_id,mean_reward,std_reward\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.update << ',' << r.prompt_id << ',' << r.mean_reward << ',' << r.std_reward << '\n';
  return out.str();
}

Raster reward_curve_plot(const std::vector<RewardCurveRow>& rows, int width, int height) {
  std::map<std::string, Series> by_prompt;
  for (const auto& r : rows) {
    Series& s = by_prompt[r.prompt_id];
    s.name = r.prompt_id;
    s.points.emplace_back(static_cast<double>(r.update), r.mean_reward);
  }
  std::vector<Series> series;
  for (auto& [id, s] : by_prompt) series.push_back(std::move(s));
  return line_plot(series, width, height, 0.0, 1.0);
}

}  // namespace sketchtune
