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

#include "sketchtune/diffusion.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "sketchtune/digest.hpp"
#include "sketchtune/optim.hpp"

namespace sketchtune {

NoiseSchedule make_schedule(int steps, ScheduleKind kind, double beta_min, double beta_max) {
  if (kind != ScheduleKind::linear) throw InvalidRange("unsupported schedule kind");
  if (steps < 1) throw InvalidRange("schedule needs at least one step");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw InvalidRange("need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  if (steps == 1)
    s.betas = Eigen::VectorXd::Constant(1, beta_min);
  else
    s.betas = Eigen::VectorXd::LinSpaced(steps, beta_min, beta_max);
  s.alpha_bars.resize(steps);
  s.posterior_variances.resize(steps);
  double abar = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double prev = abar;
    abar *= 1.0 - s.betas(i);
    s.alpha_bars(i) = abar;
    s.posterior_variances(i) = s.betas(i) * (1.0 - prev) / (1.0 - abar);
  }
  return s;
}

Json schedule_json(const NoiseSchedule& s) {
  return {{"steps", s.steps}, {"kind", "linear"}, {"beta_min", s.beta_min}, {"beta_max", s.beta_max}};
}

NoiseSchedule schedule_from_json(const Json& j) {
  return make_schedule(j.at("steps").get<int>(), ScheduleKind::linear, j.at("beta_min").get<double>(),
                       j.at("beta_max").get<double>());
}

std::vector<std::string> HashedTextEncoder::tokenize(const std::string& prompt) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : prompt) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

ConditionEmbedding HashedTextEncoder::embed(const std::string& prompt) const {
  auto toks = tokenize(prompt);
  if (toks.empty()) toks.emplace_back("<empty>");
  ConditionEmbedding e;
  e.prompt = prompt;
  e.tokens.resize(dim_, static_cast<Eigen::Index>(toks.size()));
  const double s = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed_, toks[i]));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int d = 0; d < dim_; ++d) e.tokens(d, static_cast<Eigen::Index>(i)) = s * normal(rng);
  }
  return e;
}

Eigen::VectorXd HashedTextEncoder::pooled(const std::string& prompt) const { return embed(prompt).tokens.rowwise().mean(); }

namespace {

ad::Matrix init_normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  ad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

ad::ConvGeometry same_conv(int batch, int side, int channels) {
  ad::ConvGeometry g;
  g.batch = batch;
  g.height = side;
  g.width = side;
  g.channels = channels;
  g.kernel = 3;
  g.stride = 1;
  g.padding = 1;
  return g;
}

}  // namespace

ToyDenoiser::ToyDenoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
  if (cfg.side <= 0 || cfg.channels <= 0 || cfg.embed_dim <= 0 || cfg.time_dim <= 0 || cfg.time_dim % 2 != 0)
    throw InvalidArgument("denoiser dimensions must be positive (time_dim even)");
  std::mt19937_64 rng(cfg.seed);
  const int c = cfg.channels;
  conv1_w_ = params_.add("conv1.w", init_normal(c, 9, std::sqrt(2.0 / 9.0), rng));
  conv1_b_ = params_.add("conv1.b", ad::Matrix::Zero(c, 1));
  scale_t_ = params_.add("film.scale.time", init_normal(c, cfg.time_dim, 0.1 / std::sqrt(cfg.time_dim), rng));
  scale_c_ = params_.add("film.scale.cond", init_normal(c, cfg.embed_dim, 0.1 / std::sqrt(cfg.embed_dim), rng));
  scale_b_ = params_.add("film.scale.b", ad::Matrix::Zero(c, 1));
  shift_t_ = params_.add("film.shift.time", init_normal(c, cfg.time_dim, 1.0 / std::sqrt(cfg.time_dim), rng));
  shift_c_ = params_.add("film.shift.cond", init_normal(c, cfg.embed_dim, 1.0 / std::sqrt(cfg.embed_dim), rng));
  shift_b_ = params_.add("film.shift.b", ad::Matrix::Zero(c, 1));
  conv2_w_ = params_.add("conv2.w", init_normal(c, 9 * c, std::sqrt(2.0 / (9.0 * c)), rng));
  conv2_b_ = params_.add("conv2.b", ad::Matrix::Zero(c, 1));
  conv3_w_ = params_.add("conv3.w", init_normal(1, 9 * c, std::sqrt(1.0 / (9.0 * c)), rng));
  conv3_b_ = params_.add("conv3.b", ad::Matrix::Zero(1, 1));
  query_ = params_.add("attn.query", init_normal(cfg.embed_dim, 1, 1.0, rng));
}

ad::Matrix ToyDenoiser::time_embedding(const std::vector<int>& steps) const {
  const int half = cfg_.time_dim / 2;
  ad::Matrix e(cfg_.time_dim, static_cast<Eigen::Index>(steps.size()));
  for (std::size_t b = 0; b < steps.size(); ++b)
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(1000.0) * k / std::max(1, half - 1));
      e(k, static_cast<Eigen::Index>(b)) = std::sin(steps[b] * freq);
      e(k + half, static_cast<Eigen::Index>(b)) = std::cos(steps[b] * freq);
    }
  return e;
}

ad::Var ToyDenoiser::predict(ad::Tape& tape, ad::Var x_t, const std::vector<int>& steps,
                             const std::vector<const ad::Matrix*>& tokens) {
  const int batch = static_cast<int>(x_t.cols());
  const int pos = cfg_.positions();
  if (x_t.rows() != pos) throw ShapeMismatch("denoiser input must have side*side rows");
  if (static_cast<int>(steps.size()) != batch || static_cast<int>(tokens.size()) != batch)
    throw ShapeMismatch("denoiser needs one step and one prompt per column");
  auto p = [&](std::size_t i) { return tape.parameter(params_[i]); };

  ad::Var temb = tape.constant(time_embedding(steps));
  ad::Var ctx = attention_pool(tokens, p(query_));
  ad::Var film_scale = add_bias(add(matmul(p(scale_t_), temb), matmul(p(scale_c_), ctx)), p(scale_b_));
  ad::Var film_shift = add_bias(add(matmul(p(shift_t_), temb), matmul(p(shift_c_), ctx)), p(shift_b_));

  ad::Var x = reshape(x_t, 1, static_cast<Eigen::Index>(batch) * pos);
  ad::Var h = conv2d(x, p(conv1_w_), p(conv1_b_), same_conv(batch, cfg_.side, 1));
  h = silu(film(h, film_scale, film_shift, pos));
  h = silu(conv2d(h, p(conv2_w_), p(conv2_b_), same_conv(batch, cfg_.side, cfg_.channels)));
  ad::Var out = conv2d(h, p(conv3_w_), p(conv3_b_), same_conv(batch, cfg_.side, cfg_.channels));
  return reshape(out, pos, batch);
}

ad::Matrix ToyDenoiser::predict(const ad::Matrix& x_t, const std::vector<int>& steps,
                                const std::vector<const ad::Matrix*>& tokens) const {
  ad::Tape tape;
  return const_cast<ToyDenoiser*>(this)->predict(tape, tape.constant(x_t), steps, tokens).value();
}

Checkpoint ToyDenoiser::to_checkpoint() const {
  Checkpoint c;
  c.kind = "unet";
  c.meta["arch"] = {{"side", cfg_.side},
                    {"channels", cfg_.channels},
                    {"embed_dim", cfg_.embed_dim},
                    {"time_dim", cfg_.time_dim},
                    {"seed", cfg_.seed}};
  c.put_params(params_);
  return c;
}

ToyDenoiser ToyDenoiser::from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  const auto& a = ckpt.meta.at("arch");
  DenoiserConfig cfg;
  cfg.side = a.at("side").get<int>();
  cfg.channels = a.at("channels").get<int>();
  cfg.embed_dim = a.at("embed_dim").get<int>();
  cfg.time_dim = a.at("time_dim").get<int>();
  cfg.seed = a.at("seed").get<std::uint64_t>();
  ToyDenoiser m(cfg);
  ckpt.get_params(m.params_, prefix);
  return m;
}

namespace {

struct NoisedBatch {
  ad::Matrix x_t;
  ad::Matrix eps;
  std::vector<int> steps;
};

NoisedBatch draw_noised(const ad::Matrix& x0, const NoiseSchedule& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, s.steps);
  std::normal_distribution<double> normal(0.0, 1.0);
  NoisedBatch b;
  b.eps.resize(x0.rows(), x0.cols());
  b.x_t.resize(x0.rows(), x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const int t = pick(rng);
    b.steps.push_back(t);
    for (Eigen::Index i = 0; i < x0.rows(); ++i) b.eps(i, j) = normal(rng);
    b.x_t.col(j) = add_noise(x0.col(j), b.eps.col(j), t, s);
  }
  return b;
}

}  // namespace

double denoising_loss(const ToyDenoiser& model, const ad::Matrix& x0, const std::vector<const ad::Matrix*>& tokens,
                      const NoiseSchedule& s, std::uint64_t seed) {
  const NoisedBatch b = draw_noised(x0, s, seed);
  const ad::Matrix pred = model.predict(b.x_t, b.steps, tokens);
  return (b.eps - pred).squaredNorm() / static_cast<double>(b.eps.size());
}

ad::Var denoising_loss(ad::Tape& tape, ToyDenoiser& model, const ad::Matrix& x0,
                       const std::vector<const ad::Matrix*>& tokens, const NoiseSchedule& s, std::uint64_t seed) {
  NoisedBatch b = draw_noised(x0, s, seed);
  ad::Var pred = model.predict(tape, tape.constant(std::move(b.x_t)), b.steps, tokens);
  return ad::mse(tape.constant(std::move(b.eps)), pred);
}

ad::Matrix eps_to_mean(const ad::Matrix& x_t, const ad::Matrix& eps_hat, int t, const NoiseSchedule& s) {
  const double beta = s.beta(t), abar = s.alpha_bar(t);
  return (x_t - (beta / std::sqrt(1.0 - abar)) * eps_hat) / std::sqrt(1.0 - beta);
}

ReverseStep reverse_step(const ToyDenoiser& model, const ad::Matrix& x_t, int t, const ad::Matrix& tokens,
                         const NoiseSchedule& s, const ad::Matrix& noise) {
  if (t < 1 || t > s.steps) throw StepOutOfRange("reverse_step: step " + std::to_string(t) + " out of range");
  if (noise.rows() != x_t.rows() || noise.cols() != x_t.cols()) throw ShapeMismatch("reverse_step: noise shape");
  std::vector<const ad::Matrix*> toks(static_cast<std::size_t>(x_t.cols()), &tokens);
  const ad::Matrix eps_hat = model.predict(x_t, std::vector<int>(static_cast<std::size_t>(x_t.cols()), t), toks);
  ReverseStep r;
  r.mean = eps_to_mean(x_t, eps_hat, t, s);
  r.variance = s.posterior_variance(t);
  r.x_prev = t > 1 ? ad::Matrix(r.mean + std::sqrt(r.variance) * noise) : r.mean;
  return r;
}

double DiffusionTrajectory::total_log_prob() const {
  double total = 0.0;
  for (int k = 0; k < steps; ++k)
    if (step_at(k) >= 2) total += log_probs(k);
  return total;
}

SampleResult sample(const ToyDenoiser& model, const ConditionEmbedding& cond, const NoiseSchedule& s,
                    std::uint64_t seed) {
  const int dim = model.config().positions();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    ad::Matrix m(dim, 1);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  SampleResult out;
  auto& tr = out.trajectory;
  tr.prompt = cond.prompt;
  tr.seed = seed;
  tr.steps = s.steps;
  tr.states.resize(dim, s.steps + 1);
  tr.means.resize(dim, s.steps);
  tr.variances.resize(s.steps);
  tr.log_probs.resize(s.steps);
  ad::Matrix x = draw();
  tr.states.col(0) = x;
  for (int t = s.steps; t >= 1; --t) {
    const int k = s.steps - t;
    const ad::Matrix noise = draw();
    ReverseStep r = reverse_step(model, x, t, cond.tokens, s, noise);
    tr.means.col(k) = r.mean;
    tr.variances(k) = r.variance;
    tr.log_probs(k) = t >= 2 ? step_log_prob(r.x_prev, r.mean, r.variance) : 0.0;
    x = std::move(r.x_prev);
    tr.states.col(k + 1) = x;
  }
  out.latent = x;
  return out;
}

Eigen::VectorXd recompute_log_probs(const ToyDenoiser& model, const DiffusionTrajectory& traj, const ad::Matrix& tokens,
                                    const NoiseSchedule& s) {
  if (traj.steps != s.steps) throw ShapeMismatch("trajectory was sampled with a different schedule");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(traj.steps);
  for (int k = 0; k < traj.steps; ++k) {
    const int t = traj.step_at(k);
    if (t < 2) continue;
    const ad::Matrix x_t = traj.states.col(k);
    std::vector<const ad::Matrix*> toks{&tokens};
    const ad::Matrix eps_hat = model.predict(x_t, {t}, toks);
    out(k) = step_log_prob(traj.states.col(k + 1), eps_to_mean(x_t, eps_hat, t, s), s.posterior_variance(t));
  }
  return out;
}

namespace {

constexpr char kTrajMagic[8] = {'S', 'K', 'T', 'T', 'R', 'A', 'J', '\0'};

void append_doubles(std::string& out, const double* p, Eigen::Index n) {
  out.append(reinterpret_cast<const char*>(p), static_cast<std::size_t>(n) * sizeof(double));
}

}  // namespace

void save_trajectory(const std::filesystem::path& path, const DiffusionTrajectory& traj) {
  Json header = {{"prompt", traj.prompt},
                 {"seed", traj.seed},
                 {"steps", traj.steps},
                 {"dim", traj.states.rows()},
                 {"layout", "states(dim,T+1) means(dim,T) variances(T) log_probs(T); f64 little-endian column-major"}};
  const std::string head = header.dump();
  std::string out(kTrajMagic, sizeof(kTrajMagic));
  const std::uint32_t version = kTrajectoryVersion;
  const std::uint64_t len = head.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof(version));
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += head;
  append_doubles(out, traj.states.data(), traj.states.size());
  append_doubles(out, traj.means.data(), traj.means.size());
  append_doubles(out, traj.variances.data(), traj.variances.size());
  append_doubles(out, traj.log_probs.data(), traj.log_probs.size());
  write_file_atomic(path, out);
}

DiffusionTrajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trajectory " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  if (data.size() < 20 || std::memcmp(data.data(), kTrajMagic, 8) != 0) throw FormatError(path.string() + " is not a trajectory");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  std::memcpy(&version, data.data() + 8, 4);
  std::memcpy(&len, data.data() + 12, 8);
  if (version != kTrajectoryVersion) throw FormatError("unsupported trajectory version");
  std::size_t pos = 20;
  if (pos + len > data.size()) throw FormatError("truncated trajectory header");
  const Json header = Json::parse(data.substr(pos, len));
  pos += len;
  DiffusionTrajectory tr;
  tr.prompt = header.at("prompt").get<std::string>();
  tr.seed = header.at("seed").get<std::uint64_t>();
  tr.steps = header.at("steps").get<int>();
  const auto dim = header.at("dim").get<Eigen::Index>();
  auto take = [&](double* dst, Eigen::Index n) {
    const std::size_t bytes = static_cast<std::size_t>(n) * sizeof(double);
    if (pos + bytes > data.size()) throw FormatError("truncated trajectory payload");
    std::memcpy(dst, data.data() + pos, bytes);
    pos += bytes;
  };
  tr.states.resize(dim, tr.steps + 1);
  tr.means.resize(dim, tr.steps);
  tr.variances.resize(tr.steps);
  tr.log_probs.resize(tr.steps);
  take(tr.states.data(), tr.states.size());
  take(tr.means.data(), tr.means.size());
  take(tr.variances.data(), tr.variances.size());
  take(tr.log_probs.data(), tr.log_probs.size());
  return tr;
}

std::vector<double> train_denoiser(ToyDenoiser& model, const ad::Matrix& latents, const std::vector<ad::Matrix>& tokens,
                                   const NoiseSchedule& s, const DenoiserTrainOptions& options) {
  if (latents.cols() != static_cast<Eigen::Index>(tokens.size())) throw ShapeMismatch("one prompt per latent required");
  if (latents.rows() != model.config().positions()) throw ShapeMismatch("latent size does not match the denoiser");
  if (options.batch_size <= 0 || options.epochs < 0) throw InvalidArgument("bad denoiser training options");
  Adam adam(model.params(), {options.learning_rate});
  std::mt19937_64 rng(options.seed);
  const auto n = static_cast<int>(latents.cols());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<double> trace;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double acc = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += options.batch_size) {
      const int count = std::min(options.batch_size, n - start);
      ad::Matrix xb(latents.rows(), count);
      std::vector<const ad::Matrix*> toks;
      for (int j = 0; j < count; ++j) {
        const int idx = order[static_cast<std::size_t>(start + j)];
        xb.col(j) = latents.col(idx);
        toks.push_back(&tokens[static_cast<std::size_t>(idx)]);
      }
      ad::Tape tape;
      ad::Var loss = denoising_loss(tape, model, xb, toks, s, rng());
      if (!std::isfinite(loss.scalar())) throw DivergenceDetected("non-finite denoising loss");
      model.params().zero_grad();
      tape.backward(loss);
      clip_grad_norm(model.params(), 1.0);
      adam.step(model.params());
      acc += loss.scalar();
      ++batches;
    }
    trace.push_back(acc / std::max(1, batches));
  }
  return trace;
}

}  // namespace sketchtune
