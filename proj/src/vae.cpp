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

#include "sketchtune/vae.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "sketchtune/image.hpp"
#include "sketchtune/optim.hpp"

namespace sketchtune {

void VaeLossConfig::validate() const {
  if (!(kl_weight >= 0.0) || !std::isfinite(kl_weight)) throw InvalidArgument("kl_weight must be a finite non-negative number");
  if (!(lpips_weight >= 0.0) || !std::isfinite(lpips_weight))
    throw InvalidArgument("lpips_weight must be a finite non-negative number");
  if (!use_recon && kl_weight == 0.0 && lpips_weight == 0.0) throw InvalidArgument("loss has no active component");
}

VaeLossBreakdown vae_loss(const ad::Matrix& x, const ad::Matrix& xhat, const LatentPosterior& posterior,
                          const VaeLossConfig& cfg, const PerceptualExtractor* extractor) {
  cfg.validate();
  VaeLossBreakdown out;
  if (cfg.use_recon) out.recon = cfg.recon_norm == ReconNorm::L2 ? recon_loss(x, xhat) : recon_loss_l1(x, xhat);
  if (cfg.kl_weight != 0.0) out.kl = kl_loss(posterior);
  if (cfg.lpips_weight != 0.0) {
    if (!extractor || !extractor->available()) throw ExtractorUnavailable("LPIPS term needs a perceptual extractor");
    out.lpips = lpips_loss(x, xhat, *extractor);
  }
  out.total = out.recon + cfg.kl_weight * out.kl + cfg.lpips_weight * out.lpips;
  return out;
}

ad::Var kl_loss(ad::Var mean, ad::Var log_variance) {
  if (!mean.value().allFinite() || !log_variance.value().allFinite()) throw NonFinite("kl_loss: non-finite posterior");
  ad::Var terms = sub(add(square(mean), exp(log_variance)), add_scalar(log_variance, 1.0));
  return scale(sum(terms), 0.5 / static_cast<double>(mean.cols()));
}

VaeLossVars vae_loss(ad::Tape& tape, ad::Var x, ad::Var xhat, ad::Var mean, ad::Var log_variance,
                     const VaeLossConfig& cfg, const PerceptualExtractor* extractor) {
  cfg.validate();
  VaeLossVars out;
  ad::Var total = tape.constant(ad::Matrix::Zero(1, 1));
  if (cfg.use_recon) {
    ad::Var r = cfg.recon_norm == ReconNorm::L2 ? ad::mse(x, xhat) : ad::mean(ad::abs(ad::sub(x, xhat)));
    out.parts.recon = r.scalar();
    total = add(total, r);
  }
  if (cfg.kl_weight != 0.0) {
    ad::Var k = kl_loss(mean, log_variance);
    out.parts.kl = k.scalar();
    total = add(total, scale(k, cfg.kl_weight));
  }
  if (cfg.lpips_weight != 0.0) {
    if (!extractor || !extractor->available()) throw ExtractorUnavailable("LPIPS term needs a perceptual extractor");
    ad::Var p = lpips_loss(tape, x, xhat, *extractor);
    out.parts.lpips = p.scalar();
    total = add(total, scale(p, cfg.lpips_weight));
  }
  out.parts.total = total.scalar();
  out.total = total;
  return out;
}

namespace {

ad::Matrix init_weight(int rows, int cols, std::mt19937_64& rng, double gain = 1.0) {
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(cols)));
  ad::Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  return w;
}

}  // namespace

ToyAutoencoder::ToyAutoencoder(const AutoencoderConfig& cfg) : cfg_(cfg) {
  if (cfg.image_size <= 0 || cfg.hidden <= 0 || cfg.latent_side <= 0) throw InvalidArgument("autoencoder dimensions must be positive");
  std::mt19937_64 rng(cfg.seed);
  const int px = cfg.pixels(), hid = cfg.hidden, lat = cfg.latent_dim();
  enc_w_ = params_.add("encoder.w", init_weight(hid, px, rng));
  enc_b_ = params_.add("encoder.b", ad::Matrix::Zero(hid, 1));
  mu_w_ = params_.add("encoder.mean.w", init_weight(lat, hid, rng));
  mu_b_ = params_.add("encoder.mean.b", ad::Matrix::Zero(lat, 1));
  lv_w_ = params_.add("encoder.logvar.w", init_weight(lat, hid, rng, 0.1));
  lv_b_ = params_.add("encoder.logvar.b", ad::Matrix::Zero(lat, 1));
  dec_w1_ = params_.add("decoder.hidden.w", init_weight(hid, lat, rng));
  dec_b1_ = params_.add("decoder.hidden.b", ad::Matrix::Zero(hid, 1));
  dec_w2_ = params_.add("decoder.out.w", init_weight(px, hid, rng));
  dec_b2_ = params_.add("decoder.out.b", ad::Matrix::Zero(px, 1));
}

ToyAutoencoder::EncodedVars ToyAutoencoder::encode(ad::Tape& tape, ad::Var x) {
  auto p = [&](std::size_t i) { return tape.parameter(params_[i]); };
  ad::Var h = silu(add_bias(matmul(p(enc_w_), x), p(enc_b_)));
  return {add_bias(matmul(p(mu_w_), h), p(mu_b_)), add_bias(matmul(p(lv_w_), h), p(lv_b_))};
}

ad::Var ToyAutoencoder::decode(ad::Tape& tape, ad::Var z) {
  auto p = [&](std::size_t i) { return tape.parameter(params_[i]); };
  ad::Var h = silu(add_bias(matmul(p(dec_w1_), z), p(dec_b1_)));
  return sigmoid(add_bias(matmul(p(dec_w2_), h), p(dec_b2_)));
}

LatentPosterior ToyAutoencoder::encode(const ad::Matrix& x) const {
  const auto& P = params_;
  ad::Matrix h = (P[enc_w_].value * x).colwise() + P[enc_b_].value.col(0);
  h = (h.array() / (1.0 + (-h.array()).exp())).matrix();
  LatentPosterior out;
  out.mean = (P[mu_w_].value * h).colwise() + P[mu_b_].value.col(0);
  out.log_variance = (P[lv_w_].value * h).colwise() + P[lv_b_].value.col(0);
  return out;
}

ad::Matrix ToyAutoencoder::decode(const ad::Matrix& z) const {
  const auto& P = params_;
  ad::Matrix h = (P[dec_w1_].value * z).colwise() + P[dec_b1_].value.col(0);
  h = (h.array() / (1.0 + (-h.array()).exp())).matrix();
  ad::Matrix o = (P[dec_w2_].value * h).colwise() + P[dec_b2_].value.col(0);
  return (1.0 / (1.0 + (-o.array()).exp())).matrix();
}

ad::Matrix ToyAutoencoder::reconstruct(const ad::Matrix& x) const { return decode(encode(x).mean); }

Checkpoint ToyAutoencoder::to_checkpoint() const {
  Checkpoint c;
  c.kind = "vae";
  c.meta["arch"] = {{"image_size", cfg_.image_size}, {"hidden", cfg_.hidden}, {"latent_side", cfg_.latent_side}, {"seed", cfg_.seed}};
  c.put_params(params_);
  return c;
}

ToyAutoencoder ToyAutoencoder::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "vae") throw FormatError("checkpoint kind '" + ckpt.kind + "' is not a vae");
  AutoencoderConfig cfg;
  const auto& a = ckpt.meta.at("arch");
  cfg.image_size = a.at("image_size").get<int>();
  cfg.hidden = a.at("hidden").get<int>();
  cfg.latent_side = a.at("latent_side").get<int>();
  cfg.seed = a.at("seed").get<std::uint64_t>();
  ToyAutoencoder m(cfg);
  ckpt.get_params(m.params_);
  return m;
}

VaeEpochMetrics evaluate_vae(const ToyAutoencoder& model, const ad::Matrix& data, const VaeLossConfig& cfg,
                             const PerceptualExtractor& extractor, int epoch) {
  const LatentPosterior post = model.encode(data);
  const ad::Matrix xhat = model.decode(post.mean);
  VaeEpochMetrics m;
  m.epoch = epoch;
  m.mse = recon_loss(data, xhat);
  m.kl = kl_loss(post);
  m.lpips = extractor.available() ? lpips_loss(data, xhat, extractor) : 0.0;
  const double recon = cfg.recon_norm == ReconNorm::L2 ? m.mse : recon_loss_l1(data, xhat);
  m.total = (cfg.use_recon ? recon : 0.0) + cfg.kl_weight * m.kl + cfg.lpips_weight * m.lpips;
  return m;
}

namespace {

Json vae_config_json(const VaeLossConfig& cfg, const VaeTrainOptions& options) {
  return {{"use_recon", cfg.use_recon},
          {"kl_weight", cfg.kl_weight},
          {"lpips_weight", cfg.lpips_weight},
          {"recon_norm", cfg.recon_norm == ReconNorm::L2 ? "L2" : "L1"},
          {"epochs", options.epochs},
          {"batch_size", options.batch_size},
          {"learning_rate", options.learning_rate},
          {"seed", options.seed}};
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

}  // namespace

VaeTrainResult train_vae(const ad::Matrix& data, const VaeLossConfig& cfg, const AutoencoderConfig& arch,
                         const VaeTrainOptions& options, const PerceptualExtractor& extractor) {
  cfg.validate();
  if (data.rows() != arch.pixels()) throw ShapeMismatch("training data rows must equal image_size^2");
  if (data.cols() == 0) throw InsufficientData("no training images");
  if (options.epochs < 0 || options.batch_size <= 0) throw InvalidArgument("epochs must be >= 0 and batch_size > 0");

  VaeTrainResult result;
  result.model = ToyAutoencoder(arch);
  auto& model = result.model;
  Adam adam(model.params(), {options.learning_rate});
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  result.initial = evaluate_vae(model, data, cfg, extractor, 0);

  auto save = [&](const std::filesystem::path& path, const ToyAutoencoder& m, int epoch) {
    Checkpoint c = m.to_checkpoint();
    c.epoch = epoch;
    c.rng_state = rng_state(rng);
    c.config = vae_config_json(cfg, options);
    save_checkpoint(path, c);
    result.checkpoints.push_back(path);
  };

  const auto n = static_cast<int>(data.cols());
  std::vector<int> order(static_cast<std::size_t>(n));
  ad::ParameterSet last_good = model.params();
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += options.batch_size) {
      const int count = std::min(options.batch_size, n - start);
      ad::Matrix xb(data.rows(), count);
      for (int j = 0; j < count; ++j) xb.col(j) = data.col(order[static_cast<std::size_t>(start + j)]);
      ad::Matrix eps(arch.latent_dim(), count);
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);

      ad::Tape tape;
      ad::Var x = tape.constant(std::move(xb));
      auto enc = model.encode(tape, x);
      ad::Var z = add(enc.mean, cwise_mul(exp(scale(enc.log_variance, 0.5)), tape.constant(std::move(eps))));
      ad::Var xhat = model.decode(tape, z);
      auto loss = vae_loss(tape, x, xhat, enc.mean, enc.log_variance, cfg, &extractor);
      if (!std::isfinite(loss.parts.total)) {
        if (options.checkpoint_dir) {
          ToyAutoencoder good = model;
          good.params() = last_good;
          save(*options.checkpoint_dir / "last_good.ckpt", good, epoch - 1);
        }
        throw DivergenceDetected("non-finite VAE loss at epoch " + std::to_string(epoch));
      }
      model.params().zero_grad();
      tape.backward(loss.total);
      adam.step(model.params());
    }
    result.trace.push_back(evaluate_vae(model, data, cfg, extractor, epoch));
    if (!std::isfinite(result.trace.back().total)) {
      if (options.checkpoint_dir) {
        ToyAutoencoder good = model;
        good.params() = last_good;
        save(*options.checkpoint_dir / "last_good.ckpt", good, epoch - 1);
      }
      throw DivergenceDetected("non-finite VAE metrics at epoch " + std::to_string(epoch));
    }
    last_good = model.params();
    if (options.checkpoint_dir && options.checkpoint_interval > 0 && epoch % options.checkpoint_interval == 0)
      save(*options.checkpoint_dir / ("vae_epoch_" + std::to_string(epoch) + ".ckpt"), model, epoch);
  }
  if (options.checkpoint_dir) save(*options.checkpoint_dir / "vae_final.ckpt", model, options.epochs);
  return result;
}

ad::Matrix load_image_matrix(const DatasetManifest& m, int size, bool positives_only) {
  std::vector<ad::Vector> cols;
  for (const auto& r : m.records) {
    if (positives_only && r.polarity != Polarity::positive) continue;
    const Raster img = read_png(m.image_path(r));
    if (img.height() != size || img.width() != size)
      throw ShapeMismatch("image " + r.id + " is not " + std::to_string(size) + "x" + std::to_string(size));
    const PlaneF unit = to_unit(img.luma());
    cols.push_back(Eigen::Map<const ad::Vector>(unit.data(), unit.size()));
  }
  ad::Matrix out(static_cast<Eigen::Index>(size) * size, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = cols[i];
  return out;
}

std::string metric_trace_csv(const std::vector<VaeEpochMetrics>& trace) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "epoch,mse,lpips,kl,total\n";
  for (const auto& m : trace) ss << m.epoch << ',' << m.mse << ',' << m.lpips << ',' << m.kl << ',' << m.total << '\n';
  return ss.str();
}

}  // namespace sketchtune
