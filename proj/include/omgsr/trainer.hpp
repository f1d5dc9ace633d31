#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "omgsr/checkpoint.hpp"
#include "omgsr/chunking.hpp"
#include "omgsr/dataset.hpp"
#include "omgsr/degrade.hpp"
#include "omgsr/losses.hpp"
#include "omgsr/models.hpp"
#include "omgsr/predict.hpp"
#include "omgsr/rng.hpp"
#include "omgsr/schedule.hpp"

namespace omgsr {

template <typename S>
struct TrainConfig {
  S lr = static_cast<S>(2e-5);
  int grad_accum = 4;
  int vae_lora_rank = 16;
  int denoiser_lora_rank = 64;
  S lora_scale = S(1);
  LossWeights<S> weights;
  int oc_overlap = 16;  // chunk overlap for the OC losses
  int crop = 0;         // optional HQ-pixel training crop; 0 = full images
};

template <typename S>
struct PretrainLog {
  std::vector<S> vae_loss;
  std::vector<S> denoiser_loss;
};

namespace detail {

template <typename S>
Tensor<S> random_crop(const Tensor<S>& img, int crop, Rng& rng) {
  if (crop <= 0 || crop >= img.height) return img;
  const int y = rng.uniform_int(0, img.height - crop);
  const int x = rng.uniform_int(0, img.width - crop);
  Tensor<S> out(img.channels, crop, crop);
  for (int c = 0; c < img.channels; ++c)
    for (int dy = 0; dy < crop; ++dy)
      for (int dx = 0; dx < crop; ++dx)
        out.at(c, dy, dx) = img.at(c, y + dy, x + dx);
  return out;
}

// OC layout for a training/output resolution: chunk at the discriminator's
// native input when the image is larger, otherwise a single full patch.
template <typename S>
ChunkLayout oc_layout(int h, int w, const ModelConfig<S>& mc, int overlap) {
  const int native = mc.disc_native_input;
  const int patch = std::min({native, h, w});
  const int ov = std::min(overlap, patch > 1 ? patch - 1 : 0);
  return plan_chunks(h, w, patch, ov);
}

}  // namespace detail

// Stage 1: VAE reconstruction; stage 2: denoiser regression at uniformly
// sampled timesteps. Both loops sample images with the given seed and step
// the optimizer once per image.
template <typename S>
PretrainLog<S> pretrain(CheckpointBundle<S>& bundle, const PairDataset<S>& ds,
                        int vae_steps, int denoiser_steps, S lr,
                        std::uint64_t seed, int crop = 0) {
  if (ds.size() == 0) throw std::invalid_argument("pretrain: empty dataset");
  Rng rng(seed);
  PretrainLog<S> log;
  const int T = bundle.sched_cfg.num_steps;
  NoiseSchedule<S> sched(bundle.sched_cfg);

  {
    auto refs = bundle.vae.params("vae");
    nn::AdamW<S> opt;
    opt.lr = lr;
    for (int step = 0; step < vae_steps; ++step) {
      const auto& img_full = ds.hq[rng.uniform_int(0, ds.size() - 1)];
      auto img = detail::random_crop(img_full, crop, rng);
      auto z = bundle.vae.encode(img, false, true);
      auto recon = bundle.vae.decode(z, true);
      const S loss = mse_loss(recon, img);
      if (!std::isfinite(static_cast<double>(loss)))
        throw std::runtime_error("pretrain: non-finite vae loss at step " +
                                 std::to_string(step));
      log.vae_loss.push_back(loss);
      nn::AdamW<S>::zero_grad(refs);
      auto gz = bundle.vae.decode_backward(mse_loss_grad(recon, img));
      bundle.vae.encode_backward(gz);
      opt.step(refs);
    }
  }

  {
    // normalize latents toward unit variance before the denoiser ever sees
    // them, so schedule noise and latents share a scale
    double sum = 0, sum2 = 0, n = 0;
    const int sample = std::min(8, ds.size());
    for (int i = 0; i < sample; ++i) {
      auto z = bundle.vae.encode(detail::random_crop(ds.hq[i], crop, rng), false);
      for (Eigen::Index j = 0; j < z.size(); ++j) {
        sum += z.data[j];
        sum2 += z.data[j] * z.data[j];
        n += 1;
      }
    }
    const double var = sum2 / n - (sum / n) * (sum / n);
    if (var > 1e-12)
      bundle.vae.set_latent_scale(bundle.vae.latent_scale() /
                                  static_cast<S>(std::sqrt(var)));
  }

  {
    auto refs = bundle.denoiser.params("denoiser");
    nn::AdamW<S> opt;
    opt.lr = lr;
    for (int step = 0; step < denoiser_steps; ++step) {
      const auto& img_full = ds.hq[rng.uniform_int(0, ds.size() - 1)];
      auto img = detail::random_crop(img_full, crop, rng);
      auto z0 = bundle.vae.encode(img, false);
      const int t = rng.uniform_int(1, T);
      auto eps = rng.normal_tensor<S>(z0.channels, z0.height, z0.width);
      auto z_t = sched.add_noise(z0, eps, t);
      auto pred = bundle.denoiser.forward(z_t, t, true);
      auto target = sched.training_target(z0, eps, t);
      const S loss = mse_loss(pred, target);
      if (!std::isfinite(static_cast<double>(loss)))
        throw std::runtime_error("pretrain: non-finite denoiser loss at step " +
                                 std::to_string(step));
      log.denoiser_loss.push_back(loss);
      nn::AdamW<S>::zero_grad(refs);
      bundle.denoiser.backward(mse_loss_grad(pred, target));
      opt.step(refs);
    }
  }
  bundle.step += vae_steps + denoiser_steps;
  return log;
}

// Mutable fine-tuning session: adapters, both optimizers, the loss-network
// stack, and the seeded noise stream.
template <typename S>
struct FinetuneState {
  CheckpointBundle<S>* bundle = nullptr;
  NoiseSchedule<S> sched;
  PerceptualEmbedder<S> embedder;
  nn::AdamW<S> gen_opt, disc_opt;
  std::vector<nn::ParamRef<S>> gen_params, disc_params;
  LossWeights<S> weights;
  int grad_accum = 4;
  int oc_overlap = 16;
  int accum_samples = 0;
  Rng rng;
  std::vector<LossBreakdown<S>> log;

  FinetuneState(CheckpointBundle<S>& b, const TrainConfig<S>& cfg,
                std::uint64_t seed)
      : bundle(&b),
        sched(b.sched_cfg),
        embedder(b.model_cfg),
        weights(cfg.weights),
        grad_accum(cfg.grad_accum),
        oc_overlap(cfg.oc_overlap),
        rng(seed) {
    if (b.t_star < 0)
      throw std::invalid_argument("finetune: bundle has no selected mid-timestep");
    if (b.vae_lora_rank == 0 && b.denoiser_lora_rank == 0) {
      Rng lora_rng = rng.fork(0x10aa);
      b.inject_adapters(cfg.vae_lora_rank, cfg.denoiser_lora_rank,
                        cfg.lora_scale, lora_rng);
    }
    gen_params = b.vae.encoder_lora_params("vae");
    for (auto& r : b.denoiser.lora_params("denoiser")) gen_params.push_back(r);
    disc_params = b.disc.params("disc");
    gen_opt.lr = cfg.lr;
    disc_opt.lr = cfg.lr;
    gen_opt.t = b.gen_opt_steps;
    disc_opt.t = b.disc_opt_steps;
    nn::AdamW<S>::zero_grad(gen_params);
    nn::AdamW<S>::zero_grad(disc_params);
  }
};

// One fine-tuning micro-batch: LQ -> adapter encoder -> one mid-timestep
// prediction -> frozen decoder, composite loss on the generator side, then a
// discriminator pass on the detached output. Optimizers step once every
// `grad_accum` calls with gradients averaged over the accumulated samples.
template <typename S>
LossBreakdown<S> finetune_step(
    FinetuneState<S>& state,
    const std::vector<std::pair<Tensor<S>, Tensor<S>>>& batch) {
  if (batch.empty()) throw std::invalid_argument("finetune_step: empty batch");
  auto& b = *state.bundle;
  const auto& w = state.weights;
  LossBreakdown<S> mean{};

  for (const auto& [x_L, x_H] : batch) {
    auto x_up = bicubic_upscale(x_L, b.scale_factor);
    if (!x_up.same_shape(x_H))
      throw std::invalid_argument("finetune_step: LQ/HQ scale mismatch");
    const auto layout =
        detail::oc_layout(x_H.height, x_H.width, b.model_cfg, state.oc_overlap);

    // frozen targets first so they cannot clobber the cached adapter pass
    auto z_H = b.vae.encode(x_H, false);
    auto z_L = b.vae.encode(x_up, true, true);
    auto eps_hat = b.denoiser.forward(z_L, b.t_star, true);
    auto z_P = predict_one_step(state.sched, z_L, eps_hat, b.t_star);
    auto x_P = b.vae.decode(z_P, true);

    auto eps = state.rng.template normal_tensor<S>(z_H.channels, z_H.height,
                                                   z_H.width);
    LossBreakdown<S> part{};
    part.lan = lan_loss(z_L, z_H, eps, state.sched, b.t_star);
    part.mse = mse_loss(x_P, x_H);
    Tensor<S> g_lpips;
    part.oc_lpips = oc_lpips(x_P, x_H, state.embedder, layout, &g_lpips);
    Tensor<S> g_gan = x_P.like_zeros();
    if (w.lambda4 != S(0))
      part.gan_g = oc_gan_g_loss(x_P, b.disc, layout, &g_gan);
    part = total_loss(part, w);

    if (!std::isfinite(static_cast<double>(part.total)))
      throw std::runtime_error("finetune_step: non-finite loss (lan=" +
                               std::to_string(static_cast<double>(part.lan)) +
                               ", mse=" + std::to_string(static_cast<double>(part.mse)) + ")");

    // generator backward: image-space terms through the frozen decoder, then
    // the prediction pullback, then latent terms into the adapter encoder
    Tensor<S> g_xP = x_P.like_zeros();
    g_xP.data = w.lambda2 * mse_loss_grad(x_P, x_H).data +
                w.lambda3 * g_lpips.data + w.lambda4 * g_gan.data;
    auto g_zP = b.vae.decode_backward(g_xP);
    const auto [c_z, c_e] = predict_one_step_coeffs(state.sched, b.t_star);
    Tensor<S> g_eps = g_zP.like_zeros();
    g_eps.data = c_e * g_zP.data;
    auto g_zL_den = b.denoiser.backward(g_eps);
    Tensor<S> g_zL = g_zP.like_zeros();
    g_zL.data = c_z * g_zP.data +
                w.lambda1 * lan_loss_grad(z_L, z_H, eps, state.sched, b.t_star).data +
                g_zL_den.data;
    b.vae.encode_backward(g_zL);

    if (w.lambda4 != S(0))
      part.gan_d = oc_gan_d_loss(x_H, x_P, b.disc, layout, true);

    mean.lan += part.lan;
    mean.mse += part.mse;
    mean.oc_lpips += part.oc_lpips;
    mean.gan_g += part.gan_g;
    mean.gan_d += part.gan_d;
    ++state.accum_samples;
  }

  const S inv = S(1) / static_cast<S>(batch.size());
  mean.lan *= inv;
  mean.mse *= inv;
  mean.oc_lpips *= inv;
  mean.gan_g *= inv;
  mean.gan_d *= inv;
  mean = total_loss(mean, w);

  ++b.step;
  // alternation: the generator steps first, then the discriminator; each
  // update only ever sees its own parameter set
  if (state.accum_samples >= state.grad_accum) {
    const S scale = S(1) / static_cast<S>(state.accum_samples);
    for (auto& r : state.gen_params) r.p->g *= scale;
    state.gen_opt.step(state.gen_params);
    nn::AdamW<S>::zero_grad(state.gen_params);
    if (w.lambda4 != S(0)) {
      for (auto& r : state.disc_params) r.p->g *= scale;
      state.disc_opt.step(state.disc_params);
    }
    nn::AdamW<S>::zero_grad(state.disc_params);
    state.accum_samples = 0;
    b.gen_opt_steps = state.gen_opt.t;
    b.disc_opt_steps = state.disc_opt.t;
  }

  state.log.push_back(mean);
  return mean;
}

// Loss-log CSV in the schema `step,lan,mse,oc_lpips,gan_g,gan_d,total`.
template <typename S>
void write_loss_log(const std::vector<LossBreakdown<S>>& log, std::ostream& os) {
  os << "step,lan,mse,oc_lpips,gan_g,gan_d,total\n";
  for (std::size_t i = 0; i < log.size(); ++i)
    os << i << ',' << log[i].lan << ',' << log[i].mse << ',' << log[i].oc_lpips
       << ',' << log[i].gan_g << ',' << log[i].gan_d << ',' << log[i].total
       << '\n';
}

}  // namespace omgsr
