#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "omgsr/chunking.hpp"
#include "omgsr/schedule.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

template <typename S>
struct LossWeights {
  S lambda1 = static_cast<S>(5);    // latent refinement
  S lambda2 = static_cast<S>(2);    // pixel MSE
  S lambda3 = static_cast<S>(5);    // OC-LPIPS
  S lambda4 = static_cast<S>(0.5);  // GAN (generator side)
};

template <typename S>
struct LossBreakdown {
  S lan = 0, mse = 0, oc_lpips = 0, gan_g = 0, gan_d = 0, total = 0;
};

// ---------------------------------------------------------------------------
// Pixel / latent MSE
// ---------------------------------------------------------------------------
template <typename S>
S mse_loss(const Tensor<S>& a, const Tensor<S>& b) {
  return mean_squared_error(a, b);
}

template <typename S>
Tensor<S> mse_loss_grad(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "mse_loss_grad");
  Tensor<S> g = a.like_zeros();
  g.data = S(2) * (a.data - b.data) / static_cast<S>(a.size());
  return g;
}

// ---------------------------------------------------------------------------
// Latent distribution refinement: MSE between the tuned-encoder LQ latent
// and the noisy interpolation of the frozen HQ latent at t_star.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> lan_target(const NoiseSchedule<S>& sched, const Tensor<S>& z_H,
                     const Tensor<S>& eps, int t_star) {
  return sched.add_noise(z_H, eps, t_star);
}

template <typename S>
S lan_loss(const Tensor<S>& z_L, const Tensor<S>& z_H, const Tensor<S>& eps,
           const NoiseSchedule<S>& sched, int t_star) {
  require_same_shape(z_L, z_H, "lan_loss");
  return mean_squared_error(z_L, lan_target(sched, z_H, eps, t_star));
}

template <typename S>
S lan_loss(const Tensor<S>& z_L, const Tensor<S>& z_H, const Tensor<S>& eps,
           const ScheduleConfig<S>& cfg, int t_star) {
  return lan_loss(z_L, z_H, eps, NoiseSchedule<S>(cfg), t_star);
}

template <typename S>
Tensor<S> lan_loss_grad(const Tensor<S>& z_L, const Tensor<S>& z_H,
                        const Tensor<S>& eps, const NoiseSchedule<S>& sched,
                        int t_star) {
  return mse_loss_grad(z_L, lan_target(sched, z_H, eps, t_star));
}

// ---------------------------------------------------------------------------
// Perceptual distance over a pluggable feature pyramid: channel-unit
// features per spatial site, squared difference averaged over space,
// mean over layers.
// ---------------------------------------------------------------------------
namespace detail {

template <typename S>
Tensor<S> unit_normalize_channels(const Tensor<S>& f) {
  Tensor<S> u = f.like_zeros();
  const Eigen::Index plane = static_cast<Eigen::Index>(f.height) * f.width;
  for (Eigen::Index p = 0; p < plane; ++p) {
    S norm2 = 0;
    for (int c = 0; c < f.channels; ++c) {
      const S v = f.data[c * plane + p];
      norm2 += v * v;
    }
    const S inv = S(1) / (std::sqrt(norm2) + static_cast<S>(1e-10));
    for (int c = 0; c < f.channels; ++c)
      u.data[c * plane + p] = f.data[c * plane + p] * inv;
  }
  return u;
}

// Pullback of unit_normalize_channels: gF = (g - u * <u, g>) / (|F| + eps).
template <typename S>
Tensor<S> unit_normalize_backward(const Tensor<S>& f, const Tensor<S>& u,
                                  const Tensor<S>& g) {
  Tensor<S> gf = f.like_zeros();
  const Eigen::Index plane = static_cast<Eigen::Index>(f.height) * f.width;
  for (Eigen::Index p = 0; p < plane; ++p) {
    S norm2 = 0, dot = 0;
    for (int c = 0; c < f.channels; ++c) {
      const S v = f.data[c * plane + p];
      norm2 += v * v;
      dot += u.data[c * plane + p] * g.data[c * plane + p];
    }
    const S inv = S(1) / (std::sqrt(norm2) + static_cast<S>(1e-10));
    for (int c = 0; c < f.channels; ++c)
      gf.data[c * plane + p] =
          (g.data[c * plane + p] - u.data[c * plane + p] * dot) * inv;
  }
  return gf;
}

}  // namespace detail

template <typename S, typename Embedder>
S lpips_distance(Embedder& embedder, const Tensor<S>& a, const Tensor<S>& b,
                 Tensor<S>* grad_a = nullptr) {
  require_same_shape(a, b, "lpips_distance");
  auto fb = embedder.forward(b, false);
  auto fa = embedder.forward(a, grad_a != nullptr);
  const int layers = static_cast<int>(fa.size());
  double dist = 0.0;
  std::vector<Tensor<S>> g_feats;
  for (int l = 0; l < layers; ++l) {
    auto ua = detail::unit_normalize_channels(fa[l]);
    auto ub = detail::unit_normalize_channels(fb[l]);
    const Eigen::Index plane = static_cast<Eigen::Index>(ua.height) * ua.width;
    S acc = 0;
    for (Eigen::Index i = 0; i < ua.size(); ++i) {
      const S d = ua.data[i] - ub.data[i];
      acc += d * d;
    }
    dist += static_cast<double>(acc) / static_cast<double>(plane);
    if (grad_a) {
      Tensor<S> gu = ua.like_zeros();
      gu.data = S(2) * (ua.data - ub.data) /
                (static_cast<S>(plane) * static_cast<S>(layers));
      g_feats.push_back(detail::unit_normalize_backward(fa[l], ua, gu));
    }
  }
  if (grad_a) *grad_a = embedder.backward(g_feats);
  return static_cast<S>(dist / layers);
}

template <typename S, typename Embedder>
S oc_lpips(const Tensor<S>& x_P, const Tensor<S>& x_H, Embedder& embedder,
           const ChunkLayout& layout, Tensor<S>* grad_xP = nullptr) {
  require_same_shape(x_P, x_H, "oc_lpips");
  check_layout_image(x_P, layout, "oc_lpips");
  auto patches_p = extract_chunks(x_P, layout);
  auto patches_h = extract_chunks(x_H, layout);
  const int n = layout.count();
  double total = 0.0;
  std::vector<Tensor<S>> patch_grads;
  for (int i = 0; i < n; ++i) {
    Tensor<S> g;
    total += static_cast<double>(lpips_distance(
        embedder, patches_p[i], patches_h[i], grad_xP ? &g : nullptr));
    if (grad_xP) patch_grads.push_back(std::move(g));
  }
  if (grad_xP) {
    *grad_xP = x_P.like_zeros();
    scatter_add_chunks(patch_grads, layout, S(1) / static_cast<S>(n), *grad_xP);
  }
  return static_cast<S>(total / n);
}

// ---------------------------------------------------------------------------
// Overlap-chunked GAN, standard non-saturating pair.
// Discriminator: L_D = -mean_i log D(phi_i(x_H)) - mean_i log(1 - D(phi_i(x_P)))
// Generator:     L_G = -mean_i log D(phi_i(x_P))
// ---------------------------------------------------------------------------
template <typename S, typename Disc>
S oc_gan_d_loss(const Tensor<S>& x_H, const Tensor<S>& x_P, Disc& disc,
                const ChunkLayout& layout, bool accumulate_param_grads = false) {
  require_same_shape(x_H, x_P, "oc_gan_d_loss");
  check_layout_image(x_H, layout, "oc_gan_d_loss");
  const S n = static_cast<S>(layout.count());
  double loss = 0.0;
  for (const auto& patch : extract_chunks(x_H, layout)) {
    const S p = disc.forward(patch, accumulate_param_grads);
    if (!(p > S(0) && p < S(1)))
      throw std::logic_error("oc_gan_d_loss: probability escaped the clamp");
    loss -= std::log(static_cast<double>(p)) / n;
    if (accumulate_param_grads)
      disc.backward(-S(1) / (n * p), true, false);
  }
  for (const auto& patch : extract_chunks(x_P, layout)) {
    const S p = disc.forward(patch, accumulate_param_grads);
    if (!(p > S(0) && p < S(1)))
      throw std::logic_error("oc_gan_d_loss: probability escaped the clamp");
    loss -= std::log(1.0 - static_cast<double>(p)) / n;
    if (accumulate_param_grads)
      disc.backward(S(1) / (n * (S(1) - p)), true, false);
  }
  return static_cast<S>(loss);
}

template <typename S, typename Disc>
S oc_gan_g_loss(const Tensor<S>& x_P, Disc& disc, const ChunkLayout& layout,
                Tensor<S>* grad_xP = nullptr) {
  check_layout_image(x_P, layout, "oc_gan_g_loss");
  const S n = static_cast<S>(layout.count());
  double loss = 0.0;
  std::vector<Tensor<S>> patch_grads;
  for (const auto& patch : extract_chunks(x_P, layout)) {
    const S p = disc.forward(patch, grad_xP != nullptr);
    loss -= std::log(static_cast<double>(p)) / n;
    if (grad_xP)
      patch_grads.push_back(disc.backward(-S(1) / p, false, true));
  }
  if (grad_xP) {
    *grad_xP = x_P.like_zeros();
    scatter_add_chunks(patch_grads, layout, S(1) / n, *grad_xP);
  }
  return static_cast<S>(loss);
}

// ---------------------------------------------------------------------------
template <typename S>
LossBreakdown<S> total_loss(LossBreakdown<S> components, const LossWeights<S>& w) {
  components.total = w.lambda1 * components.lan + w.lambda2 * components.mse +
                     w.lambda3 * components.oc_lpips + w.lambda4 * components.gan_g;
  return components;
}

}  // namespace omgsr
