#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "omgsr/checkpoint.hpp"
#include "omgsr/chunking.hpp"
#include "omgsr/degrade.hpp"
#include "omgsr/predict.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

namespace detail {

// encode once -> denoise once at t* -> invert once -> decode once.
template <typename S>
Tensor<S> restore_scaled(CheckpointBundle<S>& bundle, const Tensor<S>& x,
                         int scale) {
  NoiseSchedule<S> sched(bundle.sched_cfg);
  auto x_up = bicubic_upscale(x, scale);
  auto z_L = bundle.vae.encode(x_up, bundle.vae.has_adapter());
  auto eps_hat = bundle.denoiser.forward(z_L, bundle.t_star);
  auto z_P = predict_one_step(sched, z_L, eps_hat, bundle.t_star);
  auto out = bundle.vae.decode(z_P);
  out.data = out.data.min(S(1)).max(S(-1));
  out.origin = Origin::Predicted;
  return out;
}

}  // namespace detail

template <typename S>
Tensor<S> restore(CheckpointBundle<S>& bundle, const Tensor<S>& x_L) {
  if (bundle.t_star < 0)
    throw std::runtime_error("restore: bundle has no selected mid-timestep");
  return detail::restore_scaled(bundle, x_L, bundle.scale_factor);
}

// Two-stage upscaling: a plain restore, then the result is chunked and every
// tile is pushed through the same one-step model again at the stage-2 scale,
// blended back with the layout's weight mode.
template <typename S>
Tensor<S> tiled_restore(CheckpointBundle<S>& bundle, const Tensor<S>& x_L,
                        int tile, int min_overlap, int stage2_scale = 2,
                        BlendMode blend = BlendMode::Feather) {
  auto stage1 = restore(bundle, x_L);
  auto layout = plan_chunks(stage1.height, stage1.width, tile, min_overlap, blend);
  auto patches = extract_chunks(stage1, layout);
  std::vector<Tensor<S>> out_patches;
  out_patches.reserve(patches.size());
  for (const auto& p : patches)
    out_patches.push_back(detail::restore_scaled(bundle, p, stage2_scale));
  return blend_chunks(out_patches, layout.scaled(stage2_scale));
}

// Seam discontinuity: the largest absolute first difference across any
// interior tile boundary, normalized by the median absolute first difference
// away from boundaries. ~1 means boundaries look like ordinary texture.
template <typename S>
double seam_statistic(const Tensor<S>& img, const ChunkLayout& layout) {
  check_layout_image(img, layout, "seam_statistic");
  std::vector<bool> is_edge_x(static_cast<std::size_t>(img.width), false);
  std::vector<bool> is_edge_y(static_cast<std::size_t>(img.height), false);
  const auto mark = [&](std::vector<bool>& edges, const std::vector<int>& starts,
                        int len) {
    for (int s : starts) {
      if (s > 0) edges[static_cast<std::size_t>(s)] = true;
      if (s + layout.patch < len)
        edges[static_cast<std::size_t>(s + layout.patch)] = true;
    }
  };
  mark(is_edge_x, layout.starts_x, img.width);
  mark(is_edge_y, layout.starts_y, img.height);

  double max_seam = 0;
  std::vector<double> interior;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 1; x < img.width; ++x) {
        const double d = std::abs(static_cast<double>(img.at(c, y, x)) -
                                  static_cast<double>(img.at(c, y, x - 1)));
        if (is_edge_x[static_cast<std::size_t>(x)])
          max_seam = std::max(max_seam, d);
        else
          interior.push_back(d);
      }
    for (int y = 1; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double d = std::abs(static_cast<double>(img.at(c, y, x)) -
                                  static_cast<double>(img.at(c, y - 1, x)));
        if (is_edge_y[static_cast<std::size_t>(y)])
          max_seam = std::max(max_seam, d);
        else
          interior.push_back(d);
      }
  }
  if (interior.empty()) return 0.0;
  std::nth_element(interior.begin(), interior.begin() + interior.size() / 2,
                   interior.end());
  const double med = interior[interior.size() / 2];
  return max_seam / (med + 1e-12);
}

}  // namespace omgsr
