#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "omgsr/tensor.hpp"

namespace omgsr {

enum class BlendMode { None, Feather };

// Planned overlap-chunked patch grid: square patches, per-axis start
// offsets, minimal patch count subject to coverage and minimum overlap.
struct ChunkLayout {
  int height = 0;
  int width = 0;
  int patch = 0;
  int min_overlap = 0;
  BlendMode blend = BlendMode::Feather;
  std::vector<int> starts_y;
  std::vector<int> starts_x;

  int count() const {
    return static_cast<int>(starts_y.size() * starts_x.size());
  }

  // Scale every geometric quantity by an integer factor; used when a layout
  // planned on one resolution is replayed on an upscaled image.
  ChunkLayout scaled(int factor) const {
    ChunkLayout out = *this;
    out.height *= factor;
    out.width *= factor;
    out.patch *= factor;
    out.min_overlap *= factor;
    for (auto& s : out.starts_y) s *= factor;
    for (auto& s : out.starts_x) s *= factor;
    return out;
  }
};

namespace detail {

inline std::vector<int> plan_axis(int length, int patch, int min_overlap) {
  // Smallest k with (k-1)*(patch - min_overlap) + patch >= length.
  int k = 1;
  while ((k - 1) * (patch - min_overlap) + patch < length) ++k;
  std::vector<int> starts(k);
  if (k == 1) {
    starts[0] = 0;
  } else {
    const double stride = static_cast<double>(length - patch) / (k - 1);
    for (int i = 0; i < k; ++i)
      starts[i] = static_cast<int>(std::lround(i * stride));
  }
  return starts;
}

}  // namespace detail

inline ChunkLayout plan_chunks(int height, int width, int patch,
                               int min_overlap,
                               BlendMode blend = BlendMode::Feather) {
  if (patch <= 0 || patch > height || patch > width)
    throw std::invalid_argument("plan_chunks: patch larger than image");
  if (min_overlap < 0 || min_overlap >= patch)
    throw std::invalid_argument("plan_chunks: min_overlap must be in [0, patch)");
  ChunkLayout layout;
  layout.height = height;
  layout.width = width;
  layout.patch = patch;
  layout.min_overlap = min_overlap;
  layout.blend = blend;
  layout.starts_y = detail::plan_axis(height, patch, min_overlap);
  layout.starts_x = detail::plan_axis(width, patch, min_overlap);
  return layout;
}

template <typename S>
void check_layout_image(const Tensor<S>& image, const ChunkLayout& layout,
                        const char* where) {
  if (image.height != layout.height || image.width != layout.width)
    throw std::invalid_argument(std::string(where) + ": image size does not match layout");
}

// Row-major patch extraction; pure copies.
template <typename S>
std::vector<Tensor<S>> extract_chunks(const Tensor<S>& image,
                                      const ChunkLayout& layout) {
  check_layout_image(image, layout, "extract_chunks");
  std::vector<Tensor<S>> patches;
  patches.reserve(layout.count());
  const int p = layout.patch;
  for (int sy : layout.starts_y) {
    for (int sx : layout.starts_x) {
      Tensor<S> patch(image.channels, p, p);
      for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x)
            patch.at(c, y, x) = image.at(c, sy + y, sx + x);
      patches.push_back(std::move(patch));
    }
  }
  return patches;
}

namespace detail {

// Per-patch 1-D feather profile: linear ramp over the overlap margin with a
// previous/next patch, flat elsewhere. Edge patches keep full weight at the
// image border.
inline std::vector<double> axis_profile(const std::vector<int>& starts,
                                        std::size_t i, int patch) {
  std::vector<double> w(patch, 1.0);
  if (i > 0) {
    const int left_overlap = starts[i - 1] + patch - starts[i];
    for (int j = 0; j < left_overlap && j < patch; ++j)
      w[j] = std::min(w[j], static_cast<double>(j + 1) / (left_overlap + 1));
  }
  if (i + 1 < starts.size()) {
    const int right_overlap = starts[i] + patch - starts[i + 1];
    for (int j = 0; j < right_overlap && j < patch; ++j)
      w[patch - 1 - j] =
          std::min(w[patch - 1 - j], static_cast<double>(j + 1) / (right_overlap + 1));
  }
  return w;
}

}  // namespace detail

// Accumulated (unnormalized) weight field over the image; the blend divides
// by this, making the effective weights a partition of unity.
inline Tensor<double> chunk_weight_field(const ChunkLayout& layout) {
  Tensor<double> total(1, layout.height, layout.width);
  for (std::size_t iy = 0; iy < layout.starts_y.size(); ++iy) {
    const auto wy = detail::axis_profile(layout.starts_y, iy, layout.patch);
    for (std::size_t ix = 0; ix < layout.starts_x.size(); ++ix) {
      const auto wx = detail::axis_profile(layout.starts_x, ix, layout.patch);
      for (int y = 0; y < layout.patch; ++y)
        for (int x = 0; x < layout.patch; ++x)
          total.at(0, layout.starts_y[iy] + y, layout.starts_x[ix] + x) +=
              wy[y] * wx[x];
    }
  }
  return total;
}

template <typename S>
Tensor<S> blend_chunks(const std::vector<Tensor<S>>& patches,
                       const ChunkLayout& layout) {
  if (static_cast<int>(patches.size()) != layout.count())
    throw std::invalid_argument("blend_chunks: patch count does not match layout");
  for (const auto& p : patches)
    if (p.height != layout.patch || p.width != layout.patch)
      throw std::invalid_argument("blend_chunks: patch size does not match layout");
  const int channels = patches.front().channels;
  Tensor<S> out(channels, layout.height, layout.width);

  if (layout.blend == BlendMode::None) {
    // Later patches overwrite earlier ones in row-major order.
    std::size_t idx = 0;
    for (int sy : layout.starts_y) {
      for (int sx : layout.starts_x) {
        const Tensor<S>& patch = patches[idx++];
        for (int c = 0; c < channels; ++c)
          for (int y = 0; y < layout.patch; ++y)
            for (int x = 0; x < layout.patch; ++x)
              out.at(c, sy + y, sx + x) = patch.at(c, y, x);
      }
    }
    return out;
  }

  Tensor<double> acc(channels, layout.height, layout.width);
  const Tensor<double> total = chunk_weight_field(layout);
  std::size_t idx = 0;
  for (std::size_t iy = 0; iy < layout.starts_y.size(); ++iy) {
    const auto wy = detail::axis_profile(layout.starts_y, iy, layout.patch);
    for (std::size_t ix = 0; ix < layout.starts_x.size(); ++ix) {
      const auto wx = detail::axis_profile(layout.starts_x, ix, layout.patch);
      const Tensor<S>& patch = patches[idx++];
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < layout.patch; ++y)
          for (int x = 0; x < layout.patch; ++x)
            acc.at(c, layout.starts_y[iy] + y, layout.starts_x[ix] + x) +=
                wy[y] * wx[x] * static_cast<double>(patch.at(c, y, x));
    }
  }
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < layout.height; ++y)
      for (int x = 0; x < layout.width; ++x) {
        const double w = total.at(0, y, x);
        if (!(w > 0.0))
          throw std::logic_error("blend_chunks: zero total weight (coverage violated)");
        out.at(c, y, x) = static_cast<S>(acc.at(c, y, x) / w);
      }
  return out;
}

// Adjoint of extract_chunks: scatter-add per-patch gradients (each scaled by
// `scale`) back onto the image grid. Used by the overlap-chunked losses.
template <typename S>
void scatter_add_chunks(const std::vector<Tensor<S>>& patch_grads,
                        const ChunkLayout& layout, S scale, Tensor<S>& image_grad) {
  if (static_cast<int>(patch_grads.size()) != layout.count())
    throw std::invalid_argument("scatter_add_chunks: patch count mismatch");
  check_layout_image(image_grad, layout, "scatter_add_chunks");
  std::size_t idx = 0;
  for (int sy : layout.starts_y) {
    for (int sx : layout.starts_x) {
      const Tensor<S>& g = patch_grads[idx++];
      for (int c = 0; c < image_grad.channels; ++c)
        for (int y = 0; y < layout.patch; ++y)
          for (int x = 0; x < layout.patch; ++x)
            image_grad.at(c, sy + y, sx + x) += scale * g.at(c, y, x);
    }
  }
}

}  // namespace omgsr
