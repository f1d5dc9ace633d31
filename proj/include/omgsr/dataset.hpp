#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "omgsr/degrade.hpp"
#include "omgsr/rng.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

// Smooth procedural RGB texture: a small stack of random low-frequency plane
// waves plus Gaussian blobs, squashed into (-1, 1). Entirely determined by
// the seed, so corpora regenerate bit-identically.
template <typename S>
Tensor<S> procedural_texture(std::uint64_t seed, int size) {
  if (size < 4) throw std::invalid_argument("procedural_texture: size too small");
  Rng rng(seed);
  Tensor<S> img(3, size, size);

  struct Wave {
    double fx, fy, phase, amp;
  };
  struct Blob {
    double cx, cy, r, amp;
  };
  const int n_waves = 4, n_detail = 4, n_blobs = 3;
  std::vector<std::vector<Wave>> waves(3);
  std::vector<std::vector<Blob>> blobs(3);
  // shared base layer correlates the channels so textures look material-like
  std::vector<Wave> base;
  for (int i = 0; i < n_waves; ++i)
    base.push_back({rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0),
                    rng.uniform(0.0, 6.2831853), rng.uniform(0.2, 0.6)});
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < n_waves; ++i)
      waves[c].push_back({rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0),
                          rng.uniform(0.0, 6.2831853), rng.uniform(0.1, 0.35)});
    // mid-frequency detail band: fine enough that downscaling degrades it,
    // coarse enough that a 4x-downsampled latent can still represent it
    for (int i = 0; i < n_detail; ++i)
      waves[c].push_back({rng.uniform(6.0, 20.0), rng.uniform(6.0, 20.0),
                          rng.uniform(0.0, 6.2831853), rng.uniform(0.05, 0.15)});
    for (int i = 0; i < n_blobs; ++i)
      blobs[c].push_back({rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                          rng.uniform(0.1, 0.35), rng.uniform(-0.5, 0.5)});
  }

  const double tau = 6.2831853071795864769;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double u = static_cast<double>(x) / size;
        const double v = static_cast<double>(y) / size;
        double val = 0;
        for (const auto& w : base)
          val += w.amp * std::sin(tau * (w.fx * u + w.fy * v) + w.phase);
        for (const auto& w : waves[c])
          val += w.amp * std::sin(tau * (w.fx * u + w.fy * v) + w.phase);
        for (const auto& b : blobs[c]) {
          const double dx = u - b.cx, dy = v - b.cy;
          val += b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.r * b.r));
        }
        img.at(c, y, x) = static_cast<S>(std::tanh(val));
      }
  return img;
}

// A generated LQ/HQ corpus; hq[i] and lq[i] form a pair.
template <typename S>
struct PairDataset {
  std::vector<Tensor<S>> hq;
  std::vector<Tensor<S>> lq;

  int size() const { return static_cast<int>(hq.size()); }
};

template <typename S>
PairDataset<S> make_dataset(int count, int hq_size,
                            const DegradationConfig<S>& deg,
                            std::uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("make_dataset: count must be positive");
  PairDataset<S> ds;
  Rng master(seed);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t tex_seed = master.raw();
    const std::uint64_t deg_seed = master.raw();
    ds.hq.push_back(procedural_texture<S>(tex_seed, hq_size));
    ds.lq.push_back(degrade(ds.hq.back(), deg, deg_seed));
  }
  return ds;
}

// Aligned random crop of an LQ/HQ pair; `hq_crop` is in HQ pixels and must
// be a multiple of the LQ-to-HQ scale.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> random_crop_pair(const Tensor<S>& lq,
                                                 const Tensor<S>& hq,
                                                 int hq_crop, Rng& rng) {
  const int scale = hq.height / lq.height;
  if (hq.height % lq.height != 0 || hq.width % lq.width != 0 ||
      hq.width / lq.width != scale)
    throw std::invalid_argument("random_crop_pair: pair scales disagree");
  if (hq_crop % scale != 0 || hq_crop > hq.height || hq_crop > hq.width)
    throw std::invalid_argument("random_crop_pair: bad crop size");
  const int lq_crop = hq_crop / scale;
  const int ly = rng.uniform_int(0, lq.height - lq_crop);
  const int lx = rng.uniform_int(0, lq.width - lq_crop);

  Tensor<S> lc(lq.channels, lq_crop, lq_crop);
  Tensor<S> hc(hq.channels, hq_crop, hq_crop);
  for (int c = 0; c < lq.channels; ++c)
    for (int y = 0; y < lq_crop; ++y)
      for (int x = 0; x < lq_crop; ++x)
        lc.at(c, y, x) = lq.at(c, ly + y, lx + x);
  for (int c = 0; c < hq.channels; ++c)
    for (int y = 0; y < hq_crop; ++y)
      for (int x = 0; x < hq_crop; ++x)
        hc.at(c, y, x) = hq.at(c, ly * scale + y, lx * scale + x);
  return {lc, hc};
}

}  // namespace omgsr
