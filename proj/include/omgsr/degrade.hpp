#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "omgsr/rng.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

// Synthetic LQ pipeline: blur -> bicubic downscale -> additive noise ->
// block-DCT quantization, optionally repeated once with milder ranges.
template <typename S>
struct DegradationConfig {
  std::pair<S, S> blur_sigma_range{static_cast<S>(0.2), static_cast<S>(2.0)};
  int downscale_factor = 4;
  std::pair<S, S> noise_sigma_range{static_cast<S>(0.0), static_cast<S>(0.08)};
  std::pair<int, int> compression_quality_range{60, 100};
  bool second_order = false;
};

inline constexpr int kMaxQuality = 100;

// The parameters actually drawn for one degrade() call; surfaced so callers
// can log them next to the output.
template <typename S>
struct DegradationSample {
  S blur_sigma = S(0);
  S noise_sigma = S(0);
  int quality = kMaxQuality;
  S blur_sigma2 = S(0);
  S noise_sigma2 = S(0);
  int quality2 = kMaxQuality;
};

namespace detail {

template <typename S>
void validate_degradation(const DegradationConfig<S>& cfg) {
  if (cfg.downscale_factor < 1)
    throw std::invalid_argument("degrade: downscale_factor must be >= 1");
  if (cfg.blur_sigma_range.first > cfg.blur_sigma_range.second ||
      cfg.noise_sigma_range.first > cfg.noise_sigma_range.second ||
      cfg.compression_quality_range.first > cfg.compression_quality_range.second)
    throw std::invalid_argument("degrade: range not ordered (lo > hi)");
  if (cfg.blur_sigma_range.first < S(0) || cfg.noise_sigma_range.first < S(0))
    throw std::invalid_argument("degrade: sigma ranges must be non-negative");
  if (cfg.compression_quality_range.first < 1 ||
      cfg.compression_quality_range.second > kMaxQuality)
    throw std::invalid_argument("degrade: quality outside [1, 100]");
}

template <typename S>
Tensor<S> gaussian_blur(const Tensor<S>& x, S sigma) {
  if (sigma < static_cast<S>(1e-8)) return x;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * static_cast<double>(sigma))));
  std::vector<S> k(2 * radius + 1);
  S sum = S(0);
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(static_cast<S>(-0.5) * static_cast<S>(i) *
                             static_cast<S>(i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;

  const auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  Tensor<S> tmp = x.like_zeros();
  for (int c = 0; c < x.channels; ++c)  // vertical pass, clamp padding
    for (int y = 0; y < x.height; ++y)
      for (int xx = 0; xx < x.width; ++xx) {
        S acc = S(0);
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * x.at(c, clampi(y + i, x.height), xx);
        tmp.at(c, y, xx) = acc;
      }
  Tensor<S> out = x.like_zeros();
  for (int c = 0; c < x.channels; ++c)  // horizontal pass
    for (int y = 0; y < x.height; ++y)
      for (int xx = 0; xx < x.width; ++xx) {
        S acc = S(0);
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(c, y, clampi(xx + i, x.width));
        out.at(c, y, xx) = acc;
      }
  return out;
}

// Catmull-Rom cubic kernel.
template <typename S>
S catmull_rom(S x) {
  x = std::abs(x);
  if (x <= S(1)) return ((static_cast<S>(1.5) * x - static_cast<S>(2.5)) * x) * x + S(1);
  if (x < S(2))
    return ((static_cast<S>(-0.5) * x + static_cast<S>(2.5)) * x - S(4)) * x + S(2);
  return S(0);
}

// Separable bicubic downscale by an integer factor; the kernel is widened by
// the factor so it antialiases. factor == 1 is an exact identity.
template <typename S>
Tensor<S> bicubic_downscale(const Tensor<S>& x, int factor) {
  if (factor == 1) return x;
  const auto resample_axis = [factor](const Tensor<S>& in, bool vertical) {
    const int in_len = vertical ? in.height : in.width;
    const int out_len = in_len / factor;
    Tensor<S> out(in.channels, vertical ? out_len : in.height,
                  vertical ? in.width : out_len);
    const S scale = static_cast<S>(factor);
    const int radius = 2 * factor;
    for (int o = 0; o < out_len; ++o) {
      const S center = (static_cast<S>(o) + static_cast<S>(0.5)) * scale -
                       static_cast<S>(0.5);
      const int lo = static_cast<int>(std::floor(center)) - radius + 1;
      std::vector<S> w(static_cast<std::size_t>(2 * radius));
      S wsum = S(0);
      for (int i = 0; i < 2 * radius; ++i) {
        w[i] = catmull_rom((static_cast<S>(lo + i) - center) / scale);
        wsum += w[i];
      }
      for (auto& v : w) v /= wsum;
      for (int c = 0; c < in.channels; ++c)
        for (int other = 0; other < (vertical ? in.width : in.height); ++other) {
          S acc = S(0);
          for (int i = 0; i < 2 * radius; ++i) {
            const int src = std::clamp(lo + i, 0, in_len - 1);
            acc += w[i] * (vertical ? in.at(c, src, other) : in.at(c, other, src));
          }
          if (vertical)
            out.at(c, o, other) = acc;
          else
            out.at(c, other, o) = acc;
        }
    }
    return out;
  };
  return resample_axis(resample_axis(x, true), false);
}

// Separable bicubic upscale by an integer factor (Catmull-Rom, no kernel
// widening). factor == 1 is an exact identity.
template <typename S>
Tensor<S> bicubic_upscale_impl(const Tensor<S>& x, int factor) {
  if (factor == 1) return x;
  const auto resample_axis = [factor](const Tensor<S>& in, bool vertical) {
    const int in_len = vertical ? in.height : in.width;
    const int out_len = in_len * factor;
    Tensor<S> out(in.channels, vertical ? out_len : in.height,
                  vertical ? in.width : out_len);
    for (int o = 0; o < out_len; ++o) {
      const S center = (static_cast<S>(o) + static_cast<S>(0.5)) /
                           static_cast<S>(factor) - static_cast<S>(0.5);
      const int lo = static_cast<int>(std::floor(center)) - 1;
      std::array<S, 4> w;
      S wsum = S(0);
      for (int i = 0; i < 4; ++i) {
        w[i] = catmull_rom(static_cast<S>(lo + i) - center);
        wsum += w[i];
      }
      for (auto& v : w) v /= wsum;
      for (int c = 0; c < in.channels; ++c)
        for (int other = 0; other < (vertical ? in.width : in.height); ++other) {
          S acc = S(0);
          for (int i = 0; i < 4; ++i) {
            const int src = std::clamp(lo + i, 0, in_len - 1);
            acc += w[i] * (vertical ? in.at(c, src, other) : in.at(c, other, src));
          }
          if (vertical)
            out.at(c, o, other) = acc;
          else
            out.at(c, other, o) = acc;
        }
    }
    return out;
  };
  return resample_axis(resample_axis(x, true), false);
}

// Orthonormal 8x8 DCT-II quantization as a JPEG stand-in. quality == 100
// skips the stage entirely; otherwise the quantization step grows linearly
// as quality drops.
template <typename S>
Tensor<S> block_dct_quantize(const Tensor<S>& x, int quality) {
  if (quality >= kMaxQuality) return x;
  constexpr int B = 8;
  const S step = static_cast<S>(kMaxQuality - quality) * static_cast<S>(0.0025);

  static const auto basis = [] {
    std::array<std::array<double, B>, B> m{};
    for (int k = 0; k < B; ++k)
      for (int n = 0; n < B; ++n)
        m[k][n] = (k == 0 ? std::sqrt(1.0 / B) : std::sqrt(2.0 / B)) *
                  std::cos(M_PI * (2 * n + 1) * k / (2.0 * B));
    return m;
  }();

  Tensor<S> out = x.like_zeros();
  const auto clampi = [](int v, int n) { return std::min(v, n - 1); };
  for (int c = 0; c < x.channels; ++c)
    for (int by = 0; by < x.height; by += B)
      for (int bx = 0; bx < x.width; bx += B) {
        double block[B][B], coef[B][B];
        for (int y = 0; y < B; ++y)  // replicate-pad ragged edge blocks
          for (int xx = 0; xx < B; ++xx)
            block[y][xx] = static_cast<double>(
                x.at(c, clampi(by + y, x.height), clampi(bx + xx, x.width)));
        for (int ky = 0; ky < B; ++ky)
          for (int kx = 0; kx < B; ++kx) {
            double acc = 0;
            for (int y = 0; y < B; ++y)
              for (int xx = 0; xx < B; ++xx)
                acc += basis[ky][y] * basis[kx][xx] * block[y][xx];
            coef[ky][kx] = std::round(acc / static_cast<double>(step)) *
                           static_cast<double>(step);
          }
        for (int y = 0; y < B && by + y < x.height; ++y)
          for (int xx = 0; xx < B && bx + xx < x.width; ++xx) {
            double acc = 0;
            for (int ky = 0; ky < B; ++ky)
              for (int kx = 0; kx < B; ++kx)
                acc += basis[ky][y] * basis[kx][xx] * coef[ky][kx];
            out.at(c, by + y, bx + xx) = static_cast<S>(acc);
          }
      }
  return out;
}

}  // namespace detail

// Public resampling entry points; used by the degradation pipeline and by
// the restoration front end (LQ images are bicubic-upscaled before the VAE).
template <typename S>
Tensor<S> bicubic_upscale(const Tensor<S>& x, int factor) {
  if (factor < 1) throw std::invalid_argument("bicubic_upscale: factor must be >= 1");
  return detail::bicubic_upscale_impl(x, factor);
}

template <typename S>
Tensor<S> bicubic_downscale(const Tensor<S>& x, int factor) {
  if (factor < 1) throw std::invalid_argument("bicubic_downscale: factor must be >= 1");
  if (x.height % factor != 0 || x.width % factor != 0)
    throw std::invalid_argument("bicubic_downscale: dims not divisible by factor");
  return detail::bicubic_downscale(x, factor);
}

// Seeded synthetic degradation. Random draws happen in a fixed order so a
// seed is portable: blur sigma, noise sigma, quality, then (when second_order
// is set) the three milder second-pass parameters, then the per-pixel noise
// fields. The second pass uses the lower half of the sigma ranges and the
// upper half of the quality range, and never rescales.
template <typename S>
Tensor<S> degrade(const Tensor<S>& hq, const DegradationConfig<S>& cfg,
                  std::uint64_t seed, DegradationSample<S>* sample_out = nullptr) {
  detail::validate_degradation(cfg);
  if (hq.height % cfg.downscale_factor != 0 || hq.width % cfg.downscale_factor != 0)
    throw std::invalid_argument("degrade: dims not divisible by downscale_factor");

  Rng rng(seed);
  DegradationSample<S> s;
  s.blur_sigma = static_cast<S>(
      rng.uniform(cfg.blur_sigma_range.first, cfg.blur_sigma_range.second));
  s.noise_sigma = static_cast<S>(
      rng.uniform(cfg.noise_sigma_range.first, cfg.noise_sigma_range.second));
  s.quality = rng.uniform_int(cfg.compression_quality_range.first,
                              cfg.compression_quality_range.second);
  if (cfg.second_order) {
    const auto mid = [](S lo, S hi) { return lo + (hi - lo) / S(2); };
    s.blur_sigma2 = static_cast<S>(rng.uniform(
        cfg.blur_sigma_range.first,
        mid(cfg.blur_sigma_range.first, cfg.blur_sigma_range.second)));
    s.noise_sigma2 = static_cast<S>(rng.uniform(
        cfg.noise_sigma_range.first,
        mid(cfg.noise_sigma_range.first, cfg.noise_sigma_range.second)));
    const int qmid = (cfg.compression_quality_range.first +
                      cfg.compression_quality_range.second + 1) / 2;
    s.quality2 = rng.uniform_int(qmid, cfg.compression_quality_range.second);
  }

  auto x = detail::bicubic_downscale(detail::gaussian_blur(hq, s.blur_sigma),
                                     cfg.downscale_factor);
  auto noise = rng.normal_tensor<S>(x.channels, x.height, x.width);
  x.data += s.noise_sigma * noise.data;
  x = detail::block_dct_quantize(x, s.quality);

  if (cfg.second_order) {
    x = detail::gaussian_blur(x, s.blur_sigma2);
    auto noise2 = rng.normal_tensor<S>(x.channels, x.height, x.width);
    x.data += s.noise_sigma2 * noise2.data;
    x = detail::block_dct_quantize(x, s.quality2);
  }

  x.data = x.data.min(S(1)).max(S(-1));
  x.origin = Origin::Lq;
  if (sample_out) *sample_out = s;
  return x;
}

}  // namespace omgsr
