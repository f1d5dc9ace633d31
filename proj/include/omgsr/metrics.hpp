#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "omgsr/chunking.hpp"
#include "omgsr/losses.hpp"
#include "omgsr/models.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

// Peak signal-to-noise ratio in dB, capped at 99 once the images are
// numerically indistinguishable.
template <typename S>
double psnr(const Tensor<S>& a, const Tensor<S>& b, double peak = 2.0) {
  require_same_shape(a, b, "psnr");
  const double mse = static_cast<double>(
      (a.data.template cast<double>() - b.data.template cast<double>())
          .square()
          .mean());
  if (mse < 1e-12) return 99.0;
  return 10.0 * std::log10(peak * peak / mse);
}

// Mean structural similarity over a sliding box window (valid positions
// only), averaged across channels.
template <typename S>
double ssim(const Tensor<S>& a, const Tensor<S>& b, int window = 7,
            double peak = 2.0) {
  require_same_shape(a, b, "ssim");
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("ssim: window must be a positive odd integer");
  if (a.height < window || a.width < window)
    throw std::invalid_argument("ssim: image smaller than the window");
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const double n = static_cast<double>(window) * window;

  double acc = 0;
  long count = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y + window <= a.height; ++y)
      for (int x = 0; x + window <= a.width; ++x) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < window; ++dy)
          for (int dx = 0; dx < window; ++dx) {
            const double va = static_cast<double>(a.at(c, y + dy, x + dx));
            const double vb = static_cast<double>(b.at(c, y + dy, x + dx));
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        const double mu_a = sa / n, mu_b = sb / n;
        const double var_a = saa / n - mu_a * mu_a;
        const double var_b = sbb / n - mu_b * mu_b;
        const double cov = sab / n - mu_a * mu_b;
        acc += (2 * mu_a * mu_b + c1) * (2 * cov + c2) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++count;
      }
  return acc / static_cast<double>(count);
}

template <typename S>
struct EvalRow {
  std::string file;
  double psnr = 0, ssim = 0, pdist = 0;
};

template <typename S>
struct EvalReport {
  std::vector<EvalRow<S>> rows;
  double mean_psnr = 0, mean_ssim = 0, mean_pdist = 0;

  void write_csv(std::ostream& os) const {
    os << "file,psnr,ssim,pdist\n";
    for (const auto& r : rows)
      os << r.file << ',' << r.psnr << ',' << r.ssim << ',' << r.pdist << '\n';
  }
};

// Runs a restoration callable over named LQ/HQ pairs and reports per-image
// plus mean metrics. The perceptual column reuses the toy embedder behind
// oc_lpips; it is not comparable to any published perceptual metric.
template <typename S, typename RestoreFn>
EvalReport<S> evaluate(RestoreFn&& restore,
                       const std::vector<std::tuple<std::string, Tensor<S>, Tensor<S>>>& pairs,
                       PerceptualEmbedder<S>& embedder) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty dataset");
  EvalReport<S> report;
  for (const auto& [name, lq, hq] : pairs) {
    auto restored = restore(lq);
    require_same_shape(restored, hq, "evaluate");
    EvalRow<S> row;
    row.file = name;
    row.psnr = psnr(restored, hq);
    row.ssim = ssim(restored, hq);
    row.pdist = static_cast<double>(lpips_distance(embedder, restored, hq));
    report.rows.push_back(row);
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const auto& a, const auto& b) { return a.file < b.file; });
  for (const auto& r : report.rows) {
    report.mean_psnr += r.psnr;
    report.mean_ssim += r.ssim;
    report.mean_pdist += r.pdist;
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean_psnr /= n;
  report.mean_ssim /= n;
  report.mean_pdist /= n;
  return report;
}

}  // namespace omgsr
