#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "omgsr/models.hpp"
#include "omgsr/predict.hpp"
#include "omgsr/rng.hpp"
#include "omgsr/schedule.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

template <typename S>
struct MidTimestepReport {
  std::map<int, S> per_t_mse;  // candidate step -> mean squared gap over pairs
  int t_star = 0;
  int dataset_size = 0;

  void write_csv(std::ostream& os) const {
    os << "t,mse\n";
    for (const auto& [t, mse] : per_t_mse) os << t << ',' << mse << '\n';
  }
};

template <typename S>
struct GapProbeReport {
  std::vector<std::pair<int, S>> step_mse;  // (rollout step, latent gap)
  std::optional<int> injection_step;
  S injection_level = S(0);

  void write_csv(std::ostream& os) const {
    os << "step,mse\n";
    for (const auto& [k, mse] : step_mse) os << k << ',' << mse << '\n';
  }
};

// Candidate grid for the mid-timestep search: every `stride`-th step plus the
// final one.
inline std::vector<int> default_candidate_grid(int num_steps, int stride = 5) {
  std::vector<int> ts;
  for (int t = 0; t <= num_steps; t += stride) ts.push_back(t);
  if (ts.back() != num_steps) ts.push_back(num_steps);
  return ts;
}

// Searches candidate timesteps for the one whose noised HQ latent sits
// closest (in mean squared L2 norm) to the LQ latent. One epsilon is drawn
// per pair and reused across every candidate so the argmin is
// noise-consistent; ties break toward the smaller t.
template <typename S>
MidTimestepReport<S> precompute_mid_timestep(
    const std::vector<std::pair<Tensor<S>, Tensor<S>>>& pairs,
    const NoiseSchedule<S>& sched, const std::vector<Tensor<S>>& eps,
    const std::vector<int>& candidate_ts) {
  if (pairs.empty())
    throw std::invalid_argument("precompute_mid_timestep: no pairs");
  if (candidate_ts.empty())
    throw std::invalid_argument("precompute_mid_timestep: no candidates");
  if (eps.size() != pairs.size())
    throw std::invalid_argument("precompute_mid_timestep: one eps per pair");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    require_same_shape(pairs[i].first, pairs[i].second, "precompute_mid_timestep");
    require_same_shape(pairs[i].first, pairs.front().first, "precompute_mid_timestep");
    require_same_shape(pairs[i].first, eps[i], "precompute_mid_timestep");
  }

  MidTimestepReport<S> report;
  report.dataset_size = static_cast<int>(pairs.size());
  bool first = true;
  for (int t : candidate_ts) {
    S acc = S(0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& [z_L, z_H] = pairs[i];
      const auto noised = sched.add_noise(z_H, eps[i], t);
      acc += (z_L.data - noised.data).square().sum();
    }
    const S mse = acc / static_cast<S>(pairs.size());
    report.per_t_mse[t] = mse;
    if (first || mse < report.per_t_mse[report.t_star] ||
        (mse == report.per_t_mse[report.t_star] && t < report.t_star)) {
      report.t_star = t;
      first = false;
    }
  }
  return report;
}

template <typename S>
MidTimestepReport<S> precompute_mid_timestep(
    const std::vector<std::pair<Tensor<S>, Tensor<S>>>& pairs,
    const NoiseSchedule<S>& sched, Rng& eps_source,
    const std::vector<int>& candidate_ts) {
  if (pairs.empty())
    throw std::invalid_argument("precompute_mid_timestep: no pairs");
  std::vector<Tensor<S>> eps;
  eps.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    eps.push_back(eps_source.normal_tensor<S>(pairs.front().first.channels,
                                              pairs.front().first.height,
                                              pairs.front().first.width));
  return precompute_mid_timestep(pairs, sched, eps, candidate_ts);
}

template <typename S>
MidTimestepReport<S> precompute_mid_timestep(
    const std::vector<std::pair<Tensor<S>, Tensor<S>>>& pairs,
    const ScheduleConfig<S>& cfg, Rng& eps_source,
    const std::vector<int>& candidate_ts) {
  return precompute_mid_timestep(pairs, NoiseSchedule<S>(cfg), eps_source,
                                 candidate_ts);
}

// Deterministic rollout from pure noise that tracks how far the evolving
// latent drifts from where the schedule says a noised clean estimate should
// sit. The probe keeps the initial noise draw and, at each rollout step,
// records the per-element mean squared gap between the current latent and
// the schedule's interpolation of (current clean estimate, initial noise).
// Optional injection adds level-scaled fresh noise at the start of one step;
// level 0 reproduces the uninjected run exactly. The vae only contributes
// the latent channel count; the probe never leaves latent space.
template <typename S>
GapProbeReport<S> gap_probe(DenoiserModel<S>& denoiser, const VaeModel<S>& vae,
                            const NoiseSchedule<S>& sched, int steps,
                            std::optional<int> injection_step,
                            S injection_level, std::uint64_t seed,
                            int latent_h = 16, int latent_w = 16) {
  if (steps < 2) throw std::invalid_argument("gap_probe: steps must be >= 2");
  if (injection_step && (*injection_step < 1 || *injection_step > steps - 1))
    throw std::out_of_range("gap_probe: injection_step outside [1, steps-1]");
  if (injection_level < S(0))
    throw std::invalid_argument("gap_probe: injection_level must be >= 0");

  const int T = sched.num_steps();
  Rng rng(seed);
  auto eps0 = rng.normal_tensor<S>(vae.latent_channels(), latent_h, latent_w);
  Tensor<S> z_bar = eps0;  // start of the rollout: pure noise at t = T

  GapProbeReport<S> report;
  report.injection_step = injection_step;
  report.injection_level = injection_level;
  for (int k = 1; k <= steps; ++k) {
    // descending step grid: t_1 = T down to t_steps > 0
    const int t = std::max(1, (T * (steps - k + 1)) / steps);
    if (injection_step && *injection_step == k) {
      auto fresh = rng.normal_tensor<S>(z_bar.channels, z_bar.height, z_bar.width);
      z_bar.data += injection_level * fresh.data;
    }
    if (!z_bar.all_finite())
      throw std::runtime_error("gap_probe: non-finite latent");

    auto pred = denoiser.forward(z_bar, t);
    auto z0_hat = predict_one_step(sched, z_bar, pred, t);
    auto rebuilt = sched.add_noise(z0_hat, eps0, t);
    report.step_mse.emplace_back(
        k, (z_bar.data - rebuilt.data).square().sum() /
               static_cast<S>(z_bar.size()));

    // deterministic update: re-noise the clean estimate to the next step
    // using the noise implied by the model's own prediction
    const int t_next = std::max(0, (T * (steps - k)) / steps);
    Tensor<S> eps_hat = pred.like_zeros();
    if (sched.kind() == SchedulerKind::Ddpm)
      eps_hat.data = pred.data;
    else
      eps_hat.data = pred.data + z0_hat.data;  // velocity -> implied noise
    z_bar = sched.add_noise(z0_hat, eps_hat, t_next);
  }
  return report;
}

}  // namespace omgsr
