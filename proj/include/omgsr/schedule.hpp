#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "omgsr/tensor.hpp"

namespace omgsr {

enum class SchedulerKind { Ddpm, Fm };

template <typename S>
struct ScheduleConfig {
  SchedulerKind kind = SchedulerKind::Ddpm;
  int num_steps = 999;
  S beta_start = static_cast<S>(1e-4);  // DDPM only
  S beta_end = static_cast<S>(0.02);    // DDPM only
  S shift = static_cast<S>(3.0);        // FM only
};

// Tabulated noise schedule over the integer grid t = 0..num_steps.
//
// DDPM: beta is linear in t, alpha_bar(t) = prod_{s=1..t}(1 - beta_s),
// with the empty-product convention alpha_bar(0) = 1.
// FM: sigma(t) = shift*u / (1 + (shift-1)*u), u = t/num_steps.
template <typename S>
class NoiseSchedule {
 public:
  explicit NoiseSchedule(const ScheduleConfig<S>& cfg) : cfg_(cfg) {
    if (cfg.num_steps <= 0)
      throw std::invalid_argument("NoiseSchedule: num_steps must be positive");
    if (cfg.kind == SchedulerKind::Ddpm) {
      if (!(cfg.beta_start > S(0) && cfg.beta_start < S(1)) ||
          !(cfg.beta_end > S(0) && cfg.beta_end < S(1)))
        throw std::invalid_argument("NoiseSchedule: beta out of (0,1)");
      alpha_bar_.resize(cfg.num_steps + 1);
      alpha_bar_[0] = S(1);
      S prod = S(1);
      for (int t = 1; t <= cfg.num_steps; ++t) {
        prod *= S(1) - beta(t);
        alpha_bar_[t] = prod;
      }
    } else {
      if (!(cfg.shift > S(0)))
        throw std::invalid_argument("NoiseSchedule: shift must be positive");
      sigma_.resize(cfg.num_steps + 1);
      for (int t = 0; t <= cfg.num_steps; ++t) {
        const S u = static_cast<S>(t) / static_cast<S>(cfg.num_steps);
        sigma_[t] = cfg.shift * u / (S(1) + (cfg.shift - S(1)) * u);
      }
    }
  }

  const ScheduleConfig<S>& config() const { return cfg_; }
  SchedulerKind kind() const { return cfg_.kind; }
  int num_steps() const { return cfg_.num_steps; }

  // Linear beta grid; valid for t in 1..num_steps.
  S beta(int t) const {
    if (cfg_.num_steps == 1) return cfg_.beta_start;
    return cfg_.beta_start + (cfg_.beta_end - cfg_.beta_start) *
                                 static_cast<S>(t - 1) /
                                 static_cast<S>(cfg_.num_steps - 1);
  }

  S alpha_bar(int t) const {
    require_kind(SchedulerKind::Ddpm, "alpha_bar");
    check_range(t);
    return alpha_bar_[t];
  }

  S sigma(int t) const {
    require_kind(SchedulerKind::Fm, "sigma");
    check_range(t);
    return sigma_[t];
  }

  // Interpolation weights (w0, weps) such that z_t = w0*z0 + weps*eps.
  std::pair<S, S> mix_weights(int t) const {
    check_range(t);
    if (cfg_.kind == SchedulerKind::Ddpm) {
      const S ab = alpha_bar_[t];
      return {std::sqrt(ab), std::sqrt(S(1) - ab)};
    }
    const S s = sigma_[t];
    return {S(1) - s, s};
  }

  Tensor<S> add_noise(const Tensor<S>& z0, const Tensor<S>& eps, int t) const {
    require_same_shape(z0, eps, "add_noise");
    const auto [w0, weps] = mix_weights(t);
    Tensor<S> out = z0.like_zeros();
    out.data = w0 * z0.data + weps * eps.data;
    out.origin = Origin::Noisy;
    return out;
  }

  // Pre-training regression target: DDPM predicts eps, FM predicts the
  // velocity eps - z0.
  Tensor<S> training_target(const Tensor<S>& z0, const Tensor<S>& eps,
                            int t) const {
    require_same_shape(z0, eps, "training_target");
    check_range(t);
    Tensor<S> out = z0.like_zeros();
    if (cfg_.kind == SchedulerKind::Ddpm)
      out.data = eps.data;
    else
      out.data = eps.data - z0.data;
    return out;
  }

 private:
  void check_range(int t) const {
    if (t < 0 || t > cfg_.num_steps)
      throw std::out_of_range("NoiseSchedule: step index out of range");
  }
  void require_kind(SchedulerKind k, const char* what) const {
    if (cfg_.kind != k)
      throw std::invalid_argument(std::string("NoiseSchedule::") + what +
                                  ": scheduler kind mismatch");
  }

  ScheduleConfig<S> cfg_;
  std::vector<S> alpha_bar_;
  std::vector<S> sigma_;
};

template <typename S>
S alpha_bar(const ScheduleConfig<S>& cfg, int t) {
  return NoiseSchedule<S>(cfg).alpha_bar(t);
}

template <typename S>
S sigma(const ScheduleConfig<S>& cfg, int t) {
  return NoiseSchedule<S>(cfg).sigma(t);
}

template <typename S>
Tensor<S> add_noise(const ScheduleConfig<S>& cfg, const Tensor<S>& z0,
                    const Tensor<S>& eps, int t) {
  return NoiseSchedule<S>(cfg).add_noise(z0, eps, t);
}

template <typename S>
Tensor<S> training_target(const ScheduleConfig<S>& cfg, const Tensor<S>& z0,
                          const Tensor<S>& eps, int t) {
  return NoiseSchedule<S>(cfg).training_target(z0, eps, t);
}

}  // namespace omgsr
