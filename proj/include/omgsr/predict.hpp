#pragma once

#include <cmath>
#include <stdexcept>

#include "omgsr/schedule.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

// One mid-timestep prediction: algebraic inverse of the forward
// interpolation at t_star given the denoiser's prediction.
//   DDPM: z_P = (z_L - sqrt(1 - ab) * eps_pred) / sqrt(ab)
//   FM:   z_P = z_L - sigma(t_star) * eps_pred
template <typename S>
Tensor<S> predict_one_step(const NoiseSchedule<S>& sched, const Tensor<S>& z_L,
                           const Tensor<S>& eps_pred, int t_star) {
  require_same_shape(z_L, eps_pred, "predict_one_step");
  Tensor<S> out = z_L.like_zeros();
  out.origin = Origin::Predicted;
  if (sched.kind() == SchedulerKind::Ddpm) {
    const S ab = sched.alpha_bar(t_star);
    if (ab <= S(1e-8))
      throw std::domain_error("predict_one_step: degenerate timestep, alpha_bar below floor");
    out.data = (z_L.data - std::sqrt(S(1) - ab) * eps_pred.data) / std::sqrt(ab);
  } else {
    out.data = z_L.data - sched.sigma(t_star) * eps_pred.data;
  }
  return out;
}

// Gradient of predict_one_step with respect to its two inputs; the map is
// linear, so the pullback is a pair of scalar multiplies.
//   grad_zL  += c_z  * grad_out
//   grad_eps += c_e  * grad_out
template <typename S>
std::pair<S, S> predict_one_step_coeffs(const NoiseSchedule<S>& sched, int t_star) {
  if (sched.kind() == SchedulerKind::Ddpm) {
    const S ab = sched.alpha_bar(t_star);
    if (ab <= S(1e-8))
      throw std::domain_error("predict_one_step: degenerate timestep, alpha_bar below floor");
    return {S(1) / std::sqrt(ab), -std::sqrt(S(1) - ab) / std::sqrt(ab)};
  }
  return {S(1), -sched.sigma(t_star)};
}

template <typename S>
Tensor<S> predict_one_step(const ScheduleConfig<S>& cfg, const Tensor<S>& z_L,
                           const Tensor<S>& eps_pred, int t_star) {
  return predict_one_step(NoiseSchedule<S>(cfg), z_L, eps_pred, t_star);
}

}  // namespace omgsr
