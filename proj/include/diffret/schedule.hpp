#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "diffret/tensor.hpp"

namespace diffret {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind kind);

// Immutable after construction. betas/alphas index k-1 for step k in 1..K;
// alpha_bars index k directly with alpha_bars[0] == 1.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::kCosine;
  std::size_t K = 0;
  double signal_scale = 1.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(std::size_t k) const;
  double alpha(std::size_t k) const;
  double alpha_bar(std::size_t k) const;  // accepts k in 0..K
};

// linear: beta spaced 1e-4 -> 0.02; cosine: alpha-bar ratios of
// f(k) = cos^2(((k/K + s)/(1 + s)) * pi/2) with s = 0.008, beta clipped at
// 0.999, then alphas/alpha_bars rebuilt from the clipped betas.
NoiseSchedule make_schedule(ScheduleKind kind, std::size_t K, double signal_scale = 1.0);

// Rebuilds a schedule from stored betas (checkpoint load path); alphas and
// alpha_bars are re-derived exactly as in make_schedule.
NoiseSchedule schedule_from_betas(ScheduleKind kind, double signal_scale,
                                  std::vector<double> betas);

// x_k = sqrt(alpha_bar_k) * x0 + sqrt(1 - alpha_bar_k) * noise
Tensor forward_diffuse(const NoiseSchedule& sched, const Tensor& x0, std::size_t k,
                       const Tensor& noise);

// Evenly spaced decreasing subsequence of {1..K} with the given length,
// starting at K and ending at 1.
std::vector<std::size_t> ddim_subsequence(std::size_t K, std::size_t eval_steps);

}  // namespace diffret
