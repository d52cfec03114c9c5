#include "diffret/schedule.hpp"

#include <cmath>
#include <numbers>

#include "diffret/error.hpp"

namespace diffret {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::kLinear;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

double NoiseSchedule::beta(std::size_t k) const {
  if (k < 1 || k > K) throw ContractError("schedule step out of range");
  return betas[k - 1];
}

double NoiseSchedule::alpha(std::size_t k) const {
  if (k < 1 || k > K) throw ContractError("schedule step out of range");
  return alphas[k - 1];
}

double NoiseSchedule::alpha_bar(std::size_t k) const {
  if (k > K) throw ContractError("schedule step out of range");
  return alpha_bars[k];
}

namespace {

void derive_from_betas(NoiseSchedule& s) {
  const std::size_t K = s.K;
  s.alphas.resize(K);
  s.alpha_bars.assign(K + 1, 1.0);
  for (std::size_t k = 1; k <= K; ++k) {
    const double b = s.betas[k - 1];
    if (!(b > 0.0 && b < 1.0)) throw NumericError("schedule produced beta outside (0,1)");
    s.alphas[k - 1] = 1.0 - b;
    s.alpha_bars[k] = s.alpha_bars[k - 1] * s.alphas[k - 1];
    if (!(s.alpha_bars[k] < s.alpha_bars[k - 1])) {
      throw NumericError("schedule alpha_bar is not strictly decreasing");
    }
  }
}

}  // namespace

NoiseSchedule make_schedule(ScheduleKind kind, std::size_t K, double signal_scale) {
  if (K < 1) throw ConfigError("schedule requires at least one step");
  if (!(signal_scale > 0.0) || !std::isfinite(signal_scale)) {
    throw ConfigError("signal_scale must be positive");
  }
  NoiseSchedule s;
  s.kind = kind;
  s.K = K;
  s.signal_scale = signal_scale;
  s.betas.resize(K);

  if (kind == ScheduleKind::kLinear) {
    const double lo = 1e-4, hi = 0.02;
    for (std::size_t k = 1; k <= K; ++k) {
      s.betas[k - 1] =
          K == 1 ? lo : lo + (hi - lo) * static_cast<double>(k - 1) / static_cast<double>(K - 1);
    }
  } else {
    const double off = 0.008;
    auto f = [&](std::size_t k) {
      const double u = (static_cast<double>(k) / static_cast<double>(K) + off) / (1.0 + off);
      const double c = std::cos(u * std::numbers::pi / 2.0);
      return c * c;
    };
    double prev = 1.0;  // f(k)/f(0) at k=0
    const double f0 = f(0);
    for (std::size_t k = 1; k <= K; ++k) {
      const double cur = f(k) / f0;
      s.betas[k - 1] = std::min(1.0 - cur / prev, 0.999);
      prev = cur;
    }
  }

  derive_from_betas(s);
  return s;
}

NoiseSchedule schedule_from_betas(ScheduleKind kind, double signal_scale,
                                  std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("schedule requires at least one step");
  if (!(signal_scale > 0.0) || !std::isfinite(signal_scale)) {
    throw ConfigError("signal_scale must be positive");
  }
  NoiseSchedule s;
  s.kind = kind;
  s.K = betas.size();
  s.signal_scale = signal_scale;
  s.betas = std::move(betas);
  derive_from_betas(s);
  return s;
}

Tensor forward_diffuse(const NoiseSchedule& sched, const Tensor& x0, std::size_t k,
                       const Tensor& noise) {
  if (k < 1 || k > sched.K) throw ContractError("forward_diffuse: step out of range");
  if (!x0.same_shape(noise)) throw DimensionError("forward_diffuse: noise shape mismatch");
  const double ab = sched.alpha_bar(k);
  return add(scale(x0, std::sqrt(ab)), scale(noise, std::sqrt(1.0 - ab)));
}

std::vector<std::size_t> ddim_subsequence(std::size_t K, std::size_t eval_steps) {
  if (K < 1) throw ConfigError("ddim_subsequence: K must be positive");
  if (eval_steps < 1 || eval_steps > K) {
    throw ConfigError("ddim_subsequence: eval_steps must lie in 1..K");
  }
  std::vector<std::size_t> out(eval_steps);
  if (eval_steps == 1) {
    out[0] = K;
    return out;
  }
  for (std::size_t i = 0; i < eval_steps; ++i) {
    // K - round(i * (K-1) / (eval_steps-1)) in exact integer arithmetic
    const std::size_t num = 2 * i * (K - 1) + (eval_steps - 1);
    out[i] = K - num / (2 * (eval_steps - 1));
  }
  for (std::size_t i = 1; i < eval_steps; ++i) {
    if (out[i] >= out[i - 1]) throw ContractError("ddim_subsequence: not strictly decreasing");
  }
  if (out.front() != K || out.back() != 1) {
    throw ContractError("ddim_subsequence: endpoints must be K and 1");
  }
  return out;
}

}  // namespace diffret
