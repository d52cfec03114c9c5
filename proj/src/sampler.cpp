#include "diffret/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "diffret/error.hpp"

namespace diffret {

SamplerStrategy sampler_strategy_from_string(const std::string& s) {
  if (s == "ddim") return SamplerStrategy::kDdim;
  if (s == "ddpm") return SamplerStrategy::kDdpm;
  throw ConfigError("unknown sampler strategy: " + s);
}

std::string to_string(SamplerStrategy s) {
  return s == SamplerStrategy::kDdim ? "ddim" : "ddpm";
}

namespace {

Tensor ddim_step_impl(const Tensor& x_k, const Tensor& x0_hat, std::size_t k, std::size_t k_prev,
                      const NoiseSchedule& sched, double eta, const Tensor* z) {
  if (k_prev >= k) throw ContractError("ddim_step: k_prev must be below k");
  if (!x_k.same_shape(x0_hat)) throw DimensionError("ddim_step: shape mismatch");
  if (eta < 0.0 || eta > 1.0) throw ConfigError("ddim_step: eta must lie in [0,1]");
  const double ab_k = sched.alpha_bar(k);
  const double ab_p = sched.alpha_bar(k_prev);
  const double sigma =
      eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_k)) * std::sqrt(1.0 - ab_k / ab_p);
  const double eps_coef = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
  std::vector<double> out(x_k.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double eps_hat = (x_k.at(i) - std::sqrt(ab_k) * x0_hat.at(i)) / std::sqrt(1.0 - ab_k);
    out[i] = std::sqrt(ab_p) * x0_hat.at(i) + eps_coef * eps_hat;
    if (sigma > 0.0) out[i] += sigma * z->at(i);
  }
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("ddim_step: non-finite state");
  }
  return Tensor(x_k.shape(), std::move(out));
}

Tensor ddpm_step_impl(const Tensor& x_k, const Tensor& x0_hat, std::size_t k,
                      const NoiseSchedule& sched, const Tensor* z) {
  if (k < 1) throw ContractError("ddpm_step: k must be >= 1");
  if (!x_k.same_shape(x0_hat)) throw DimensionError("ddpm_step: shape mismatch");
  const double ab_k = sched.alpha_bar(k);
  const double ab_p = sched.alpha_bar(k - 1);
  const double beta = sched.beta(k);
  const double alpha = sched.alpha(k);
  const double c0 = std::sqrt(ab_p) * beta / (1.0 - ab_k);
  const double ck = std::sqrt(alpha) * (1.0 - ab_p) / (1.0 - ab_k);
  const double var = (1.0 - ab_p) / (1.0 - ab_k) * beta;
  std::vector<double> out(x_k.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = c0 * x0_hat.at(i) + ck * x_k.at(i);
    if (k > 1) out[i] += std::sqrt(var) * z->at(i);
  }
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("ddpm_step: non-finite state");
  }
  return Tensor(x_k.shape(), std::move(out));
}

std::vector<double> softmax_plain(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double denom = 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

}  // namespace

Tensor ddim_step(const Tensor& x_k, const Tensor& x0_hat, std::size_t k, std::size_t k_prev,
                 const NoiseSchedule& sched, double eta, SeededRng& rng) {
  if (k_prev >= k) throw ContractError("ddim_step: k_prev must be below k");
  const double ab_k = sched.alpha_bar(k);
  const double ab_p = sched.alpha_bar(k_prev);
  const double sigma =
      eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_k)) * std::sqrt(1.0 - ab_k / ab_p);
  if (sigma > 0.0) {
    Tensor z = gaussian(rng, x_k.shape());
    return ddim_step_impl(x_k, x0_hat, k, k_prev, sched, eta, &z);
  }
  return ddim_step_impl(x_k, x0_hat, k, k_prev, sched, eta, nullptr);
}

Tensor ddpm_step(const Tensor& x_k, const Tensor& x0_hat, std::size_t k,
                 const NoiseSchedule& sched, SeededRng& rng) {
  if (k > 1) {
    Tensor z = gaussian(rng, x_k.shape());
    return ddpm_step_impl(x_k, x0_hat, k, sched, &z);
  }
  return ddpm_step_impl(x_k, x0_hat, k, sched, nullptr);
}

namespace {

JointResult run_one_chain(const DenoiseFn& denoise, const NoiseSchedule& sched, std::size_t n,
                          const SamplerConfig& cfg, const NoiseFn& noise, bool want_trace) {
  const std::size_t K = sched.K;
  const std::size_t steps = cfg.eval_steps == 0 ? K : cfg.eval_steps;
  std::vector<std::size_t> seq;
  if (cfg.strategy == SamplerStrategy::kDdim) {
    seq = ddim_subsequence(K, steps);
  } else {
    if (steps != K) throw ConfigError("generate_joint: ddpm always runs the full chain");
    seq.resize(K);
    for (std::size_t i = 0; i < K; ++i) seq[i] = K - i;
  }
  const double lo = cfg.clamp_lo.value_or(-2.0 * sched.signal_scale);
  const double hi = cfg.clamp_hi.value_or(2.0 * sched.signal_scale);
  if (!(lo < hi)) throw ConfigError("generate_joint: empty clamp range");

  JointResult result;
  Tensor x = noise();
  if (x.ndim() != 1 || x.dim(0) != n) throw DimensionError("generate_joint: bad noise shape");
  if (want_trace) result.trace.push_back(Tensor({n}, softmax_plain(x.values())));

  Tensor x0_hat = Tensor::zeros({n});
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::size_t k = seq[i];
    x0_hat = denoise(x, k);
    if (x0_hat.ndim() != 1 || x0_hat.dim(0) != n) {
      throw DimensionError("generate_joint: denoiser output length mismatch");
    }
    if (want_trace) result.trace.push_back(Tensor({n}, softmax_plain(x0_hat.values())));
    std::vector<double> clamped = x0_hat.values();
    for (double& v : clamped) v = std::clamp(v, lo, hi);
    const Tensor x0_c({n}, std::move(clamped));
    if (cfg.strategy == SamplerStrategy::kDdim) {
      const std::size_t k_prev = i + 1 < seq.size() ? seq[i + 1] : 0;
      const double ab_k = sched.alpha_bar(k);
      const double ab_p = sched.alpha_bar(k_prev);
      const double sigma = cfg.ddim_eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_k)) *
                           std::sqrt(1.0 - ab_k / ab_p);
      if (sigma > 0.0) {
        Tensor z = noise();
        x = ddim_step_impl(x, x0_c, k, k_prev, sched, cfg.ddim_eta, &z);
      } else {
        x = ddim_step_impl(x, x0_c, k, k_prev, sched, cfg.ddim_eta, nullptr);
      }
    } else {
      if (k > 1) {
        Tensor z = noise();
        x = ddpm_step_impl(x, x0_c, k, sched, &z);
      } else {
        x = ddpm_step_impl(x, x0_c, k, sched, nullptr);
      }
    }
  }
  result.prob = Tensor({n}, softmax_plain(x0_hat.values()));
  return result;
}

}  // namespace

JointResult generate_joint(const DenoiseFn& denoise, const NoiseSchedule& sched, std::size_t n,
                           const SamplerConfig& cfg, const NoiseFn& noise, bool want_trace) {
  if (n == 0) throw InputError("generate_joint: empty candidate set");
  if (cfg.ddim_eta < 0.0 || cfg.ddim_eta > 1.0) {
    throw ConfigError("generate_joint: eta must lie in [0,1]");
  }
  if (cfg.repeats < 1) throw ConfigError("generate_joint: repeats must be >= 1");
  JointResult result = run_one_chain(denoise, sched, n, cfg, noise, want_trace);
  if (cfg.repeats == 1) return result;
  std::vector<double> mean = result.prob.values();
  for (std::size_t r = 1; r < cfg.repeats; ++r) {
    // The trace, when requested, covers the first chain only.
    const JointResult extra = run_one_chain(denoise, sched, n, cfg, noise, /*want_trace=*/false);
    for (std::size_t i = 0; i < n; ++i) mean[i] += extra.prob.at(i);
  }
  for (double& v : mean) v /= static_cast<double>(cfg.repeats);
  result.prob = Tensor({n}, std::move(mean));
  return result;
}

JointResult generate_joint(const ParamLookup& p, const DenoiserConfig& dcfg,
                           const NoiseSchedule& sched, const Tensor& query,
                           const Tensor& candidates, const SamplerConfig& cfg, SeededRng& rng,
                           Direction direction, bool want_trace) {
  if (candidates.ndim() != 2 || candidates.rows() == 0) {
    throw InputError("generate_joint: empty candidate set");
  }
  const std::size_t n = candidates.rows();
  DenoiseFn denoise = [&](const Tensor& x_k, std::size_t k) {
    return predict_x0(query, candidates, x_k, k, sched.K, p, dcfg, direction);
  };
  NoiseFn noise = [&]() { return gaussian(rng, {n}); };
  return generate_joint(denoise, sched, n, cfg, noise, want_trace);
}

NoiseSource::NoiseSource(const SeededRng& base, std::span<const std::uint64_t> candidate_keys) {
  streams_.reserve(candidate_keys.size());
  for (std::uint64_t key : candidate_keys) streams_.push_back(base.split(key));
}

Tensor NoiseSource::draw() {
  std::vector<double> out(streams_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = streams_[i].normal();
  return Tensor({streams_.size()}, std::move(out));
}

NoiseFn NoiseSource::fn() {
  return [this]() { return draw(); };
}

}  // namespace diffret
