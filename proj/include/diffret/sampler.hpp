#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffret/denoiser.hpp"
#include "diffret/rng.hpp"
#include "diffret/schedule.hpp"
#include "diffret/tensor.hpp"

namespace diffret {

enum class SamplerStrategy { kDdim, kDdpm };

SamplerStrategy sampler_strategy_from_string(const std::string& s);
std::string to_string(SamplerStrategy s);

struct SamplerConfig {
  SamplerStrategy strategy = SamplerStrategy::kDdim;
  std::size_t eval_steps = 0;  // 0 means the schedule's full K
  double ddim_eta = 0.0;
  // x-hat-0 is clamped to this range while stepping; defaults to
  // +/- 2 * signal_scale. The final readout uses the unclamped prediction.
  std::optional<double> clamp_lo, clamp_hi;
  // Independent noise initializations averaged into the returned
  // distribution; 1 chain is the default (single-draw inference).
  std::size_t repeats = 1;
};

// One deterministic (eta=0) or stochastic DDIM update from level k to k_prev.
Tensor ddim_step(const Tensor& x_k, const Tensor& x0_hat, std::size_t k, std::size_t k_prev,
                 const NoiseSchedule& sched, double eta, SeededRng& rng);

// One ancestral update from level k to k-1; the k=1 step returns the posterior
// mean with no added noise.
Tensor ddpm_step(const Tensor& x_k, const Tensor& x0_hat, std::size_t k,
                 const NoiseSchedule& sched, SeededRng& rng);

// Predicts the clean signal for the current state at level k.
using DenoiseFn = std::function<Tensor(const Tensor& x_k, std::size_t k)>;
// Supplies one standard-normal vector per call, in a fixed call order:
// the initial state first, then one draw per stochastic step.
using NoiseFn = std::function<Tensor()>;

struct JointResult {
  Tensor prob;                // length N, sums to 1
  std::vector<Tensor> trace;  // filled when requested: softmax(x_K), then one
                              // row per sampled timestep's x-hat-0 readout
};

// Core reverse chain with injectable noise (see NoiseSource for the
// permutation-stable supply used at evaluation time).
JointResult generate_joint(const DenoiseFn& denoise, const NoiseSchedule& sched, std::size_t n,
                           const SamplerConfig& cfg, const NoiseFn& noise,
                           bool want_trace = false);

// Convenience: chain driven by the trained denoiser with rng-drawn noise.
JointResult generate_joint(const ParamLookup& p, const DenoiserConfig& dcfg,
                           const NoiseSchedule& sched, const Tensor& query,
                           const Tensor& candidates, const SamplerConfig& cfg, SeededRng& rng,
                           Direction direction, bool want_trace = false);

// Per-coordinate noise streams keyed by stable candidate ids: permuting the
// gallery permutes every draw's coordinates consistently, which keeps the
// whole sampling chain permutation-equivariant.
class NoiseSource {
 public:
  NoiseSource(const SeededRng& base, std::span<const std::uint64_t> candidate_keys);
  Tensor draw();
  NoiseFn fn();

 private:
  std::vector<SeededRng> streams_;
};

}  // namespace diffret
