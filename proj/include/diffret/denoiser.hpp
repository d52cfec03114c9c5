#pragma once

#include <cstddef>
#include <optional>

#include "diffret/optim.hpp"
#include "diffret/rng.hpp"
#include "diffret/tensor.hpp"

namespace diffret {

enum class Direction { kTextToVideo, kVideoToText };

const char* to_string(Direction d);

// Diffusion state over a gallery of size N: the raw signal, its noise level,
// and the retrieval direction it belongs to. prob is populated only at k=0,
// where the signal is read out as a distribution.
struct JointDistState {
  Tensor x;
  std::size_t k = 0;
  Direction direction = Direction::kTextToVideo;
  std::optional<Tensor> prob;
};

struct DenoiserConfig {
  std::size_t d_model = 0;
  std::size_t hidden = 0;   // decoder hidden width; 0 means 2 * d_model
  bool scale_qk = false;    // optional 1/sqrt(D) scaling on the attention logits
  std::size_t hidden_or_default() const { return hidden == 0 ? 2 * d_model : hidden; }
};

// Registers denoiser parameters under "den.*": per-direction query/key/value
// projections, one shared timestep MLP, one shared logit decoder.
void init_denoiser_params(ParamSet& params, const DenoiserConfig& cfg, SeededRng& rng);

// Sinusoidal encoding of noise level k (out of K) pushed through the
// two-layer timestep MLP. Deterministic in (k, K, params).
Tensor timestep_embed(std::size_t k, std::size_t K, const ParamLookup& p,
                      const DenoiserConfig& cfg);

// Q = W_q(query + Proj(k)); K_j = W_k(cand_j + Proj(k)); V_j likewise;
// E = softmax(Q K^T + x_k) V; logit_j = decoder(concat(cand_j, E)).
// Returns the length-N logit vector x-hat-0. Equivariant under consistent
// permutation of (candidates, x_k); invariant to constant shifts of x_k.
Tensor predict_x0(const Tensor& query_repr, const Tensor& cand_reprs, const Tensor& x_k,
                  std::size_t k, std::size_t K, const ParamLookup& p, const DenoiserConfig& cfg,
                  Direction direction);

// Raw sinusoidal level encoding (pre-MLP part of timestep_embed).
Tensor sinusoidal_timestep(std::size_t k, std::size_t d);

}  // namespace diffret
