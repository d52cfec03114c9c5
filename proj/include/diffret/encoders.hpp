#pragma once

#include <cstddef>
#include <vector>

#include "diffret/optim.hpp"
#include "diffret/rng.hpp"
#include "diffret/tensor.hpp"

namespace diffret {

struct EncoderConfig {
  std::size_t d_in = 0;     // raw token feature width
  std::size_t d_model = 0;  // shared embedding width D
  std::size_t aggregator_depth = 1;
  bool positional = false;  // sinusoidal frame positions (corpora are exchangeable by default)
  double tau_prime = 1.0;   // text-frame attention temperature
  double tau_hat = 0.01;    // contrastive temperature
};

// pooled: D. words: N_t x D, one row per token; masked rows carry no weight
// in pooling or attention. mask holds 1.0 for live tokens, 0.0 for padding.
struct EncodedText {
  Tensor pooled;
  Tensor words;
  std::vector<double> mask;
};

// frames: N_v x D after the self-attention aggregator; rows double as the
// frame-level features used by token similarity.
struct EncodedVideo {
  Tensor frames;
  std::vector<double> mask;
};

// Registers all encoder parameters under "enc.*". Aggregator output and
// feed-forward second-layer weights start at zero, so each block is the
// identity map at initialization; weighting heads start at zero, giving
// uniform token weights.
void init_encoder_params(ParamSet& params, const EncoderConfig& cfg, SeededRng& rng);

// w_i = token_i * text_proj; pooled = mask-aware mean of live rows.
EncodedText encode_text(const Tensor& tokens, const ParamLookup& p, const EncoderConfig& cfg,
                        const std::vector<double>* mask = nullptr);

// f_j = frame_j * video_proj, then aggregator_depth residual self-attention
// blocks (scaled dot-product over live frames, feed-forward, both residual).
EncodedVideo encode_video(const Tensor& frames, const ParamLookup& p, const EncoderConfig& cfg,
                          const std::vector<double>* mask = nullptr);

// C_v = softmax(C_t F^T / tau_prime) F — a convex combination of frame rows.
Tensor text_frame_attention(const Tensor& c_t, const Tensor& frames, double tau_prime,
                            const std::vector<double>* mask = nullptr);

// Standard sinusoidal position table, n x d.
Tensor sinusoidal_positions(std::size_t n, std::size_t d);

// Mean of the rows whose mask entry is 1.
Tensor masked_mean(const Tensor& rows, const std::vector<double>& mask);

}  // namespace diffret
