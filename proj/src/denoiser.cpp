#include "diffret/denoiser.hpp"

#include <cmath>
#include <string>

#include "diffret/error.hpp"

namespace diffret {

const char* to_string(Direction d) {
  return d == Direction::kTextToVideo ? "t2v" : "v2t";
}

namespace {

Tensor gaussian_scaled(SeededRng& rng, const Shape& shape, double stddev) {
  Tensor t = gaussian(rng, shape);
  for (double& x : t.mutable_values()) x *= stddev;
  return t;
}

std::string dir_name(Direction d, const char* leaf) {
  return std::string("den.") + to_string(d) + "." + leaf;
}

}  // namespace

void init_denoiser_params(ParamSet& params, const DenoiserConfig& cfg, SeededRng& rng) {
  if (cfg.d_model == 0) throw ConfigError("denoiser d_model must be positive");
  const std::size_t d = cfg.d_model;
  const std::size_t h = cfg.hidden_or_default();
  const double d_std = 1.0 / std::sqrt(static_cast<double>(d));
  // Identity init for the attention projections: QK^T then starts as the raw
  // query-candidate dot product and the value path passes candidate content
  // through, so attention expresses compatibility from the first step instead
  // of a random bilinear form the decoder would have to untangle. The decoder
  // readout is the only path carrying query information to the per-candidate
  // scores, which makes this starting point load-bearing at desk scale.
  Tensor eye = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) eye.mutable_values()[i * d + i] = 1.0;
  for (Direction dir : {Direction::kTextToVideo, Direction::kVideoToText}) {
    params.add(dir_name(dir, "wq"), eye);
    params.add(dir_name(dir, "wk"), eye);
    params.add(dir_name(dir, "wv"), eye);
  }
  params.add("den.time.w1", gaussian_scaled(rng, {d, d}, d_std));
  params.add("den.time.b1", Tensor::zeros({d}));
  params.add("den.time.w2", gaussian_scaled(rng, {d, d}, d_std));
  params.add("den.time.b2", Tensor::zeros({d}));
  params.add("den.dec.w1", gaussian_scaled(rng, {2 * d, h}, 1.0 / std::sqrt(2.0 * d)));
  params.add("den.dec.b1", Tensor::zeros({h}));
  params.add("den.dec.w2", gaussian_scaled(rng, {h, 1}, 1.0 / std::sqrt(static_cast<double>(h))));
  params.add("den.dec.b2", Tensor::zeros({1}));
}

Tensor sinusoidal_timestep(std::size_t k, std::size_t d) {
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double rate =
        std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(d));
    const double angle = static_cast<double>(k) * rate;
    out[j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return Tensor({d}, std::move(out));
}

Tensor timestep_embed(std::size_t k, std::size_t K, const ParamLookup& p,
                      const DenoiserConfig& cfg) {
  if (k > K) throw ContractError("timestep_embed: k exceeds schedule length");
  Tensor s = sinusoidal_timestep(k, cfg.d_model);
  Tensor h = relu(add(matmul(s, p("den.time.w1")), p("den.time.b1")));
  return add(matmul(h, p("den.time.w2")), p("den.time.b2"));
}

Tensor predict_x0(const Tensor& query_repr, const Tensor& cand_reprs, const Tensor& x_k,
                  std::size_t k, std::size_t K, const ParamLookup& p, const DenoiserConfig& cfg,
                  Direction direction) {
  if (cand_reprs.ndim() != 2 || cand_reprs.rows() == 0) {
    throw InputError("predict_x0: empty candidate set");
  }
  const std::size_t n = cand_reprs.rows(), d = cfg.d_model;
  if (query_repr.ndim() != 1 || query_repr.dim(0) != d || cand_reprs.cols() != d) {
    throw DimensionError("predict_x0: representation width != d_model");
  }
  if (x_k.ndim() != 1 || x_k.dim(0) != n) {
    throw DimensionError("predict_x0: x_k length != candidate count");
  }
  if (k < 1) throw ContractError("predict_x0: k must be >= 1");

  const Tensor* wq;
  const Tensor* wk;
  const Tensor* wv;
  try {
    wq = &p(dir_name(direction, "wq"));
    wk = &p(dir_name(direction, "wk"));
    wv = &p(dir_name(direction, "wv"));
  } catch (const ContractError&) {
    throw ConfigError(std::string("predict_x0: missing ") + to_string(direction) +
                      " direction branch");
  }
  const Tensor pe = timestep_embed(k, K, p, cfg);
  const Tensor q = matmul(add(query_repr, pe), *wq);
  const Tensor cand_pe = add_rowwise(cand_reprs, pe);
  const Tensor keys = matmul(cand_pe, *wk);
  const Tensor vals = matmul(cand_pe, *wv);

  Tensor logits = matmul(q, transpose(keys));
  if (cfg.scale_qk) logits = scale(logits, 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor attn = softmax(add(logits, x_k), -1);
  const Tensor e = matmul(attn, vals);

  const Tensor dec_in = concat_cols(cand_reprs, tile_rows(e, n));
  const Tensor h = relu(add_rowwise(matmul(dec_in, p("den.dec.w1")), p("den.dec.b1")));
  const Tensor out = add_rowwise(matmul(h, p("den.dec.w2")), p("den.dec.b2"));
  return reshape(out, {n});
}

}  // namespace diffret
