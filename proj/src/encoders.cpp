#include "diffret/encoders.hpp"

#include <cmath>
#include <string>

#include "diffret/error.hpp"

namespace diffret {

namespace {

constexpr double kMaskBias = -1e30;

Tensor gaussian_scaled(SeededRng& rng, const Shape& shape, double stddev) {
  Tensor t = gaussian(rng, shape);
  for (double& x : t.mutable_values()) x *= stddev;
  return t;
}

// Semi-orthogonal init (Gram-Schmidt on a Gaussian draw) for the input
// projections: a square Gaussian matrix distorts pairwise dot products by up
// to the Marchenko-Pastur eigenvalue spread, which buries the fine-grained
// similarity structure retrieval depends on. An orthogonal map preserves it
// exactly, playing the role a pretrained backbone plays at full scale.
Tensor orthogonal_init(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = gaussian(rng, {rows, cols});
  std::vector<double>& m = t.mutable_values();
  // Orthonormalize along the shorter side so the result is a full isometry
  // (rows <= cols) or a partial one (rows > cols: orthonormal columns).
  const bool by_rows = rows <= cols;
  const std::size_t vecs = by_rows ? rows : cols;
  const std::size_t len = by_rows ? cols : rows;
  auto at = [&](std::size_t v, std::size_t i) -> double& {
    return by_rows ? m[v * cols + i] : m[i * cols + v];
  };
  for (std::size_t v = 0; v < vecs; ++v) {
    for (std::size_t prev = 0; prev < v; ++prev) {
      double d = 0.0;
      for (std::size_t i = 0; i < len; ++i) d += at(v, i) * at(prev, i);
      for (std::size_t i = 0; i < len; ++i) at(v, i) -= d * at(prev, i);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < len; ++i) norm += at(v, i) * at(v, i);
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw NumericError("orthogonal_init: degenerate draw");
    for (std::size_t i = 0; i < len; ++i) at(v, i) /= norm;
  }
  return t;
}

std::vector<double> full_mask(std::size_t n) { return std::vector<double>(n, 1.0); }

void check_mask(const std::vector<double>& mask, std::size_t n, const char* op) {
  if (mask.size() != n) throw DimensionError(std::string(op) + ": mask length mismatch");
  bool any = false;
  for (double m : mask) {
    if (m != 0.0 && m != 1.0) throw InputError(std::string(op) + ": mask entries must be 0 or 1");
    any = any || m == 1.0;
  }
  if (!any) throw InputError(std::string(op) + ": all tokens masked out");
}

// Additive attention bias: 0 for live keys, a large negative constant for
// padded ones, broadcast over query rows.
Tensor key_mask_bias(const std::vector<double>& mask, std::size_t query_rows) {
  std::vector<double> bias(query_rows * mask.size());
  for (std::size_t i = 0; i < query_rows; ++i)
    for (std::size_t j = 0; j < mask.size(); ++j)
      bias[i * mask.size() + j] = mask[j] == 1.0 ? 0.0 : kMaskBias;
  return Tensor({query_rows, mask.size()}, std::move(bias));
}

std::string agg_name(std::size_t block, const char* leaf) {
  return "enc.agg" + std::to_string(block) + "." + leaf;
}

}  // namespace

Tensor masked_mean(const Tensor& rows, const std::vector<double>& mask) {
  if (rows.ndim() != 2) throw DimensionError("masked_mean: expected 2-D rows");
  check_mask(mask, rows.rows(), "masked_mean");
  double count = 0.0;
  for (double m : mask) count += m;
  Tensor weights({mask.size()}, std::vector<double>(mask.begin(), mask.end()));
  return scale(matmul(weights, rows), 1.0 / count);
}

void init_encoder_params(ParamSet& params, const EncoderConfig& cfg, SeededRng& rng) {
  if (cfg.d_in == 0 || cfg.d_model == 0) throw ConfigError("encoder dims must be positive");
  if (!(cfg.tau_prime > 0.0)) throw ConfigError("tau_prime must be positive");
  if (!(cfg.tau_hat > 0.0)) throw ConfigError("tau_hat must be positive");
  const std::size_t d = cfg.d_model;
  const double d_std = 1.0 / std::sqrt(static_cast<double>(d));
  params.add("enc.text_proj", orthogonal_init(rng, cfg.d_in, d));
  params.add("enc.video_proj", orthogonal_init(rng, cfg.d_in, d));
  for (std::size_t l = 0; l < cfg.aggregator_depth; ++l) {
    params.add(agg_name(l, "wq"), gaussian_scaled(rng, {d, d}, d_std));
    params.add(agg_name(l, "wk"), gaussian_scaled(rng, {d, d}, d_std));
    params.add(agg_name(l, "wv"), gaussian_scaled(rng, {d, d}, d_std));
    params.add(agg_name(l, "wo"), Tensor::zeros({d, d}));
    params.add(agg_name(l, "ff1_w"), gaussian_scaled(rng, {d, d}, d_std));
    params.add(agg_name(l, "ff1_b"), Tensor::zeros({d}));
    params.add(agg_name(l, "ff2_w"), Tensor::zeros({d, d}));
    params.add(agg_name(l, "ff2_b"), Tensor::zeros({d}));
  }
  params.add("enc.head_t.w", Tensor::zeros({d}));
  params.add("enc.head_t.b", Tensor::zeros({1}));
  params.add("enc.head_v.w", Tensor::zeros({d}));
  params.add("enc.head_v.b", Tensor::zeros({1}));
}

EncodedText encode_text(const Tensor& tokens, const ParamLookup& p, const EncoderConfig& cfg,
                        const std::vector<double>* mask) {
  if (tokens.ndim() != 2 || tokens.rows() == 0) throw InputError("encode_text: empty token set");
  if (tokens.cols() != cfg.d_in) throw DimensionError("encode_text: token width != d_in");
  std::vector<double> m = mask ? *mask : full_mask(tokens.rows());
  check_mask(m, tokens.rows(), "encode_text");
  Tensor words = matmul(tokens, p("enc.text_proj"));
  Tensor pooled = masked_mean(words, m);
  return EncodedText{std::move(pooled), std::move(words), std::move(m)};
}

EncodedVideo encode_video(const Tensor& frames, const ParamLookup& p, const EncoderConfig& cfg,
                          const std::vector<double>* mask) {
  if (frames.ndim() != 2 || frames.rows() == 0) throw InputError("encode_video: empty frame set");
  if (frames.cols() != cfg.d_in) throw DimensionError("encode_video: frame width != d_in");
  std::vector<double> m = mask ? *mask : full_mask(frames.rows());
  check_mask(m, frames.rows(), "encode_video");
  const std::size_t n = frames.rows(), d = cfg.d_model;
  Tensor x = matmul(frames, p("enc.video_proj"));
  if (cfg.positional) x = add(x, sinusoidal_positions(n, d));
  const Tensor bias = key_mask_bias(m, n);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < cfg.aggregator_depth; ++l) {
    Tensor q = matmul(x, p(agg_name(l, "wq")));
    Tensor k = matmul(x, p(agg_name(l, "wk")));
    Tensor v = matmul(x, p(agg_name(l, "wv")));
    Tensor logits = add(scale(matmul(q, transpose(k)), inv_sqrt_d), bias);
    Tensor ctx = matmul(softmax(logits, -1), v);
    Tensor y = add(x, matmul(ctx, p(agg_name(l, "wo"))));
    Tensor h = relu(add_rowwise(matmul(y, p(agg_name(l, "ff1_w"))), p(agg_name(l, "ff1_b"))));
    x = add(y, add_rowwise(matmul(h, p(agg_name(l, "ff2_w"))), p(agg_name(l, "ff2_b"))));
  }
  return EncodedVideo{std::move(x), std::move(m)};
}

Tensor text_frame_attention(const Tensor& c_t, const Tensor& frames, double tau_prime,
                            const std::vector<double>* mask) {
  if (!(tau_prime > 0.0)) throw ConfigError("text_frame_attention: tau_prime must be positive");
  if (c_t.ndim() != 1 || frames.ndim() != 2 || frames.cols() != c_t.dim(0)) {
    throw DimensionError("text_frame_attention: expected D query and N x D frames");
  }
  std::vector<double> m = mask ? *mask : full_mask(frames.rows());
  check_mask(m, frames.rows(), "text_frame_attention");
  Tensor logits = scale(matmul(c_t, transpose(frames)), 1.0 / tau_prime);
  std::vector<double> bias(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) bias[j] = m[j] == 1.0 ? 0.0 : kMaskBias;
  logits = add(logits, Tensor({m.size()}, std::move(bias)));
  return matmul(softmax(logits, -1), frames);
}

Tensor sinusoidal_positions(std::size_t n, std::size_t d) {
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double rate =
          std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(d));
      const double angle = static_cast<double>(i) * rate;
      out[i * d + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({n, d}, std::move(out));
}

}  // namespace diffret
