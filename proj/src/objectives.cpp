#include "diffret/objectives.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "diffret/error.hpp"

namespace diffret {

namespace {

constexpr double kMaskBias = -1e30;
constexpr double kNormFloor = 1e-12;

// Row L2 norms clamped away from zero; warns once per offending call site
// input because a zero-norm token makes cosine undefined.
Tensor safe_row_norms(const Tensor& rows, const char* who) {
  Tensor sq = row_sum(mul(rows, rows));
  for (double v : sq.values()) {
    if (std::sqrt(v) < kNormFloor) {
      log_warning(std::string(who) + ": zero-norm token, clamping norm to 1e-12");
      break;
    }
  }
  return clamp_min(sqrt_elem(sq), kNormFloor);
}

Tensor mask_bias_vector(const std::vector<double>& mask) {
  std::vector<double> bias(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bias[i] = mask[i] == 1.0 ? 0.0 : kMaskBias;
  return Tensor({mask.size()}, std::move(bias));
}

// softmax over live entries of head scores w * rows + b; or the uniform
// distribution over live entries when the heads are bypassed.
Tensor token_weights(const Tensor& rows, const std::vector<double>& mask, const ParamLookup& p,
                     const char* w_name, const char* b_name, bool uniform) {
  const std::size_t n = rows.rows();
  if (uniform) {
    double count = 0.0;
    for (double m : mask) count += m;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = mask[i] / count;
    return Tensor({n}, std::move(g));
  }
  Tensor scores = matmul(rows, p(w_name));
  scores = add(scores, reshape(tile_rows(p(b_name), n), {n}));
  return softmax(add(scores, mask_bias_vector(mask)), -1);
}

}  // namespace

JointTarget joint_target(std::size_t positive_index, std::size_t n, double signal_scale,
                         double smoothing) {
  if (n == 0 || positive_index >= n) throw ContractError("joint_target: index out of range");
  if (!(signal_scale > 0.0)) throw ConfigError("joint_target: signal_scale must be positive");
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw ConfigError("joint_target: smoothing must lie in [0,1)");
  }
  std::vector<double> x0(n, -signal_scale);
  x0[positive_index] = signal_scale;
  std::vector<double> p0(n, smoothing / static_cast<double>(n));
  p0[positive_index] += 1.0 - smoothing;
  return JointTarget{Tensor({n}, std::move(x0)), Tensor({n}, std::move(p0)), positive_index};
}

GenLossKind gen_loss_kind_from_string(const std::string& s) {
  if (s == "kl") return GenLossKind::kKl;
  if (s == "mse") return GenLossKind::kMse;
  if (s == "kl-literal") return GenLossKind::kKlLiteral;
  throw ConfigError("unknown generation loss kind: " + s);
}

const char* to_string(GenLossKind kind) {
  switch (kind) {
    case GenLossKind::kKl: return "kl";
    case GenLossKind::kMse: return "mse";
    default: return "kl-literal";
  }
}

Tensor generation_loss(const Tensor& x0_hat, const JointTarget& target, GenLossKind kind) {
  if (x0_hat.ndim() != 1 || !x0_hat.same_shape(target.p0)) {
    throw ContractError("generation_loss: length mismatch");
  }
  switch (kind) {
    case GenLossKind::kMse: {
      Tensor d = sub(x0_hat, target.x0);
      return mean(mul(d, d));
    }
    case GenLossKind::kKl: {
      double entropy_term = 0.0;  // sum p0 log p0, with 0 log 0 = 0
      for (double q : target.p0.values()) {
        if (q > 0.0) entropy_term += q * std::log(q);
      }
      Tensor cross = dot(target.p0, log_softmax(x0_hat, -1));
      return add_const(scale(cross, -1.0), entropy_term);
    }
    case GenLossKind::kKlLiteral: {
      std::vector<double> log_p0(target.p0.size());
      for (std::size_t i = 0; i < log_p0.size(); ++i) {
        const double q = target.p0.at(i);
        if (q <= 0.0) {
          throw ConfigError("generation_loss: literal KL needs smoothing > 0");
        }
        log_p0[i] = std::log(q);
      }
      Tensor prob = softmax(x0_hat, -1);
      // The shape dim must be read before the vector is moved from; argument
      // evaluation order is unspecified.
      const std::size_t n = log_p0.size();
      Tensor diff = sub(log_softmax(x0_hat, -1), Tensor({n}, std::move(log_p0)));
      return sum(mul(prob, diff));
    }
  }
  throw ContractError("generation_loss: unknown kind");
}

Tensor token_similarity(const EncodedText& text, const EncodedVideo& video, const ParamLookup& p,
                        bool uniform_weights) {
  const Tensor& w = text.words;
  const Tensor& f = video.frames;
  if (w.cols() != f.cols()) throw DimensionError("token_similarity: feature width mismatch");
  const std::size_t nt = w.rows(), nv = f.rows();

  Tensor cos = matmul(w, transpose(f));
  cos = div_rowwise(cos, safe_row_norms(w, "token_similarity(text)"));
  cos = transpose(div_rowwise(transpose(cos), safe_row_norms(f, "token_similarity(video)")));

  // Masked tokens may not win a max or carry weight.
  std::vector<double> col_bias(nt * nv), row_bias(nt * nv);
  for (std::size_t i = 0; i < nt; ++i) {
    for (std::size_t j = 0; j < nv; ++j) {
      col_bias[i * nv + j] = video.mask[j] == 1.0 ? 0.0 : kMaskBias;
      row_bias[i * nv + j] = text.mask[i] == 1.0 ? 0.0 : kMaskBias;
    }
  }
  Tensor best_frame = row_max(add(cos, Tensor({nt, nv}, std::move(col_bias))));
  Tensor best_word = col_max(add(cos, Tensor({nt, nv}, std::move(row_bias))));

  Tensor g_t = token_weights(w, text.mask, p, "enc.head_t.w", "enc.head_t.b", uniform_weights);
  Tensor g_v = token_weights(f, video.mask, p, "enc.head_v.w", "enc.head_v.b", uniform_weights);
  return scale(add(dot(g_t, best_frame), dot(g_v, best_word)), 0.5);
}

SimilarityMatrix build_similarity_matrix(std::span<const EncodedText> texts,
                                         std::span<const EncodedVideo> videos,
                                         const ParamLookup& p, double tau_hat,
                                         bool uniform_weights) {
  if (texts.size() != videos.size() || texts.empty()) {
    throw ContractError("build_similarity_matrix: need equal, nonzero pair counts");
  }
  const std::size_t b = texts.size();
  std::vector<Tensor> rows;
  rows.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<Tensor> entries;
    entries.reserve(b);
    for (std::size_t j = 0; j < b; ++j) {
      entries.push_back(token_similarity(texts[i], videos[j], p, uniform_weights));
    }
    rows.push_back(stack_rows(entries));
  }
  Tensor s = stack_rows(rows);
  if (b == 1) s = reshape(s, {1, 1});
  return SimilarityMatrix{std::move(s), tau_hat};
}

Tensor contrastive_loss(const SimilarityMatrix& sim) {
  if (sim.s.ndim() != 2 || sim.s.rows() != sim.s.cols()) {
    throw ContractError("contrastive_loss: matrix must be square");
  }
  if (!(sim.tau_hat > 0.0)) throw ConfigError("contrastive_loss: tau_hat must be positive");
  const double b = static_cast<double>(sim.s.rows());
  Tensor logits = scale(sim.s, 1.0 / sim.tau_hat);
  Tensor row_term = sum(diag(log_softmax(logits, -1)));
  Tensor col_term = sum(diag(log_softmax(logits, 0)));
  return scale(add(row_term, col_term), -0.5 / b);
}

Tensor baseline_posterior(const Tensor& query, const Tensor& gallery, double tau) {
  if (!(tau > 0.0)) throw ConfigError("baseline_posterior: tau must be positive");
  if (gallery.ndim() != 2 || gallery.rows() == 0) {
    throw InputError("baseline_posterior: empty gallery");
  }
  if (query.ndim() != 1 || query.dim(0) != gallery.cols()) {
    throw DimensionError("baseline_posterior: width mismatch");
  }
  return softmax(scale(matmul(query, transpose(gallery)), 1.0 / tau), -1);
}

}  // namespace diffret
