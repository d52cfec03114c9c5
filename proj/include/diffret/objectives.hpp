#pragma once

#include <cstddef>
#include <span>

#include "diffret/encoders.hpp"
#include "diffret/optim.hpp"
#include "diffret/tensor.hpp"

namespace diffret {

// Ground-truth pair for one query over a gallery of size N: a signal-space
// target (+scale at the positive index, -scale elsewhere) and a label-smoothed
// probability target.
struct JointTarget {
  Tensor x0;
  Tensor p0;
  std::size_t positive_index = 0;
};

JointTarget joint_target(std::size_t positive_index, std::size_t n, double signal_scale,
                         double smoothing);

enum class GenLossKind {
  kKl,         // KL(p0 || softmax(x0_hat)) — default
  kMse,        // mean squared difference of x0_hat vs the x0 signal
  kKlLiteral,  // KL(softmax(x0_hat) || p0); requires smoothing > 0
};

GenLossKind gen_loss_kind_from_string(const std::string& s);
const char* to_string(GenLossKind kind);

Tensor generation_loss(const Tensor& x0_hat, const JointTarget& target,
                       GenLossKind kind = GenLossKind::kKl);

// Weighted max-alignment over token cosines: s = 1/2 (sum_i g_t^i max_j a_ij
// + sum_j g_v^j max_i a_ij), with softmax weights from the encoder heads.
// uniform_weights bypasses the heads and weights live tokens equally.
Tensor token_similarity(const EncodedText& text, const EncodedVideo& video, const ParamLookup& p,
                        bool uniform_weights = false);

struct SimilarityMatrix {
  Tensor s;  // B x B, diagonal holds positive pairs
  double tau_hat = 0.01;
};

SimilarityMatrix build_similarity_matrix(std::span<const EncodedText> texts,
                                         std::span<const EncodedVideo> videos,
                                         const ParamLookup& p, double tau_hat,
                                         bool uniform_weights = false);

// Symmetric InfoNCE over S / tau_hat: mean of row-wise and column-wise
// diagonal negative log-likelihoods.
Tensor contrastive_loss(const SimilarityMatrix& sim);

// softmax over query-candidate dot products at temperature tau.
Tensor baseline_posterior(const Tensor& query, const Tensor& gallery, double tau);

}  // namespace diffret
