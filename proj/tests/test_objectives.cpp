#include <cmath>
#include <vector>

#include "diffret/error.hpp"
#include "diffret/objectives.hpp"
#include "diffret/optim.hpp"
#include "diffret/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace diffret;

namespace {

EncodedText make_text(Tensor words, std::vector<double> mask) {
  return EncodedText{Tensor({1}, {0.0}), std::move(words), std::move(mask)};
}

EncodedVideo make_video(Tensor frames, std::vector<double> mask) {
  return EncodedVideo{std::move(frames), std::move(mask)};
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / (std::sqrt(na) * std::sqrt(nb));
}

ParamSet head_params(std::size_t d) {
  ParamSet params;
  SeededRng rng(99);
  EncoderConfig cfg;
  cfg.d_in = d;
  cfg.d_model = d;
  init_encoder_params(params, cfg, rng);
  return params;
}

}  // namespace

TEST_CASE("joint_target: signal and smoothed label examples") {
  const JointTarget plain = joint_target(0, 2, 1.0, 0.0);
  CHECK(plain.x0.values() == std::vector<double>{1.0, -1.0});
  CHECK(plain.p0.values() == std::vector<double>{1.0, 0.0});

  const JointTarget smoothed = joint_target(3, 10, 1.0, 0.1);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(smoothed.p0.at(i) == doctest::Approx(i == 3 ? 0.91 : 0.01).epsilon(1e-15));
    CHECK(smoothed.x0.at(i) == (i == 3 ? 1.0 : -1.0));
  }
  double mass = 0.0;
  for (double v : smoothed.p0.values()) mass += v;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-15));

  const JointTarget scaled = joint_target(1, 3, 2.0, 0.1);
  CHECK(scaled.x0.values() == std::vector<double>{-2.0, 2.0, -2.0});
  CHECK(scaled.p0.at(1) == doctest::Approx(0.9 + 0.1 / 3.0));  // scale leaves p0 alone

  CHECK_THROWS_AS(joint_target(3, 3, 1.0, 0.0), ContractError);
  CHECK_THROWS_AS(joint_target(0, 0, 1.0, 0.0), ContractError);
  CHECK_THROWS_AS(joint_target(0, 3, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(joint_target(0, 3, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(joint_target(0, 3, 1.0, -0.1), ConfigError);
}

TEST_CASE("generation_loss: KL is zero at the target and log N at uniform") {
  // x-hat whose softmax equals p0 exactly (log p0 + arbitrary constant).
  const JointTarget t = joint_target(1, 4, 1.0, 0.2);
  std::vector<double> logits(4);
  for (std::size_t i = 0; i < 4; ++i) logits[i] = std::log(t.p0.at(i)) + 3.7;
  const Tensor zero_loss = generation_loss(Tensor({4}, logits), t, GenLossKind::kKl);
  CHECK(std::abs(zero_loss.at(0)) < 1e-12);

  const JointTarget hard = joint_target(2, 8, 1.0, 0.0);
  const Tensor uniform = Tensor({8}, std::vector<double>(8, 0.25));
  const Tensor log_n = generation_loss(uniform, hard, GenLossKind::kKl);
  CHECK(log_n.at(0) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("generation_loss: KL matches a direct 5-way sum and stays nonnegative") {
  SeededRng rng(3);
  const JointTarget t = joint_target(2, 5, 1.5, 0.3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x_hat = gaussian(rng, {5});
    const std::vector<double> q = oracles::softmax_ref(x_hat.values());
    double ref = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const double p = t.p0.at(i);
      if (p > 0.0) ref += p * (std::log(p) - std::log(q[i]));
    }
    const Tensor loss = generation_loss(x_hat, t, GenLossKind::kKl);
    CHECK(loss.at(0) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(loss.at(0) >= -1e-12);
  }
}

TEST_CASE("generation_loss: literal KL needs smoothing and matches its formula") {
  const JointTarget unsmoothed = joint_target(0, 3, 1.0, 0.0);
  const Tensor x_hat({3}, {0.3, -0.1, 0.4});
  CHECK_THROWS_AS(generation_loss(x_hat, unsmoothed, GenLossKind::kKlLiteral), ConfigError);

  const JointTarget t = joint_target(0, 3, 1.0, 0.2);
  const std::vector<double> q = oracles::softmax_ref(x_hat.values());
  double ref = 0.0;
  for (std::size_t i = 0; i < 3; ++i) ref += q[i] * (std::log(q[i]) - std::log(t.p0.at(i)));
  const Tensor loss = generation_loss(x_hat, t, GenLossKind::kKlLiteral);
  CHECK(loss.at(0) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("generation_loss: MSE compares against the signal target") {
  const JointTarget t = joint_target(1, 4, 2.0, 0.1);
  CHECK(generation_loss(t.x0, t, GenLossKind::kMse).at(0) == 0.0);

  const Tensor x_hat({4}, {0.0, 1.0, -1.0, 2.0});
  double ref = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = x_hat.at(i) - t.x0.at(i);
    ref += d * d;
  }
  ref /= 4.0;
  CHECK(generation_loss(x_hat, t, GenLossKind::kMse).at(0) == doctest::Approx(ref).epsilon(1e-12));

  CHECK_THROWS_AS(generation_loss(Tensor({3}, {0.0, 0.0, 0.0}), t, GenLossKind::kMse),
                  ContractError);
}

TEST_CASE("gen_loss_kind string round trip") {
  CHECK(gen_loss_kind_from_string("kl") == GenLossKind::kKl);
  CHECK(gen_loss_kind_from_string("mse") == GenLossKind::kMse);
  CHECK(gen_loss_kind_from_string("kl-literal") == GenLossKind::kKlLiteral);
  CHECK(std::string(to_string(GenLossKind::kKl)) == "kl");
  CHECK(std::string(to_string(GenLossKind::kMse)) == "mse");
  CHECK(std::string(to_string(GenLossKind::kKlLiteral)) == "kl-literal");
  CHECK_THROWS_AS(gen_loss_kind_from_string("huber"), ConfigError);
}

TEST_CASE("generation_loss: KL gradient w.r.t. logits passes finite differences") {
  const JointTarget t = joint_target(1, 4, 1.0, 0.1);
  ParamSet params;
  SeededRng rng(7);
  params.add("logits", gaussian(rng, {4}));
  for (GenLossKind kind : {GenLossKind::kKl, GenLossKind::kKlLiteral, GenLossKind::kMse}) {
    const oracles::FdReport rep = oracles::fd_check(params, [&](Tape&, const ParamLookup& p) {
      return generation_loss(p("logits"), t, kind);
    });
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("token_similarity: one word vs one frame is their cosine") {
  ParamSet params = head_params(3);
  const std::vector<double> a{0.4, -1.2, 0.7}, b{1.1, 0.3, -0.2};
  const EncodedText text = make_text(Tensor({1, 3}, a), {1.0});
  const EncodedVideo video = make_video(Tensor({1, 3}, b), {1.0});
  const Tensor s = token_similarity(text, video, params.lookup(), true);
  CHECK(s.at(0) == doctest::Approx(cosine(a, b)).epsilon(1e-12));
  // Zero-initialized weighting heads reduce to uniform weights too.
  const Tensor s_heads = token_similarity(text, video, params.lookup(), false);
  CHECK(s_heads.at(0) == doctest::Approx(s.at(0)).epsilon(1e-12));
}

TEST_CASE("token_similarity: identical token sets score exactly 1") {
  ParamSet params = head_params(4);
  SeededRng rng(11);
  const Tensor toks = gaussian(rng, {3, 4});
  const EncodedText text = make_text(toks, {1.0, 1.0, 1.0});
  const EncodedVideo video = make_video(toks, {1.0, 1.0, 1.0});
  const Tensor s = token_similarity(text, video, params.lookup(), true);
  CHECK(s.at(0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("token_similarity: exhaustive 3x2 oracle with uniform weights") {
  ParamSet params = head_params(3);
  SeededRng rng(13);
  const Tensor words = gaussian(rng, {3, 3});
  const Tensor frames = gaussian(rng, {2, 3});
  const EncodedText text = make_text(words, {1.0, 1.0, 1.0});
  const EncodedVideo video = make_video(frames, {1.0, 1.0});

  double cos[3][2];
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      std::vector<double> wi(3), fj(3);
      for (std::size_t c = 0; c < 3; ++c) {
        wi[c] = words.at(i, c);
        fj[c] = frames.at(j, c);
      }
      cos[i][j] = cosine(wi, fj);
    }
  }
  double text_side = 0.0;
  for (std::size_t i = 0; i < 3; ++i) text_side += std::max(cos[i][0], cos[i][1]) / 3.0;
  double video_side = 0.0;
  for (std::size_t j = 0; j < 2; ++j) {
    video_side += std::max({cos[0][j], cos[1][j], cos[2][j]}) / 2.0;
  }
  const double ref = 0.5 * (text_side + video_side);
  const Tensor s = token_similarity(text, video, params.lookup(), true);
  CHECK(s.at(0) == doctest::Approx(ref).epsilon(1e-9));
}

TEST_CASE("token_similarity: masked tokens cannot win or carry weight") {
  ParamSet params = head_params(2);
  // Frame 1 is identical to the word (cosine 1) but masked out.
  const EncodedText text = make_text(Tensor({1, 2}, {1.0, 0.0}), {1.0});
  const EncodedVideo video =
      make_video(Tensor({2, 2}, {0.0, 1.0, 1.0, 0.0}), {1.0, 0.0});
  const Tensor s = token_similarity(text, video, params.lookup(), true);
  // Only the orthogonal frame 0 is live: both sides see cosine 0.
  CHECK(s.at(0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("token_similarity: invariant to positive per-token rescaling") {
  ParamSet params = head_params(3);
  SeededRng rng(17);
  const Tensor words = gaussian(rng, {2, 3});
  const Tensor frames = gaussian(rng, {2, 3});
  std::vector<double> scaled = words.values();
  for (std::size_t c = 0; c < 3; ++c) scaled[c] *= 4.0;          // row 0 x4
  for (std::size_t c = 0; c < 3; ++c) scaled[3 + c] *= 0.25;     // row 1 x0.25
  const Tensor a = token_similarity(make_text(words, {1.0, 1.0}),
                                    make_video(frames, {1.0, 1.0}), params.lookup(), true);
  const Tensor b = token_similarity(make_text(Tensor({2, 3}, scaled), {1.0, 1.0}),
                                    make_video(frames, {1.0, 1.0}), params.lookup(), true);
  CHECK(a.at(0) == doctest::Approx(b.at(0)).epsilon(1e-9));
}

TEST_CASE("token_similarity: zero-norm token is clamped, not NaN") {
  ParamSet params = head_params(2);
  const EncodedText text = make_text(Tensor({2, 2}, {0.0, 0.0, 1.0, 0.0}), {1.0, 1.0});
  const EncodedVideo video = make_video(Tensor({1, 2}, {1.0, 0.0}), {1.0});
  const Tensor s = token_similarity(text, video, params.lookup(), true);
  CHECK(std::isfinite(s.at(0)));
  // Zero row contributes cosine 0; live word contributes 1; video side max is 1.
  CHECK(s.at(0) == doctest::Approx(0.5 * (0.5 * (0.0 + 1.0) + 1.0)).epsilon(1e-9));
}

TEST_CASE("token_similarity: feature width mismatch is a dimension error") {
  ParamSet params = head_params(3);
  const EncodedText text = make_text(Tensor({1, 3}, {1.0, 0.0, 0.0}), {1.0});
  const EncodedVideo video = make_video(Tensor({1, 2}, {1.0, 0.0}), {1.0});
  CHECK_THROWS_AS(token_similarity(text, video, params.lookup(), true), DimensionError);
}

TEST_CASE("build_similarity_matrix: diagonal holds the paired scores") {
  ParamSet params = head_params(3);
  SeededRng rng(19);
  std::vector<EncodedText> texts;
  std::vector<EncodedVideo> videos;
  for (int i = 0; i < 3; ++i) {
    texts.push_back(make_text(gaussian(rng, {2, 3}), {1.0, 1.0}));
    videos.push_back(make_video(gaussian(rng, {2, 3}), {1.0, 1.0}));
  }
  const SimilarityMatrix sim =
      build_similarity_matrix(texts, videos, params.lookup(), 0.01, true);
  CHECK(sim.s.rows() == 3);
  CHECK(sim.s.cols() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const Tensor direct = token_similarity(texts[i], videos[j], params.lookup(), true);
      CHECK(sim.s.at(i, j) == doctest::Approx(direct.at(0)).epsilon(1e-12));
    }
  }
  std::vector<EncodedVideo> two(videos.begin(), videos.begin() + 2);
  CHECK_THROWS_AS(build_similarity_matrix(texts, two, params.lookup(), 0.01, true),
                  ContractError);
}

TEST_CASE("contrastive_loss: closed-form cases") {
  // A 1x1 batch has nothing to contrast against.
  const SimilarityMatrix lone{Tensor({1, 1}, {0.37}), 0.01};
  CHECK(std::abs(contrastive_loss(lone).at(0)) < 1e-12);

  // Constant similarity gives uniform softmax in both directions: log B.
  const SimilarityMatrix flat{Tensor({3, 3}, std::vector<double>(9, 0.42)), 0.01};
  CHECK(contrastive_loss(flat).at(0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("contrastive_loss: direct 4x4 oracle and shift invariance") {
  SeededRng rng(23);
  const Tensor s = gaussian(rng, {4, 4});
  const double tau_hat = 0.01;
  double ref = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> row(4), col(4);
    for (std::size_t j = 0; j < 4; ++j) {
      row[j] = s.at(i, j) / tau_hat;
      col[j] = s.at(j, i) / tau_hat;
    }
    ref -= std::log(oracles::softmax_ref(row)[i]);
    ref -= std::log(oracles::softmax_ref(col)[i]);
  }
  ref /= 2.0 * 4.0;
  CHECK(contrastive_loss({s, tau_hat}).at(0) == doctest::Approx(ref).epsilon(1e-12));

  std::vector<double> shifted = s.values();
  for (double& v : shifted) v += 0.09;
  CHECK(contrastive_loss({Tensor({4, 4}, shifted), tau_hat}).at(0) ==
        doctest::Approx(ref).epsilon(1e-9));

  CHECK_THROWS_AS(contrastive_loss({s, 0.0}), ConfigError);
  CHECK_THROWS_AS(contrastive_loss({Tensor({2, 3}, std::vector<double>(6, 0.0)), 0.01}),
                  ContractError);
}

TEST_CASE("baseline_posterior: closed-form cases and validation") {
  const Tensor q({2}, {1.0, 0.0});
  CHECK(baseline_posterior(q, Tensor({1, 2}, {0.3, 0.4}), 1.0).values() ==
        std::vector<double>{1.0});

  // All-orthogonal gallery: every logit is zero, so the posterior is uniform.
  const Tensor ortho({3, 2}, {0.0, 1.0, 0.0, 2.0, 0.0, -1.0});
  const Tensor u = baseline_posterior(q, ortho, 0.05);
  for (std::size_t i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  SeededRng rng(29);
  const Tensor query = gaussian(rng, {3});
  const Tensor gallery = gaussian(rng, {4, 3});
  const double tau = 0.07;
  std::vector<double> logits(4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) logits[i] += query.at(c) * gallery.at(i, c);
    logits[i] /= tau;
  }
  const std::vector<double> ref = oracles::softmax_ref(logits);
  const Tensor post = baseline_posterior(query, gallery, tau);
  for (std::size_t i = 0; i < 4; ++i) CHECK(post.at(i) == doctest::Approx(ref[i]).epsilon(1e-12));

  CHECK_THROWS_AS(baseline_posterior(query, gallery, 0.0), ConfigError);
  CHECK_THROWS_AS(baseline_posterior(Tensor({2}, {1.0, 0.0}), gallery, 1.0), DimensionError);
}

TEST_CASE("contrastive gradients through token similarity pass finite differences") {
  EncoderConfig cfg;
  cfg.d_in = 3;
  cfg.d_model = 3;
  ParamSet params;
  SeededRng rng(31);
  init_encoder_params(params, cfg, rng);
  // Give the weighting heads nonzero values so their gradients are exercised.
  for (auto& [name, tensor] : params.items()) {
    if (name.rfind("enc.head_", 0) == 0) {
      for (double& v : tensor.mutable_values()) v = rng.normal() * 0.3;
    }
  }
  SeededRng data_rng(37);
  std::vector<Tensor> word_mats, frame_mats;
  for (int i = 0; i < 3; ++i) {
    word_mats.push_back(oracles::random_tensor(data_rng, {2, 3}, 1.0));
    frame_mats.push_back(oracles::random_tensor(data_rng, {2, 3}, 1.0));
  }
  const oracles::FdReport rep =
      oracles::fd_check(params, [&](Tape&, const ParamLookup& p) {
        std::vector<EncodedText> texts;
        std::vector<EncodedVideo> videos;
        for (int i = 0; i < 3; ++i) {
          texts.push_back(make_text(word_mats[i], {1.0, 1.0}));
          videos.push_back(make_video(frame_mats[i], {1.0, 1.0}));
        }
        return contrastive_loss(build_similarity_matrix(texts, videos, p, 0.05, false));
      });
  CHECK(rep.max_rel_err < 1e-4);
}
