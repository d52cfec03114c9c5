#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "diffret/error.hpp"
#include "diffret/pipeline.hpp"
#include "doctest.h"

using namespace diffret;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("diffret_pipe_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Corpus tiny_corpus(std::size_t classes = 4, std::size_t pairs = 4, std::uint64_t seed = 0) {
  DomainSpec spec;
  spec.classes = classes;
  spec.pairs_per_class = pairs;
  spec.d_in = 8;
  spec.words_per_text = 2;
  spec.frames_per_video = 2;
  return generate(spec, seed);
}

TrainConfig tiny_train(TrainStrategy strategy, std::size_t epochs) {
  TrainConfig cfg;
  cfg.strategy = strategy;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.K = 8;
  cfg.d_model = 8;
  return cfg;
}

// Mirrors the training initialization discipline: parameters are drawn from
// split(1) of the master stream, encoders first.
ParamSet expected_init(const TrainConfig& cfg, std::size_t d_in) {
  EncoderConfig ecfg;
  ecfg.d_in = d_in;
  ecfg.d_model = cfg.d_model;
  ecfg.aggregator_depth = cfg.aggregator_depth;
  ecfg.positional = cfg.positional;
  ecfg.tau_prime = cfg.tau_prime;
  ecfg.tau_hat = cfg.tau_hat;
  DenoiserConfig dcfg;
  dcfg.d_model = cfg.d_model;
  dcfg.hidden = cfg.decoder_hidden;
  dcfg.scale_qk = cfg.scale_qk;
  SeededRng master(cfg.seed);
  SeededRng init_rng = master.split(1);
  ParamSet params;
  init_encoder_params(params, ecfg, init_rng);
  init_denoiser_params(params, dcfg, init_rng);
  return params;
}

bool group_changed(const ParamSet& got, const ParamSet& init, const char* prefix) {
  for (const auto& [name, tensor] : got.items()) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (tensor.values() != init.get(name).values()) return true;
  }
  return false;
}

bool group_unchanged(const ParamSet& got, const ParamSet& init, const char* prefix) {
  for (const auto& [name, tensor] : got.items()) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (tensor.values() != init.get(name).values()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("train: configuration and input validation") {
  const Corpus corpus = tiny_corpus(2, 1);  // 2 pairs
  DomainSpec one;
  one.classes = 2;
  one.pairs_per_class = 1;
  one.d_in = 8;
  one.words_per_text = 2;
  one.frames_per_video = 2;
  Corpus single = generate(one, 0);
  single.items.resize(1);
  TrainConfig cfg = tiny_train(TrainStrategy::kDis, 1);
  cfg.batch_size = 2;
  CHECK_THROWS_AS(train(single, cfg), InputError);

  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(corpus, bad), ConfigError);
  bad = cfg;
  bad.batch_size = 3;  // exceeds corpus size
  CHECK_THROWS_AS(train(corpus, bad), ConfigError);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(corpus, bad), ConfigError);
  bad = cfg;
  bad.K = 0;
  CHECK_THROWS_AS(train(corpus, bad), ConfigError);
  bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(train(corpus, bad), ConfigError);
  bad = cfg;
  bad.lambda_gen = -1.0;
  CHECK_THROWS_AS(train(corpus, bad), ConfigError);
  bad = cfg;
  bad.d_model = 0;
  CHECK_THROWS_AS(train(corpus, bad), ConfigError);
}

TEST_CASE("train: same seed, same corpus => bit-identical curve and parameters") {
  const Corpus corpus = tiny_corpus();
  const TrainConfig cfg = tiny_train(TrainStrategy::kBoth, 2);
  const TrainResult a = train(corpus, cfg);
  const TrainResult b = train(corpus, cfg);
  REQUIRE(a.curve.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(a.curve[e].epoch == e);
    CHECK(a.curve[e].gen == b.curve[e].gen);
    CHECK(a.curve[e].dis == b.curve[e].dis);
    CHECK(a.curve[e].total == b.curve[e].total);
  }
  REQUIRE(a.checkpoint.params.size() == b.checkpoint.params.size());
  for (std::size_t i = 0; i < a.checkpoint.params.size(); ++i) {
    CHECK(a.checkpoint.params.items()[i].first == b.checkpoint.params.items()[i].first);
    CHECK(a.checkpoint.params.items()[i].second.values() ==
          b.checkpoint.params.items()[i].second.values());
  }
  // A different seed moves the loss.
  TrainConfig other = cfg;
  other.seed = 1;
  const TrainResult c = train(corpus, other);
  CHECK(c.curve.back().total != a.curve.back().total);
}

TEST_CASE("train: single-pair batches have zero contrastive loss") {
  const Corpus corpus = tiny_corpus(2, 1);  // 2 pairs
  TrainConfig cfg = tiny_train(TrainStrategy::kDis, 1);
  cfg.batch_size = 1;
  const TrainResult res = train(corpus, cfg);
  REQUIRE(res.curve.size() == 1);
  CHECK(res.curve[0].gen == 0.0);
  CHECK(std::abs(res.curve[0].dis) < 1e-12);
  CHECK(std::abs(res.curve[0].total) < 1e-12);
}

TEST_CASE("train: discrimination loss drops substantially on a separable corpus") {
  const Corpus corpus = tiny_corpus(4, 4, 3);
  TrainConfig cfg = tiny_train(TrainStrategy::kDis, 30);
  const TrainResult res = train(corpus, cfg);
  REQUIRE(res.curve.size() == 30);
  CHECK(res.curve.front().gen == 0.0);  // gen objective disabled
  CHECK(res.curve.back().total < 0.5 * res.curve.front().total);
}

TEST_CASE("train: objective strategies move the expected parameter groups") {
  const Corpus corpus = tiny_corpus();
  const TrainConfig dis_cfg = tiny_train(TrainStrategy::kDis, 1);
  const ParamSet init = expected_init(dis_cfg, corpus.d_in);

  const TrainResult dis = train(corpus, dis_cfg);
  CHECK(group_unchanged(dis.checkpoint.params, init, "den."));  // denoiser untouched
  CHECK(group_changed(dis.checkpoint.params, init, "enc."));

  const TrainResult gen = train(corpus, tiny_train(TrainStrategy::kGen, 1));
  CHECK(group_changed(gen.checkpoint.params, init, "den."));
  CHECK(group_changed(gen.checkpoint.params, init, "enc."));

  const TrainResult both = train(corpus, tiny_train(TrainStrategy::kBoth, 1));
  CHECK(group_changed(both.checkpoint.params, init, "den."));
  CHECK(group_changed(both.checkpoint.params, init, "enc."));
  CHECK(both.curve[0].gen > 0.0);
  CHECK(both.curve[0].dis > 0.0);
}

TEST_CASE("checkpoint: save/load round trip preserves everything bit-exactly") {
  const fs::path dir = temp_dir("ckpt");
  const Corpus corpus = tiny_corpus();
  const TrainResult res = train(corpus, tiny_train(TrainStrategy::kBoth, 2));
  const std::string path = (dir / "model.dfrt").string();
  save_checkpoint(res.checkpoint, path);
  const Checkpoint back = load_checkpoint(path);

  CHECK(back.version == res.checkpoint.version);
  CHECK(back.d_in == res.checkpoint.d_in);
  CHECK(back.schedule.kind == res.checkpoint.schedule.kind);
  CHECK(back.schedule.K == res.checkpoint.schedule.K);
  CHECK(back.schedule.betas == res.checkpoint.schedule.betas);
  CHECK(back.schedule.alpha_bars == res.checkpoint.schedule.alpha_bars);
  CHECK(back.config_json() == res.checkpoint.config_json());
  for (int i = 0; i < 4; ++i) CHECK(back.rng_state[i] == res.checkpoint.rng_state[i]);
  REQUIRE(back.params.size() == res.checkpoint.params.size());
  for (std::size_t i = 0; i < back.params.size(); ++i) {
    CHECK(back.params.items()[i].first == res.checkpoint.params.items()[i].first);
    CHECK(back.params.items()[i].second.values() ==
          res.checkpoint.params.items()[i].second.values());
  }

  // Evaluating the loaded checkpoint reproduces the original reports exactly.
  EvalOptions opts;
  for (Direction dir_ : {Direction::kTextToVideo, Direction::kVideoToText}) {
    const EvalReport a = evaluate(res.checkpoint, corpus, dir_, opts);
    const EvalReport b = evaluate(back, corpus, dir_, opts);
    CHECK(a.ranks == b.ranks);
    CHECK(a.query_ids == b.query_ids);
    CHECK(a.metrics.rsum == b.metrics.rsum);
    CHECK(a.auroc == b.auroc);
    CHECK(a.hist.pos_counts == b.hist.pos_counts);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: structural validation rejects missing or renamed parameters") {
  const fs::path dir = temp_dir("ckpt_bad");
  const Corpus corpus = tiny_corpus();
  TrainResult res = train(corpus, tiny_train(TrainStrategy::kBoth, 1));

  Checkpoint mutilated = res.checkpoint;
  mutilated.params.items().pop_back();
  const std::string missing = (dir / "missing.dfrt").string();
  save_checkpoint(mutilated, missing);
  CHECK_THROWS_AS(load_checkpoint(missing), ConfigError);

  Checkpoint renamed = res.checkpoint;
  renamed.params.items().front().first = "enc.bogus";
  const std::string bogus = (dir / "renamed.dfrt").string();
  save_checkpoint(renamed, bogus);
  CHECK_THROWS_AS(load_checkpoint(bogus), ConfigError);

  const std::string junk = (dir / "junk.dfrt").string();
  {
    std::ofstream out(junk, std::ios::binary);
    out << "not a checkpoint at all, just bytes";
  }
  CHECK_THROWS_AS(load_checkpoint(junk), IoError);
  CHECK_THROWS_AS(load_checkpoint((dir / "absent.dfrt").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("evaluate: report invariants on a small gallery") {
  const Corpus corpus = tiny_corpus(4, 2, 5);  // 8 pairs
  const TrainResult res = train(corpus, tiny_train(TrainStrategy::kBoth, 2));
  EvalOptions opts;
  const EvalReport rep = evaluate(res.checkpoint, corpus, Direction::kTextToVideo, opts);

  REQUIRE(rep.query_ids.size() == corpus.size());
  REQUIRE(rep.ranks.size() == corpus.size());
  CHECK(std::is_sorted(rep.query_ids.begin(), rep.query_ids.end()));
  const RankMetrics recomputed = rank_metrics(rep.ranks);
  CHECK(rep.metrics.r1 == recomputed.r1);
  CHECK(rep.metrics.r5 == recomputed.r5);
  CHECK(rep.metrics.r10 == recomputed.r10);
  CHECK(rep.metrics.mdr == recomputed.mdr);
  CHECK(rep.metrics.mnr == recomputed.mnr);
  CHECK(rep.metrics.r1 <= rep.metrics.r5);
  CHECK(rep.metrics.r5 <= rep.metrics.r10);
  CHECK(rep.auroc >= 0.0);
  CHECK(rep.auroc <= 1.0);
  for (std::size_t r : rep.ranks) {
    CHECK(r >= 1);
    CHECK(r <= corpus.size());
  }
  std::size_t pos_total = 0, neg_total = 0;
  for (std::size_t c : rep.hist.pos_counts) pos_total += c;
  for (std::size_t c : rep.hist.neg_counts) neg_total += c;
  CHECK(pos_total == corpus.size());
  CHECK(neg_total == corpus.size() * (corpus.size() - 1));

  CHECK_THROWS_AS(evaluate(res.checkpoint, Corpus{}, Direction::kTextToVideo, opts), InputError);
  CHECK_THROWS_AS(evaluate(res.checkpoint, tiny_corpus(2, 2, 1), Direction::kTextToVideo,
                           [] { EvalOptions o; o.sampler.eval_steps = 9; return o; }()),
                  ConfigError);  // eval_steps exceeds the trained K = 8
  Corpus wrong = corpus;
  wrong.d_in = 7;
  for (CorpusItem& item : wrong.items) {
    item.text.resize(2 * 7);
    item.video.resize(2 * 7);
  }
  CHECK_THROWS_AS(evaluate(res.checkpoint, wrong, Direction::kTextToVideo, opts), InputError);
}

TEST_CASE("evaluate: metrics are invariant to gallery permutation") {
  const Corpus corpus = tiny_corpus(4, 2, 7);
  const TrainResult res = train(corpus, tiny_train(TrainStrategy::kBoth, 1));
  Corpus rotated = corpus;
  std::rotate(rotated.items.begin(), rotated.items.begin() + 3, rotated.items.end());

  EvalOptions opts;
  for (Direction dir_ : {Direction::kTextToVideo, Direction::kVideoToText}) {
    const EvalReport a = evaluate(res.checkpoint, corpus, dir_, opts);
    const EvalReport b = evaluate(res.checkpoint, rotated, dir_, opts);
    CHECK(a.query_ids == b.query_ids);  // both ascend over the same ids
    CHECK(a.ranks == b.ranks);
    CHECK(a.metrics.rsum == b.metrics.rsum);
    CHECK(a.metrics.mdr == b.metrics.mdr);
    CHECK(a.metrics.mnr == b.metrics.mnr);
    CHECK(a.auroc == doctest::Approx(b.auroc).epsilon(1e-12));
  }
}

TEST_CASE("out_domain_eval: identical corpora give identical reports") {
  const Corpus corpus = tiny_corpus(4, 2, 9);
  const TrainResult res = train(corpus, tiny_train(TrainStrategy::kBoth, 1));
  EvalOptions opts;
  const OutDomainReport rep =
      out_domain_eval(res.checkpoint, corpus, corpus, Direction::kTextToVideo, opts);
  CHECK(rep.in_domain.ranks == rep.out_domain.ranks);
  CHECK(rep.in_domain.auroc == rep.out_domain.auroc);
  CHECK(rep.in_domain.metrics.rsum == rep.out_domain.metrics.rsum);

  Corpus wrong = corpus;
  wrong.d_in = 9;
  for (CorpusItem& item : wrong.items) {
    item.text.resize(2 * 9);
    item.video.resize(2 * 9);
  }
  CHECK_THROWS_AS(out_domain_eval(res.checkpoint, corpus, wrong, Direction::kTextToVideo, opts),
                  InputError);
}

TEST_CASE("diffusion_trace: row layout, normalization, and id validation") {
  const Corpus corpus = tiny_corpus(4, 2, 11);
  const TrainResult res = train(corpus, tiny_train(TrainStrategy::kBoth, 1));
  EvalOptions opts;
  opts.sampler.eval_steps = 4;
  const TraceResult trace =
      diffusion_trace(res.checkpoint, 3, corpus, Direction::kTextToVideo, opts);
  CHECK(trace.query_id == 3);
  REQUIRE(trace.rows.size() == 5);  // noisy start plus one row per step
  REQUIRE(trace.levels.size() == 5);
  CHECK(trace.levels.front() == 8);  // the trained K
  CHECK(trace.levels.back() == 0);
  REQUIRE(trace.gallery_ids.size() == corpus.size());
  CHECK(trace.gallery_ids[trace.gt_index] == 3);
  for (const auto& row : trace.rows) {
    REQUIRE(row.size() == corpus.size());
    double mass = 0.0;
    for (double v : row) mass += v;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(diffusion_trace(res.checkpoint, 999, corpus, Direction::kTextToVideo, opts),
                  InputError);
}

TEST_CASE("untrained checkpoint scores near chance when ranking by joint probability") {
  const Corpus corpus = tiny_corpus(4, 8, 13);  // 32 pairs
  TrainConfig cfg = tiny_train(TrainStrategy::kBoth, 1);
  Checkpoint ckpt;
  ckpt.d_in = corpus.d_in;
  ckpt.train = cfg;
  ckpt.schedule = make_schedule(cfg.schedule, cfg.K, cfg.signal_scale);
  ckpt.params = expected_init(cfg, corpus.d_in);
  EncoderConfig ecfg;
  ecfg.d_in = corpus.d_in;
  ecfg.d_model = cfg.d_model;
  ecfg.aggregator_depth = cfg.aggregator_depth;
  ecfg.tau_prime = cfg.tau_prime;
  ecfg.tau_hat = cfg.tau_hat;
  ckpt.encoder = ecfg;
  DenoiserConfig dcfg;
  dcfg.d_model = cfg.d_model;
  ckpt.denoiser = dcfg;

  EvalOptions opts;
  opts.fusion_w = 1.0;  // joint-probability channel only
  const EvalReport rep = evaluate(ckpt, corpus, Direction::kTextToVideo, opts);
  CHECK(rep.auroc > 0.35);
  CHECK(rep.auroc < 0.65);
}

TEST_CASE("report and curve files: stable headers and row counts") {
  const fs::path dir = temp_dir("files");
  const Corpus corpus = tiny_corpus(4, 2, 15);
  const TrainResult res = train(corpus, tiny_train(TrainStrategy::kBoth, 2));
  EvalOptions opts;
  const EvalReport rep = evaluate(res.checkpoint, corpus, Direction::kTextToVideo, opts);
  write_report_files(rep, dir.string(), "eval_t2v");
  write_loss_curve(res.curve, (dir / "loss_curve.csv").string());
  opts.sampler.eval_steps = 4;
  const TraceResult trace =
      diffusion_trace(res.checkpoint, 0, corpus, Direction::kTextToVideo, opts);
  write_trace_files(trace, dir.string(), "trace_0_t2v");

  auto read_lines = [](const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
  };
  const auto summary = read_lines(dir / "eval_t2v_summary.csv");
  REQUIRE(summary.size() == 2);
  CHECK(summary[0] == "direction,queries,r1,r5,r10,rsum,mdr,mnr,auroc,fusion_w");
  const auto ranks = read_lines(dir / "eval_t2v_ranks.csv");
  CHECK(ranks.size() == 1 + corpus.size());
  CHECK(ranks[0] == "query_id,rank");
  const auto hist = read_lines(dir / "eval_t2v_hist.csv");
  CHECK(hist.size() == 1 + rep.hist.pos_counts.size());
  CHECK(hist[0] == "bin,lo,hi,pos_count,neg_count");
  const auto jsonl = read_lines(dir / "eval_t2v.jsonl");
  CHECK(jsonl.size() == 1 + corpus.size() + rep.hist.pos_counts.size());

  const auto curve = read_lines(dir / "loss_curve.csv");
  REQUIRE(curve.size() == 3);
  CHECK(curve[0] == "epoch,gen_loss,dis_loss,total_loss");

  const auto trace_csv = read_lines(dir / "trace_0_t2v.csv");
  CHECK(trace_csv.size() == 1 + trace.rows.size());
  const auto trace_jsonl = read_lines(dir / "trace_0_t2v.jsonl");
  CHECK(trace_jsonl.size() == trace.rows.size());

  const std::string line = report_summary_line(rep);
  CHECK(line.rfind("t2v: R@1=", 0) == 0);
  fs::remove_all(dir);
}
