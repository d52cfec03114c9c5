#include "diffret/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "diffret/error.hpp"
#include "diffret/serialize.hpp"
#include "json.hpp"

namespace diffret {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'R', 'T'};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct EncodedGallery {
  std::vector<EncodedText> texts;
  std::vector<EncodedVideo> videos;
  std::vector<Tensor> text_pooled;   // C_t per item
  std::vector<Tensor> video_pooled;  // mean frame representation per item
  std::vector<std::uint64_t> ids;
};

EncodedGallery encode_gallery(const Corpus& corpus, std::span<const std::size_t> indices,
                              const ParamLookup& p, const EncoderConfig& cfg) {
  EncodedGallery g;
  g.texts.reserve(indices.size());
  g.videos.reserve(indices.size());
  for (std::size_t i : indices) {
    g.texts.push_back(encode_text(corpus.text_tokens(i), p, cfg));
    g.videos.push_back(encode_video(corpus.video_tokens(i), p, cfg));
    g.text_pooled.push_back(g.texts.back().pooled);
    g.video_pooled.push_back(masked_mean(g.videos.back().frames, g.videos.back().mask));
    g.ids.push_back(corpus.items[i].id);
  }
  return g;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// Text-conditioned candidate matrix for one text query (one row per video).
Tensor video_candidates_for(const Tensor& c_t, const EncodedGallery& g, double tau_prime) {
  std::vector<Tensor> rows;
  rows.reserve(g.videos.size());
  for (const EncodedVideo& v : g.videos) {
    rows.push_back(text_frame_attention(c_t, v.frames, tau_prime, &v.mask));
  }
  return stack_rows(rows);
}

Tensor stack_pooled(const std::vector<Tensor>& pooled) {
  return stack_rows(std::span<const Tensor>(pooled.data(), pooled.size()));
}

std::uint64_t chain_key(std::uint64_t query_id, Direction dir) {
  return (query_id << 1) | (dir == Direction::kVideoToText ? 1u : 0u);
}

}  // namespace

TrainStrategy train_strategy_from_string(const std::string& s) {
  if (s == "gen") return TrainStrategy::kGen;
  if (s == "dis") return TrainStrategy::kDis;
  if (s == "both") return TrainStrategy::kBoth;
  throw ConfigError("unknown training strategy: " + s);
}

const char* to_string(TrainStrategy s) {
  switch (s) {
    case TrainStrategy::kGen: return "gen";
    case TrainStrategy::kDis: return "dis";
    default: return "both";
  }
}

namespace {

EncoderConfig encoder_config_of(const TrainConfig& cfg, std::size_t d_in) {
  EncoderConfig e;
  e.d_in = d_in;
  e.d_model = cfg.d_model;
  e.aggregator_depth = cfg.aggregator_depth;
  e.positional = cfg.positional;
  e.tau_prime = cfg.tau_prime;
  e.tau_hat = cfg.tau_hat;
  return e;
}

DenoiserConfig denoiser_config_of(const TrainConfig& cfg) {
  DenoiserConfig d;
  d.d_model = cfg.d_model;
  d.hidden = cfg.decoder_hidden;
  d.scale_qk = cfg.scale_qk;
  return d;
}

void validate_train_config(const TrainConfig& cfg, std::size_t corpus_size) {
  if (corpus_size < 2) throw InputError("train: corpus needs at least 2 pairs");
  if (cfg.batch_size < 1 || cfg.batch_size > corpus_size) {
    throw ConfigError("train: batch size must lie in 1..corpus size");
  }
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be positive");
  if (cfg.K < 1) throw ConfigError("train: K must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (cfg.lambda_gen < 0.0) throw ConfigError("train: lambda must be nonnegative");
  if (cfg.d_model < 1) throw ConfigError("train: d_model must be positive");
}

}  // namespace

TrainResult train(const Corpus& corpus, const TrainConfig& cfg) {
  validate_train_config(cfg, corpus.size());
  const EncoderConfig ecfg = encoder_config_of(cfg, corpus.d_in);
  const DenoiserConfig dcfg = denoiser_config_of(cfg);
  const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.K, cfg.signal_scale);

  SeededRng master(cfg.seed);
  SeededRng init_rng = master.split(1);
  SeededRng shuffle_rng = master.split(2);
  SeededRng diffuse_rng = master.split(3);

  ParamSet params;
  init_encoder_params(params, ecfg, init_rng);
  init_denoiser_params(params, dcfg, init_rng);
  AdamState adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  const std::size_t n = corpus.size();
  std::vector<std::size_t> order = all_indices(n);
  const bool use_dis = cfg.strategy != TrainStrategy::kGen;
  const bool use_gen = cfg.strategy != TrainStrategy::kDis;

  TrainResult result;
  result.curve.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }
    double sum_gen = 0.0, sum_dis = 0.0, sum_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      Tape tape;
      BoundParams bound(tape, params);
      const ParamLookup lookup = bound.lookup();
      const std::span<const std::size_t> batch_idx(order.data() + start, b);
      EncodedGallery g = encode_gallery(corpus, batch_idx, lookup, ecfg);

      std::vector<Tensor> pieces;
      double dis_value = 0.0, gen_value = 0.0;
      if (use_dis) {
        SimilarityMatrix sim = build_similarity_matrix(g.texts, g.videos, lookup, cfg.tau_hat);
        Tensor l_dis = contrastive_loss(sim);
        dis_value = l_dis.at(0);
        pieces.push_back(std::move(l_dis));
      }
      if (use_gen) {
        std::vector<Tensor> terms;
        terms.reserve(2 * b);
        const Tensor text_cands = stack_pooled(g.text_pooled);
        for (Direction dir : {Direction::kTextToVideo, Direction::kVideoToText}) {
          for (std::size_t i = 0; i < b; ++i) {
            const auto k = static_cast<std::size_t>(
                diffuse_rng.uniform_int(1, static_cast<std::int64_t>(cfg.K)));
            const JointTarget target = joint_target(i, b, cfg.signal_scale, cfg.smoothing);
            const Tensor noise = gaussian(diffuse_rng, {b});
            const Tensor x_k = forward_diffuse(sched, target.x0, k, noise);
            Tensor x0_hat;
            if (dir == Direction::kTextToVideo) {
              const Tensor cands = video_candidates_for(g.text_pooled[i], g, cfg.tau_prime);
              x0_hat = predict_x0(g.text_pooled[i], cands, x_k, k, cfg.K, lookup, dcfg, dir);
            } else {
              x0_hat = predict_x0(g.video_pooled[i], text_cands, x_k, k, cfg.K, lookup, dcfg, dir);
            }
            terms.push_back(generation_loss(x0_hat, target, cfg.gen_loss));
          }
        }
        Tensor l_gen = scale(sum(stack_rows(terms)), 1.0 / static_cast<double>(terms.size()));
        gen_value = l_gen.at(0);
        pieces.push_back(scale(std::move(l_gen), cfg.lambda_gen));
      }
      Tensor loss = std::move(pieces.front());
      for (std::size_t i = 1; i < pieces.size(); ++i) loss = add(loss, pieces[i]);

      GradientMap grads = tape.backward(loss);
      bound.apply_adam(grads, adam);
      sum_dis += dis_value;
      sum_gen += gen_value;
      sum_total += loss.at(0);
      ++batches;
    }
    result.curve.push_back(EpochLoss{epoch, sum_gen / static_cast<double>(batches),
                                     sum_dis / static_cast<double>(batches),
                                     sum_total / static_cast<double>(batches)});
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.version = 1;
  ckpt.d_in = corpus.d_in;
  ckpt.params = std::move(params);
  ckpt.schedule = sched;
  ckpt.encoder = ecfg;
  ckpt.denoiser = dcfg;
  ckpt.train = cfg;
  diffuse_rng.state(ckpt.rng_state);
  return result;
}

// ---- checkpoint I/O ----

std::string Checkpoint::config_json() const {
  nlohmann::json j;
  j["format"] = "diffret-checkpoint";
  j["version"] = version;
  j["d_in"] = d_in;
  nlohmann::json t;
  t["strategy"] = to_string(train.strategy);
  t["epochs"] = train.epochs;
  t["batch_size"] = train.batch_size;
  t["lr"] = train.lr;
  t["lambda_gen"] = train.lambda_gen;
  t["K"] = train.K;
  t["schedule"] = to_string(train.schedule);
  t["signal_scale"] = train.signal_scale;
  t["smoothing"] = train.smoothing;
  t["gen_loss"] = to_string(train.gen_loss);
  t["seed"] = train.seed;
  t["d_model"] = train.d_model;
  t["aggregator_depth"] = train.aggregator_depth;
  t["positional"] = train.positional;
  t["tau_prime"] = train.tau_prime;
  t["tau_hat"] = train.tau_hat;
  t["scale_qk"] = train.scale_qk;
  t["decoder_hidden"] = train.decoder_hidden;
  j["train"] = t;
  j["rng_state"] = {rng_state[0], rng_state[1], rng_state[2], rng_state[3]};
  return j.dump();
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  io::write_u32(out, ckpt.version);
  io::write_string(out, ckpt.config_json());
  io::write_named_f64(out, "sched.betas",
                      Tensor({ckpt.schedule.K}, ckpt.schedule.betas));
  for (const auto& [name, tensor] : ckpt.params.items()) {
    io::write_named_f64(out, name, tensor);
  }
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a checkpoint file (bad magic): " + path);
  }
  Checkpoint ckpt;
  ckpt.version = io::read_u32(in);
  if (ckpt.version != 1) {
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  try {
    const nlohmann::json j = nlohmann::json::parse(io::read_string(in));
    ckpt.d_in = j.at("d_in").get<std::size_t>();
    const nlohmann::json& t = j.at("train");
    TrainConfig& cfg = ckpt.train;
    cfg.strategy = train_strategy_from_string(t.at("strategy").get<std::string>());
    cfg.epochs = t.at("epochs").get<std::size_t>();
    cfg.batch_size = t.at("batch_size").get<std::size_t>();
    cfg.lr = t.at("lr").get<double>();
    cfg.lambda_gen = t.at("lambda_gen").get<double>();
    cfg.K = t.at("K").get<std::size_t>();
    cfg.schedule = schedule_kind_from_string(t.at("schedule").get<std::string>());
    cfg.signal_scale = t.at("signal_scale").get<double>();
    cfg.smoothing = t.at("smoothing").get<double>();
    cfg.gen_loss = gen_loss_kind_from_string(t.at("gen_loss").get<std::string>());
    cfg.seed = t.at("seed").get<std::uint64_t>();
    cfg.d_model = t.at("d_model").get<std::size_t>();
    cfg.aggregator_depth = t.at("aggregator_depth").get<std::size_t>();
    cfg.positional = t.at("positional").get<bool>();
    cfg.tau_prime = t.at("tau_prime").get<double>();
    cfg.tau_hat = t.at("tau_hat").get<double>();
    cfg.scale_qk = t.at("scale_qk").get<bool>();
    cfg.decoder_hidden = t.at("decoder_hidden").get<std::size_t>();
    const auto& rs = j.at("rng_state");
    for (std::size_t i = 0; i < 4; ++i) ckpt.rng_state[i] = rs.at(i).get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint config parse error: ") + e.what());
  }
  ckpt.encoder = encoder_config_of(ckpt.train, ckpt.d_in);
  ckpt.denoiser = denoiser_config_of(ckpt.train);

  io::NamedF64 betas = io::read_named_f64(in);
  if (betas.name != "sched.betas" || betas.tensor.ndim() != 1 ||
      betas.tensor.dim(0) != ckpt.train.K) {
    throw IoError("checkpoint: malformed schedule record");
  }
  ckpt.schedule = schedule_from_betas(ckpt.train.schedule, ckpt.train.signal_scale,
                                      betas.tensor.values());
  while (!io::at_eof(in)) {
    io::NamedF64 rec = io::read_named_f64(in);
    ckpt.params.add(rec.name, std::move(rec.tensor));
  }

  // Structural check: the loaded set must match what a fresh initialization
  // would register (names, order, shapes) — catches missing direction
  // branches or truncated files.
  ParamSet expected;
  SeededRng probe(0);
  init_encoder_params(expected, ckpt.encoder, probe);
  init_denoiser_params(expected, ckpt.denoiser, probe);
  if (expected.size() != ckpt.params.size()) {
    throw ConfigError("checkpoint: parameter set is incomplete");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [ename, etensor] = expected.items()[i];
    const auto& [lname, ltensor] = ckpt.params.items()[i];
    if (ename != lname || etensor.shape() != ltensor.shape()) {
      throw ConfigError("checkpoint: parameter mismatch at " + lname);
    }
  }
  return ckpt;
}

// ---- evaluation ----

namespace {

struct QueryOutcome {
  std::uint64_t id = 0;
  std::size_t rank = 0;
  double positive_score = 0.0;
  std::vector<double> negative_scores;
};

}  // namespace

EvalReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, Direction direction,
                    const EvalOptions& opts) {
  if (corpus.size() == 0) throw InputError("evaluate: empty corpus");
  if (corpus.d_in != ckpt.d_in) throw InputError("evaluate: corpus width != checkpoint d_in");
  const ParamLookup lookup = ckpt.params.lookup();
  const std::vector<std::size_t> idx = all_indices(corpus.size());
  const EncodedGallery g = encode_gallery(corpus, idx, lookup, ckpt.encoder);
  const std::size_t n = corpus.size();
  const Tensor text_cands =
      direction == Direction::kVideoToText ? stack_pooled(g.text_pooled) : Tensor::scalar(0.0);

  std::vector<std::size_t> qorder = idx;
  std::sort(qorder.begin(), qorder.end(),
            [&](std::size_t a, std::size_t b) { return g.ids[a] < g.ids[b]; });

  SeededRng eval_base(opts.seed);
  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(n);
  for (std::size_t qi : qorder) {
    std::vector<double> sim_row(n);
    for (std::size_t j = 0; j < n; ++j) {
      sim_row[j] = direction == Direction::kTextToVideo
                       ? token_similarity(g.texts[qi], g.videos[j], lookup).at(0)
                       : token_similarity(g.texts[j], g.videos[qi], lookup).at(0);
    }
    const Tensor& query = direction == Direction::kTextToVideo ? g.text_pooled[qi]
                                                               : g.video_pooled[qi];
    const Tensor cands = direction == Direction::kTextToVideo
                             ? video_candidates_for(g.text_pooled[qi], g, ckpt.encoder.tau_prime)
                             : text_cands;
    DenoiseFn denoise = [&](const Tensor& x_k, std::size_t k) {
      return predict_x0(query, cands, x_k, k, ckpt.schedule.K, lookup, ckpt.denoiser, direction);
    };
    NoiseSource noise(eval_base.split(chain_key(g.ids[qi], direction)), g.ids);
    const JointResult joint = generate_joint(denoise, ckpt.schedule, n, opts.sampler, noise.fn());
    const std::vector<double> fused = fuse_scores(sim_row, joint.prob.values(), opts.fusion_w);

    QueryOutcome out;
    out.id = g.ids[qi];
    out.rank = rank_of_positive(fused, qi);
    out.positive_score = fused[qi];
    out.negative_scores.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != qi) out.negative_scores.push_back(fused[j]);
    }
    outcomes.push_back(std::move(out));
  }

  EvalReport report;
  report.direction = direction;
  report.fusion_w = opts.fusion_w;
  std::vector<double> pos, neg;
  pos.reserve(n);
  for (const QueryOutcome& out : outcomes) {
    report.query_ids.push_back(out.id);
    report.ranks.push_back(out.rank);
    pos.push_back(out.positive_score);
    neg.insert(neg.end(), out.negative_scores.begin(), out.negative_scores.end());
  }
  report.metrics = rank_metrics(report.ranks);
  if (!neg.empty()) {
    report.auroc = auroc(pos, neg);
    report.hist = score_histogram(pos, neg);
  } else {
    report.auroc = 1.0;  // single-item gallery: separation is vacuous
    report.hist = Histogram{0.0, 1.0, {pos.size()}, {0}};
  }
  return report;
}

OutDomainReport out_domain_eval(const Checkpoint& ckpt, const Corpus& in_corpus,
                                const Corpus& out_corpus, Direction direction,
                                const EvalOptions& opts) {
  if (in_corpus.d_in != out_corpus.d_in) {
    throw InputError("out_domain_eval: corpora disagree on feature width");
  }
  OutDomainReport rep;
  rep.in_domain = evaluate(ckpt, in_corpus, direction, opts);
  rep.out_domain = evaluate(ckpt, out_corpus, direction, opts);
  return rep;
}

TraceResult diffusion_trace(const Checkpoint& ckpt, std::uint64_t query_id, const Corpus& corpus,
                            Direction direction, const EvalOptions& opts) {
  if (corpus.size() == 0) throw InputError("diffusion_trace: empty corpus");
  if (corpus.d_in != ckpt.d_in) throw InputError("diffusion_trace: width mismatch");
  std::size_t qi = corpus.size();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus.items[i].id == query_id) {
      qi = i;
      break;
    }
  }
  if (qi == corpus.size()) {
    throw InputError("diffusion_trace: no item with id " + std::to_string(query_id));
  }
  const ParamLookup lookup = ckpt.params.lookup();
  const std::vector<std::size_t> idx = all_indices(corpus.size());
  const EncodedGallery g = encode_gallery(corpus, idx, lookup, ckpt.encoder);
  const std::size_t n = corpus.size();

  const Tensor& query = direction == Direction::kTextToVideo ? g.text_pooled[qi]
                                                             : g.video_pooled[qi];
  const Tensor cands = direction == Direction::kTextToVideo
                           ? video_candidates_for(g.text_pooled[qi], g, ckpt.encoder.tau_prime)
                           : stack_pooled(g.text_pooled);
  DenoiseFn denoise = [&](const Tensor& x_k, std::size_t k) {
    return predict_x0(query, cands, x_k, k, ckpt.schedule.K, lookup, ckpt.denoiser, direction);
  };
  SeededRng eval_base(opts.seed);
  NoiseSource noise(eval_base.split(chain_key(query_id, direction)), g.ids);
  const JointResult joint =
      generate_joint(denoise, ckpt.schedule, n, opts.sampler, noise.fn(), /*want_trace=*/true);

  const std::size_t K = ckpt.schedule.K;
  const std::size_t steps = opts.sampler.eval_steps == 0 ? K : opts.sampler.eval_steps;
  std::vector<std::size_t> seq;
  if (opts.sampler.strategy == SamplerStrategy::kDdim) {
    seq = ddim_subsequence(K, steps);
  } else {
    for (std::size_t k = K; k >= 1; --k) seq.push_back(k);
  }

  TraceResult trace;
  trace.query_id = query_id;
  trace.direction = direction;
  trace.gt_index = qi;
  trace.gallery_ids = g.ids;
  trace.levels.push_back(K);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    trace.levels.push_back(i + 1 < seq.size() ? seq[i + 1] : 0);
  }
  for (const Tensor& row : joint.trace) trace.rows.push_back(row.values());
  return trace;
}

// ---- exports ----

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

void write_report_files(const EvalReport& report, const std::string& dir,
                        const std::string& stem) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base = fs::path(dir);
  const RankMetrics& m = report.metrics;

  {
    std::ofstream out = open_out(base / (stem + "_summary.csv"));
    out << "direction,queries,r1,r5,r10,rsum,mdr,mnr,auroc,fusion_w\n";
    out << to_string(report.direction) << ',' << report.ranks.size() << ',' << fmt17(m.r1) << ','
        << fmt17(m.r5) << ',' << fmt17(m.r10) << ',' << fmt17(m.rsum) << ',' << fmt17(m.mdr)
        << ',' << fmt17(m.mnr) << ',' << fmt17(report.auroc) << ',' << fmt17(report.fusion_w)
        << '\n';
  }
  {
    std::ofstream out = open_out(base / (stem + "_ranks.csv"));
    out << "query_id,rank\n";
    for (std::size_t i = 0; i < report.ranks.size(); ++i) {
      out << report.query_ids[i] << ',' << report.ranks[i] << '\n';
    }
  }
  {
    std::ofstream out = open_out(base / (stem + "_hist.csv"));
    out << "bin,lo,hi,pos_count,neg_count\n";
    const std::size_t bins = report.hist.pos_counts.size();
    const double width = (report.hist.hi - report.hist.lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      out << b << ',' << fmt17(report.hist.lo + width * static_cast<double>(b)) << ','
          << fmt17(report.hist.lo + width * static_cast<double>(b + 1)) << ','
          << report.hist.pos_counts[b] << ',' << report.hist.neg_counts[b] << '\n';
    }
  }
  {
    std::ofstream out = open_out(base / (stem + ".jsonl"));
    nlohmann::json summary;
    summary["type"] = "summary";
    summary["direction"] = to_string(report.direction);
    summary["queries"] = report.ranks.size();
    summary["r1"] = m.r1;
    summary["r5"] = m.r5;
    summary["r10"] = m.r10;
    summary["rsum"] = m.rsum;
    summary["mdr"] = m.mdr;
    summary["mnr"] = m.mnr;
    summary["auroc"] = report.auroc;
    summary["fusion_w"] = report.fusion_w;
    out << summary.dump() << '\n';
    for (std::size_t i = 0; i < report.ranks.size(); ++i) {
      nlohmann::json row;
      row["type"] = "rank";
      row["query_id"] = report.query_ids[i];
      row["rank"] = report.ranks[i];
      out << row.dump() << '\n';
    }
    const std::size_t bins = report.hist.pos_counts.size();
    for (std::size_t b = 0; b < bins; ++b) {
      nlohmann::json row;
      row["type"] = "hist_bin";
      row["bin"] = b;
      row["pos_count"] = report.hist.pos_counts[b];
      row["neg_count"] = report.hist.neg_counts[b];
      out << row.dump() << '\n';
    }
  }
}

void write_trace_files(const TraceResult& trace, const std::string& dir,
                       const std::string& stem) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base = fs::path(dir);
  {
    std::ofstream out = open_out(base / (stem + ".csv"));
    out << "row,level,gt_index";
    for (std::uint64_t id : trace.gallery_ids) out << ",p_" << id;
    out << '\n';
    for (std::size_t r = 0; r < trace.rows.size(); ++r) {
      out << r << ',' << trace.levels[r] << ',' << trace.gt_index;
      for (double v : trace.rows[r]) out << ',' << fmt17(v);
      out << '\n';
    }
  }
  {
    std::ofstream out = open_out(base / (stem + ".jsonl"));
    for (std::size_t r = 0; r < trace.rows.size(); ++r) {
      nlohmann::json row;
      row["type"] = "trace_row";
      row["row"] = r;
      row["level"] = trace.levels[r];
      row["query_id"] = trace.query_id;
      row["direction"] = to_string(trace.direction);
      row["gt_index"] = trace.gt_index;
      row["prob"] = trace.rows[r];
      out << row.dump() << '\n';
    }
  }
}

void write_loss_curve(const std::vector<EpochLoss>& curve, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "epoch,gen_loss,dis_loss,total_loss\n";
  for (const EpochLoss& e : curve) {
    out << e.epoch << ',' << fmt17(e.gen) << ',' << fmt17(e.dis) << ',' << fmt17(e.total) << '\n';
  }
}

std::string report_summary_line(const EvalReport& report) {
  char buf[200];
  const RankMetrics& m = report.metrics;
  std::snprintf(buf, sizeof(buf),
                "%s: R@1=%.1f R@5=%.1f R@10=%.1f Rsum=%.1f MdR=%.1f MnR=%.2f AUROC=%.3f",
                to_string(report.direction), m.r1, m.r5, m.r10, m.rsum, m.mdr, m.mnr,
                report.auroc);
  return buf;
}

}  // namespace diffret
