#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffret/corpus.hpp"
#include "diffret/denoiser.hpp"
#include "diffret/encoders.hpp"
#include "diffret/metrics.hpp"
#include "diffret/objectives.hpp"
#include "diffret/optim.hpp"
#include "diffret/sampler.hpp"
#include "diffret/schedule.hpp"

namespace diffret {

enum class TrainStrategy { kGen, kDis, kBoth };

TrainStrategy train_strategy_from_string(const std::string& s);
const char* to_string(TrainStrategy s);

struct TrainConfig {
  TrainStrategy strategy = TrainStrategy::kBoth;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;  // desk-scale default; 128 at paper scale
  double lr = 1e-3;
  double lambda_gen = 1.0;  // weight of the generation loss in the hybrid sum
  std::size_t K = 50;
  ScheduleKind schedule = ScheduleKind::kCosine;
  double signal_scale = 1.0;
  double smoothing = 0.1;
  GenLossKind gen_loss = GenLossKind::kKl;
  std::uint64_t seed = 0;
  std::size_t d_model = 32;
  std::size_t aggregator_depth = 1;
  bool positional = false;
  double tau_prime = 1.0;
  double tau_hat = 0.01;
  bool scale_qk = false;
  std::size_t decoder_hidden = 0;  // 0 means 2 * d_model
};

struct EpochLoss {
  std::size_t epoch = 0;
  double gen = 0.0;
  double dis = 0.0;
  double total = 0.0;
};

struct Checkpoint {
  std::uint32_t version = 1;
  std::size_t d_in = 0;
  ParamSet params;
  NoiseSchedule schedule;
  EncoderConfig encoder;
  DenoiserConfig denoiser;
  TrainConfig train;
  std::uint64_t rng_state[4] = {0, 0, 0, 0};

  std::string config_json() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLoss> curve;
};

// Hybrid training: per batch, InfoNCE over the in-batch similarity matrix
// (unless strategy=gen) plus, per query and direction, a generation loss on
// the denoised in-batch joint target (unless strategy=dis); one Adam step.
TrainResult train(const Corpus& corpus, const TrainConfig& cfg);

// DFRT container: magic, version, length-prefixed JSON config echo, then
// named f64 tensors (schedule betas first, parameters in registration order).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct EvalOptions {
  SamplerConfig sampler;
  double fusion_w = 0.5;
  std::uint64_t seed = 0;  // seeds the per-query reverse-chain noise
};

struct EvalReport {
  Direction direction = Direction::kTextToVideo;
  RankMetrics metrics;
  double auroc = 0.0;
  double fusion_w = 0.5;
  std::vector<std::uint64_t> query_ids;  // ascending
  std::vector<std::size_t> ranks;        // aligned with query_ids
  Histogram hist;                        // fused positive vs negative scores
};

// Full-gallery retrieval: per query, token similarities to every candidate,
// a generated joint distribution, standardized fusion, descending rank of
// the ground-truth pair.
EvalReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, Direction direction,
                    const EvalOptions& opts);

struct OutDomainReport {
  EvalReport in_domain;
  EvalReport out_domain;
};

// Frozen-checkpoint evaluation on the training domain's test set and on a
// shifted domain's test set; no adaptation.
OutDomainReport out_domain_eval(const Checkpoint& ckpt, const Corpus& in_corpus,
                                const Corpus& out_corpus, Direction direction,
                                const EvalOptions& opts);

struct TraceResult {
  std::uint64_t query_id = 0;
  Direction direction = Direction::kTextToVideo;
  std::size_t gt_index = 0;
  std::vector<std::uint64_t> gallery_ids;
  std::vector<std::size_t> levels;        // K, then the level each row steps to
  std::vector<std::vector<double>> rows;  // each a distribution over the gallery
};

// Per-step readout of one query's reverse chain (the noisy start plus one row
// per sampled timestep).
TraceResult diffusion_trace(const Checkpoint& ckpt, std::uint64_t query_id, const Corpus& corpus,
                            Direction direction, const EvalOptions& opts);

// CSV + line-delimited JSON exports; doubles are written with 17 significant
// digits so identical runs produce identical bytes.
void write_report_files(const EvalReport& report, const std::string& dir,
                        const std::string& stem);
void write_trace_files(const TraceResult& trace, const std::string& dir, const std::string& stem);
void write_loss_curve(const std::vector<EpochLoss>& curve, const std::string& path);
std::string report_summary_line(const EvalReport& report);

}  // namespace diffret
