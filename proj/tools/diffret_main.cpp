// Command-line entry point: data generation, training, evaluation,
// out-domain comparison, per-step trace export, and ablation sweeps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffret/corpus.hpp"
#include "diffret/error.hpp"
#include "diffret/pipeline.hpp"

namespace fs = std::filesystem;
using namespace diffret;

namespace {

std::string default_out_root() {
  const char* env = std::getenv("DIFFRET_OUT");
  return env != nullptr && *env != '\0' ? env : "out";
}

// Every run leaves a reloadable key=value echo of its fully resolved options
// next to its outputs; `diffret <sub> --config <echo>` reproduces the run.
void write_config_echo(const CLI::App* sub, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / (sub->get_name() + "_config.ini");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write config echo: " + path.string());
  // The section header routes the keys to this subcommand when the file is
  // loaded through the root app's --config option.
  f << '[' << sub->get_name() << "]\n"
    << sub->config_to_str(/*default_also=*/true, /*write_description=*/false);
}

struct DataFlags {
  std::string out = default_out_root();
  std::size_t classes = 16;
  std::size_t pairs_per_class = 40;  // 16 x 40 = 512 train + 128 test at 0.8
  std::size_t d_in = 32;
  std::size_t words = 6;
  std::size_t frames = 6;
  double sigma_within = 0.3;
  double sigma_modal = 0.3;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool shift = true;
  double shift_translation = 0.5;
  double shift_noise = 1.5;
  std::uint64_t shift_seed = 1;
};

struct TrainFlags {
  std::string out = default_out_root();
  std::string data;  // defaults to <out>/corpus.dfcx
  std::string strategy = "both";
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double lambda_gen = 1.0;
  std::size_t K = 50;
  std::string schedule = "cosine";
  double signal_scale = 1.0;
  double smoothing = 0.1;
  std::string gen_loss = "kl";
  std::uint64_t seed = 0;
  std::size_t d_model = 32;
  std::size_t aggregator_depth = 1;
  bool positional = false;
  double tau_prime = 1.0;
  double tau_hat = 0.01;
  bool scale_qk = false;
  std::size_t decoder_hidden = 0;
};

struct EvalFlags {
  std::string out = default_out_root();
  std::string ckpt;  // defaults to <out>/model.dfrt
  std::string data;  // defaults to <out>/corpus.dfcx
  std::string direction = "both";
  std::string sampler = "ddim";
  std::size_t eval_steps = 0;  // 0 = schedule K
  double eta = 0.0;
  std::size_t repeats = 1;
  double fusion_w = 0.5;
  std::uint64_t eval_seed = 0;
};

void add_train_options(CLI::App* sub, TrainFlags& f) {
  sub->add_option("-o,--out", f.out, "output directory")->capture_default_str();
  sub->add_option("--data", f.data, "corpus file (default <out>/corpus.dfcx)")
      ->capture_default_str();
  sub->add_option("--strategy", f.strategy, "training strategy")
      ->check(CLI::IsMember({"gen", "dis", "both"}))
      ->capture_default_str();
  sub->add_option("--epochs", f.epochs)->capture_default_str();
  sub->add_option("--batch-size", f.batch_size)->capture_default_str();
  sub->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  sub->add_option("--lambda", f.lambda_gen, "generation-loss weight")->capture_default_str();
  sub->add_option("--diffusion-steps", f.K, "training noise levels K")->capture_default_str();
  sub->add_option("--schedule", f.schedule, "noise schedule")
      ->check(CLI::IsMember({"linear", "cosine"}))
      ->capture_default_str();
  sub->add_option("--signal-scale", f.signal_scale, "clean-signal magnitude")
      ->capture_default_str();
  sub->add_option("--smoothing", f.smoothing, "target label smoothing")->capture_default_str();
  sub->add_option("--gen-loss", f.gen_loss, "generation loss form")
      ->check(CLI::IsMember({"kl", "mse", "kl-literal"}))
      ->capture_default_str();
  sub->add_option("--seed", f.seed, "training seed")->capture_default_str();
  sub->add_option("--d-model", f.d_model, "shared embedding width")->capture_default_str();
  sub->add_option("--agg-depth", f.aggregator_depth, "video self-attention blocks")
      ->capture_default_str();
  sub->add_flag("--positional,!--no-positional", f.positional, "sinusoidal frame positions")
      ->capture_default_str();
  sub->add_option("--tau-prime", f.tau_prime, "text-frame attention temperature")
      ->capture_default_str();
  sub->add_option("--tau-hat", f.tau_hat, "contrastive temperature")->capture_default_str();
  sub->add_flag("--scale-qk,!--no-scale-qk", f.scale_qk, "1/sqrt(D) attention scaling")
      ->capture_default_str();
  sub->add_option("--decoder-hidden", f.decoder_hidden, "decoder hidden width (0 = 2*D)")
      ->capture_default_str();
}

void add_sampler_options(CLI::App* sub, EvalFlags& f, bool with_direction_both) {
  sub->add_option("-o,--out", f.out, "output directory")->capture_default_str();
  sub->add_option("--ckpt", f.ckpt, "checkpoint file (default <out>/model.dfrt)")
      ->capture_default_str();
  sub->add_option("--data", f.data, "corpus file (default <out>/corpus.dfcx)")
      ->capture_default_str();
  std::vector<std::string> dirs = {"t2v", "v2t"};
  if (with_direction_both) dirs.push_back("both");
  sub->add_option("--direction", f.direction, "retrieval direction")
      ->check(CLI::IsMember(dirs))
      ->capture_default_str();
  sub->add_option("--sampler", f.sampler, "reverse-chain sampler")
      ->check(CLI::IsMember({"ddim", "ddpm"}))
      ->capture_default_str();
  sub->add_option("--eval-steps", f.eval_steps, "sampled timesteps (0 = full K)")
      ->capture_default_str();
  sub->add_option("--eta", f.eta, "DDIM stochasticity")->capture_default_str();
  sub->add_option("--repeats", f.repeats, "noise initializations averaged per query")
      ->capture_default_str();
  sub->add_option("--fusion-w", f.fusion_w, "joint-probability fusion weight")
      ->capture_default_str();
  sub->add_option("--eval-seed", f.eval_seed, "reverse-chain noise seed")->capture_default_str();
}

TrainConfig to_train_config(const TrainFlags& f) {
  TrainConfig cfg;
  cfg.strategy = train_strategy_from_string(f.strategy);
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch_size;
  cfg.lr = f.lr;
  cfg.lambda_gen = f.lambda_gen;
  cfg.K = f.K;
  cfg.schedule = schedule_kind_from_string(f.schedule);
  cfg.signal_scale = f.signal_scale;
  cfg.smoothing = f.smoothing;
  cfg.gen_loss = gen_loss_kind_from_string(f.gen_loss);
  cfg.seed = f.seed;
  cfg.d_model = f.d_model;
  cfg.aggregator_depth = f.aggregator_depth;
  cfg.positional = f.positional;
  cfg.tau_prime = f.tau_prime;
  cfg.tau_hat = f.tau_hat;
  cfg.scale_qk = f.scale_qk;
  cfg.decoder_hidden = f.decoder_hidden;
  return cfg;
}

EvalOptions to_eval_options(const EvalFlags& f) {
  EvalOptions opts;
  opts.sampler.strategy = sampler_strategy_from_string(f.sampler);
  opts.sampler.eval_steps = f.eval_steps;
  opts.sampler.ddim_eta = f.eta;
  opts.sampler.repeats = f.repeats;
  opts.fusion_w = f.fusion_w;
  opts.seed = f.eval_seed;
  return opts;
}

std::string or_default(const std::string& value, const std::string& out,
                       const std::string& leaf) {
  return value.empty() ? (fs::path(out) / leaf).string() : value;
}

// Split selection with a fallback: untagged corpora train/evaluate on every
// pair (the importer emits untagged items).
Corpus pick_split(const Corpus& corpus, SplitTag tag) {
  Corpus picked = filter_split(corpus, tag);
  if (picked.size() == 0) return corpus;
  return picked;
}

std::vector<Direction> directions_of(const std::string& s) {
  if (s == "t2v") return {Direction::kTextToVideo};
  if (s == "v2t") return {Direction::kVideoToText};
  return {Direction::kTextToVideo, Direction::kVideoToText};
}

void run_gen_data(const DataFlags& f) {
  DomainSpec spec;
  spec.classes = f.classes;
  spec.pairs_per_class = f.pairs_per_class;
  spec.d_in = f.d_in;
  spec.words_per_text = f.words;
  spec.frames_per_video = f.frames;
  spec.sigma_within = f.sigma_within;
  spec.sigma_modal = f.sigma_modal;

  fs::create_directories(f.out);
  Corpus a = generate(spec, f.seed);
  tag_split(a, f.train_fraction, f.seed);
  const std::string a_path = (fs::path(f.out) / "corpus.dfcx").string();
  save(a, a_path);
  std::cout << "wrote " << a_path << " (" << a.size() << " pairs, "
            << filter_split(a, SplitTag::kTrain).size() << " train / "
            << filter_split(a, SplitTag::kTest).size() << " test)\n";

  if (f.shift) {
    DomainSpec shifted = spec;
    shifted.shift = DomainTransform{f.shift_translation, f.shift_noise, f.shift_seed};
    Corpus b = generate(shifted, f.seed);
    tag_split(b, f.train_fraction, f.seed);
    const std::string b_path = (fs::path(f.out) / "corpus_shift.dfcx").string();
    save(b, b_path);
    std::cout << "wrote " << b_path << " (shifted domain)\n";
  }
}

void run_train(const TrainFlags& f) {
  const Corpus corpus = load(or_default(f.data, f.out, "corpus.dfcx"));
  const Corpus train_set = pick_split(corpus, SplitTag::kTrain);
  const TrainResult result = train(train_set, to_train_config(f));
  fs::create_directories(f.out);
  const std::string ckpt_path = (fs::path(f.out) / "model.dfrt").string();
  save_checkpoint(result.checkpoint, ckpt_path);
  write_loss_curve(result.curve, (fs::path(f.out) / "loss_curve.csv").string());
  const EpochLoss& last = result.curve.back();
  std::cout << "trained " << f.epochs << " epochs on " << train_set.size() << " pairs; final "
            << "gen=" << last.gen << " dis=" << last.dis << " total=" << last.total << '\n';
  std::cout << "wrote " << ckpt_path << '\n';
}

void run_eval(const EvalFlags& f) {
  const Checkpoint ckpt = load_checkpoint(or_default(f.ckpt, f.out, "model.dfrt"));
  const Corpus corpus = load(or_default(f.data, f.out, "corpus.dfcx"));
  const Corpus test_set = pick_split(corpus, SplitTag::kTest);
  const EvalOptions opts = to_eval_options(f);
  for (Direction dir : directions_of(f.direction)) {
    const EvalReport report = evaluate(ckpt, test_set, dir, opts);
    write_report_files(report, f.out, std::string("eval_") + to_string(dir));
    std::cout << report_summary_line(report) << '\n';
  }
}

void run_out_domain(const EvalFlags& f, const std::string& shift_data) {
  const Checkpoint ckpt = load_checkpoint(or_default(f.ckpt, f.out, "model.dfrt"));
  const Corpus in_corpus = load(or_default(f.data, f.out, "corpus.dfcx"));
  const Corpus out_corpus = load(or_default(shift_data, f.out, "corpus_shift.dfcx"));
  const EvalOptions opts = to_eval_options(f);
  for (Direction dir : directions_of(f.direction)) {
    const OutDomainReport rep = out_domain_eval(ckpt, pick_split(in_corpus, SplitTag::kTest),
                                                pick_split(out_corpus, SplitTag::kTest), dir,
                                                opts);
    const std::string suffix = std::string("_") + to_string(dir);
    write_report_files(rep.in_domain, f.out, "in_domain" + suffix);
    write_report_files(rep.out_domain, f.out, "out_domain" + suffix);
    std::cout << "in-domain  " << report_summary_line(rep.in_domain) << '\n';
    std::cout << "out-domain " << report_summary_line(rep.out_domain) << '\n';
  }
}

void run_trace(const EvalFlags& f, std::uint64_t query_id) {
  const Checkpoint ckpt = load_checkpoint(or_default(f.ckpt, f.out, "model.dfrt"));
  const Corpus corpus = load(or_default(f.data, f.out, "corpus.dfcx"));
  const Corpus test_set = pick_split(corpus, SplitTag::kTest);
  const EvalOptions opts = to_eval_options(f);
  for (Direction dir : directions_of(f.direction)) {
    const TraceResult trace = diffusion_trace(ckpt, query_id, test_set, dir, opts);
    char stem[64];
    std::snprintf(stem, sizeof(stem), "trace_%llu_%s",
                  static_cast<unsigned long long>(query_id), to_string(dir));
    write_trace_files(trace, f.out, stem);
    std::cout << "wrote " << (fs::path(f.out) / stem).string() << ".csv (" << trace.rows.size()
              << " rows)\n";
  }
}

// ---- ablation sweeps ----

struct SweepPoint {
  std::string tag;
  TrainConfig train_cfg;
  EvalOptions eval_opts;
};

std::vector<SweepPoint> sweep_points(const std::string& axis, const TrainConfig& base_train,
                                     const EvalOptions& base_eval) {
  std::vector<SweepPoint> points;
  auto push = [&](const std::string& tag, auto&& mutate) {
    SweepPoint p{tag, base_train, base_eval};
    mutate(p);
    points.push_back(std::move(p));
  };
  if (axis == "strategy") {
    for (const char* s : {"gen", "dis", "both"}) {
      push(s, [&](SweepPoint& p) { p.train_cfg.strategy = train_strategy_from_string(s); });
    }
  } else if (axis == "loss-type") {
    for (const char* s : {"kl", "mse"}) {
      push(s, [&](SweepPoint& p) { p.train_cfg.gen_loss = gen_loss_kind_from_string(s); });
    }
  } else if (axis == "sampling") {
    for (const char* s : {"ddim", "ddpm"}) {
      push(s, [&](SweepPoint& p) {
        p.eval_opts.sampler.strategy = sampler_strategy_from_string(s);
        p.eval_opts.sampler.eval_steps = 0;  // ddpm requires the full chain
      });
    }
  } else if (axis == "schedule") {
    for (const char* s : {"linear", "cosine"}) {
      push(s, [&](SweepPoint& p) { p.train_cfg.schedule = schedule_kind_from_string(s); });
    }
  } else if (axis == "steps") {
    for (std::size_t train_k : {std::size_t{10}, std::size_t{50}}) {
      for (std::size_t eval_steps : {std::size_t{10}, std::size_t{50}}) {
        char tag[32];
        std::snprintf(tag, sizeof(tag), "k%zu_e%zu", train_k, eval_steps);
        push(tag, [&](SweepPoint& p) {
          p.train_cfg.K = train_k;
          p.eval_opts.sampler.eval_steps = eval_steps;
        });
      }
    }
  } else if (axis == "scale") {
    for (double s : {0.5, 1.0, 2.0}) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "s%.1f", s);
      push(tag, [&](SweepPoint& p) { p.train_cfg.signal_scale = s; });
    }
  } else {
    throw ConfigError("unknown ablation axis: " + axis);
  }
  return points;
}

void run_ablate(const TrainFlags& tf, const EvalFlags& ef, const std::string& axis) {
  const Corpus corpus = load(or_default(tf.data, tf.out, "corpus.dfcx"));
  const Corpus train_set = pick_split(corpus, SplitTag::kTrain);
  const Corpus test_set = pick_split(corpus, SplitTag::kTest);
  const std::vector<SweepPoint> points =
      sweep_points(axis, to_train_config(tf), to_eval_options(ef));

  fs::create_directories(tf.out);
  const fs::path summary_path = fs::path(tf.out) / ("ablate_" + axis + ".csv");
  std::ofstream summary(summary_path, std::ios::trunc);
  if (!summary) throw IoError("cannot write " + summary_path.string());
  summary << "axis,point,direction,status,r1,r5,r10,rsum,mdr,mnr,auroc\n";

  for (const SweepPoint& point : points) {
    const fs::path dir = fs::path(tf.out) / axis / point.tag;
    fs::create_directories(dir);
    const TrainResult result = train(train_set, point.train_cfg);
    save_checkpoint(result.checkpoint, (dir / "model.dfrt").string());
    write_loss_curve(result.curve, (dir / "loss_curve.csv").string());
    for (Direction d : {Direction::kTextToVideo, Direction::kVideoToText}) {
      try {
        const EvalReport report = evaluate(result.checkpoint, test_set, d, point.eval_opts);
        write_report_files(report, dir.string(), std::string("eval_") + to_string(d));
        const RankMetrics& m = report.metrics;
        summary << axis << ',' << point.tag << ',' << to_string(d) << ",ok," << m.r1 << ','
                << m.r5 << ',' << m.r10 << ',' << m.rsum << ',' << m.mdr << ',' << m.mnr << ','
                << report.auroc << '\n';
        std::cout << axis << '/' << point.tag << ' ' << report_summary_line(report) << '\n';
      } catch (const ConfigError& e) {
        summary << axis << ',' << point.tag << ',' << to_string(d) << ",infeasible,,,,,,,\n";
        std::cout << axis << '/' << point.tag << ' ' << to_string(d)
                  << ": infeasible (" << e.what() << ")\n";
      }
    }
  }
  std::cout << "wrote " << summary_path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generative text-video retrieval: denoising-diffusion joint scoring "
               "with contrastive similarity fusion"};
  app.require_subcommand(1);
  // The config option lives on the root app because only the root app loads
  // config files; subcommands use fallthrough() so `--config` may still be
  // given after the subcommand name. Echoed files carry a [subcommand]
  // section, which routes the keys back to the right subcommand on reload.
  app.set_config("--config", "", "key=value config file; flags override");
  app.allow_config_extras(CLI::config_extras_mode::error);

  DataFlags data_flags;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic paired corpus");
  gen_cmd->fallthrough();
  gen_cmd->add_option("-o,--out", data_flags.out, "output directory")->capture_default_str();
  gen_cmd->add_option("--classes", data_flags.classes)->capture_default_str();
  gen_cmd->add_option("--pairs-per-class", data_flags.pairs_per_class)->capture_default_str();
  gen_cmd->add_option("--d-in", data_flags.d_in, "raw feature width")->capture_default_str();
  gen_cmd->add_option("--words", data_flags.words, "text tokens per pair")->capture_default_str();
  gen_cmd->add_option("--frames", data_flags.frames, "video frames per pair")
      ->capture_default_str();
  gen_cmd->add_option("--sigma-within", data_flags.sigma_within, "pair spread in class")
      ->capture_default_str();
  gen_cmd->add_option("--sigma-modal", data_flags.sigma_modal, "token spread in pair")
      ->capture_default_str();
  gen_cmd->add_option("--train-fraction", data_flags.train_fraction)->capture_default_str();
  gen_cmd->add_option("--seed", data_flags.seed)->capture_default_str();
  gen_cmd->add_flag("--shift,!--no-shift", data_flags.shift, "also write an affine-shifted twin")
      // config_to_str falls back to "false" for unpassed flags; record the
      // real default so the echoed config reproduces the run.
      ->default_str("true");
  gen_cmd->add_option("--shift-translation", data_flags.shift_translation)
      ->capture_default_str();
  gen_cmd->add_option("--shift-noise", data_flags.shift_noise, "sigma inflation of the twin")
      ->capture_default_str();
  gen_cmd->add_option("--shift-seed", data_flags.shift_seed)->capture_default_str();

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a retrieval model");
  train_cmd->fallthrough();
  add_train_options(train_cmd, train_flags);

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test gallery");
  eval_cmd->fallthrough();
  add_sampler_options(eval_cmd, eval_flags, /*with_direction_both=*/true);

  EvalFlags od_flags;
  std::string od_shift_data;
  auto* od_cmd = app.add_subcommand("out-domain",
                                    "evaluate a frozen checkpoint in and out of domain");
  od_cmd->fallthrough();
  add_sampler_options(od_cmd, od_flags, /*with_direction_both=*/true);
  od_cmd->add_option("--shift-data", od_shift_data,
                     "shifted corpus (default <out>/corpus_shift.dfcx)")
      ->capture_default_str();

  EvalFlags trace_flags;
  trace_flags.direction = "t2v";
  std::uint64_t trace_query_id = 0;
  auto* trace_cmd = app.add_subcommand("trace", "export one query's per-step distributions");
  trace_cmd->fallthrough();
  add_sampler_options(trace_cmd, trace_flags, /*with_direction_both=*/false);
  trace_cmd->add_option("--query-id", trace_query_id, "corpus item id to trace")->required();

  TrainFlags ablate_train_flags;
  EvalFlags ablate_eval_flags;
  std::string ablate_axis;
  auto* ablate_cmd = app.add_subcommand("ablate", "train/eval sweep along one axis");
  ablate_cmd->fallthrough();
  add_train_options(ablate_cmd, ablate_train_flags);
  ablate_cmd
      ->add_option("--axis", ablate_axis, "strategy | loss-type | sampling | schedule | steps | scale")
      ->check(CLI::IsMember({"strategy", "loss-type", "sampling", "schedule", "steps", "scale"}))
      ->required();
  ablate_cmd->add_option("--sampler", ablate_eval_flags.sampler)
      ->check(CLI::IsMember({"ddim", "ddpm"}))
      ->capture_default_str();
  ablate_cmd->add_option("--eval-steps", ablate_eval_flags.eval_steps)->capture_default_str();
  ablate_cmd->add_option("--eta", ablate_eval_flags.eta)->capture_default_str();
  ablate_cmd->add_option("--fusion-w", ablate_eval_flags.fusion_w)->capture_default_str();
  ablate_cmd->add_option("--eval-seed", ablate_eval_flags.eval_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) {
      run_gen_data(data_flags);
      write_config_echo(gen_cmd, data_flags.out);
    } else if (train_cmd->parsed()) {
      run_train(train_flags);
      write_config_echo(train_cmd, train_flags.out);
    } else if (eval_cmd->parsed()) {
      run_eval(eval_flags);
      write_config_echo(eval_cmd, eval_flags.out);
    } else if (od_cmd->parsed()) {
      run_out_domain(od_flags, od_shift_data);
      write_config_echo(od_cmd, od_flags.out);
    } else if (trace_cmd->parsed()) {
      run_trace(trace_flags, trace_query_id);
      write_config_echo(trace_cmd, trace_flags.out);
    } else if (ablate_cmd->parsed()) {
      ablate_eval_flags.out = ablate_train_flags.out;
      ablate_eval_flags.data = ablate_train_flags.data;
      run_ablate(ablate_train_flags, ablate_eval_flags, ablate_axis);
      write_config_echo(ablate_cmd, ablate_train_flags.out);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
