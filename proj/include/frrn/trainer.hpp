#pragma once

// Training loop, evaluation and the FRRN-vs-baseline comparison protocol.
//
// The batch for iteration t is drawn from an RNG seeded with (seed, t), so a
// run resumed from a saved session replays the same batches and
// augmentations as an uninterrupted run.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "frrn/adam.hpp"
#include "frrn/augmentation.hpp"
#include "frrn/checkpoint.hpp"
#include "frrn/data.hpp"
#include "frrn/evaluation.hpp"
#include "frrn/loss.hpp"
#include "frrn/network.hpp"

namespace frrn {

struct LrStep {
  int until = 0;  // applies to iterations t < until
  double lr = 1e-3;
};

enum class CutPolicy { None, Stages };

struct TrainConfig {
  std::string arch = "frrn-a-mini";
  std::string precision = "f32";
  int batch_size = 3;
  int iterations = 2000;
  std::vector<LrStep> lr_schedule;  // empty: constant 1e-3
  double k_fraction = 0.125;
  AugmentConfig augmentation;
  CutPolicy cut_points = CutPolicy::Stages;
  std::uint64_t seed = 1;
  int eval_every = 100;
  int train_limit = 0;  // use only the first n training images (0: all)
  std::string data;
  std::string out_dir;

  double lr_at(int iteration) const {
    if (lr_schedule.empty()) return 1e-3;
    for (const auto& s : lr_schedule) {
      if (iteration < s.until) return s.lr;
    }
    return lr_schedule.back().lr;
  }

  void validate() const {
    parse_arch(arch);
    if (precision != "f32" && precision != "f64") throw ConfigError("precision must be f32 or f64, got '" + precision + "'");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (!(k_fraction > 0 && k_fraction <= 1)) throw ConfigError("k_fraction must lie in (0, 1]");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
    if (train_limit < 0) throw ConfigError("train_limit must be >= 0");
    int prev = 0;
    for (const auto& s : lr_schedule) {
      if (s.until <= prev) throw ConfigError("lr_schedule boundaries must be positive and strictly increasing");
      if (!(s.lr > 0)) throw ConfigError("lr_schedule learning rates must be positive");
      prev = s.until;
    }
    if (!lr_schedule.empty() && lr_schedule.back().until < iterations) {
      throw ConfigError("lr_schedule ends at iteration " + std::to_string(lr_schedule.back().until) +
                        " but training runs for " + std::to_string(iterations));
    }
    if (augmentation.gamma && !(augmentation.gamma_strength >= 0 && augmentation.gamma_strength <= 0.5)) {
      throw ConfigError("augmentation.gamma_strength must lie in [0, 0.5]");
    }
  }
};

inline const char* cut_policy_name(CutPolicy p) { return p == CutPolicy::Stages ? "stages" : "none"; }

inline CutPolicy parse_cut_policy(const std::string& s) {
  if (s == "stages") return CutPolicy::Stages;
  if (s == "none") return CutPolicy::None;
  throw ConfigError("cut_points must be 'stages' or 'none', got '" + s + "'");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json sched = nlohmann::json::array();
  for (const auto& s : c.lr_schedule) sched.push_back({s.until, s.lr});
  return {{"arch", c.arch},
          {"precision", c.precision},
          {"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"lr_schedule", sched},
          {"k_fraction", c.k_fraction},
          {"augmentation",
           {{"translate", c.augmentation.translate},
            {"max_shift", c.augmentation.max_shift},
            {"gamma", c.augmentation.gamma},
            {"gamma_strength", c.augmentation.gamma_strength}}},
          {"cut_points", cut_policy_name(c.cut_points)},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"train_limit", c.train_limit},
          {"data", c.data},
          {"out_dir", c.out_dir}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace detail

/// `extra_keys` are tolerated at top level (used by the comparison config).
inline TrainConfig train_config_from_json(const nlohmann::json& j, const std::vector<std::string>& extra_keys = {}) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  std::vector<std::string> known{"arch",      "precision", "batch_size", "iterations", "lr_schedule",
                                 "k_fraction", "augmentation", "cut_points", "seed",    "eval_every",
                                 "train_limit", "data",     "out_dir"};
  known.insert(known.end(), extra_keys.begin(), extra_keys.end());
  detail::reject_unknown(j, known, "training config");
  TrainConfig c;
  try {
    c.arch = j.value("arch", c.arch);
    c.precision = j.value("precision", c.precision);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("lr_schedule")) {
      for (const auto& e : j.at("lr_schedule")) {
        if (!e.is_array() || e.size() != 2) throw ConfigError("lr_schedule entries must be [until_iteration, lr]");
        c.lr_schedule.push_back({e[0].get<int>(), e[1].get<double>()});
      }
    }
    if (j.contains("k_fraction")) {
      const auto& k = j.at("k_fraction");
      c.k_fraction = k.is_string() ? parse_fraction(k.get<std::string>()) : k.get<double>();
    }
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      detail::reject_unknown(a, {"translate", "max_shift", "gamma", "gamma_strength"}, "augmentation");
      c.augmentation.translate = a.value("translate", c.augmentation.translate);
      c.augmentation.max_shift = a.value("max_shift", c.augmentation.max_shift);
      c.augmentation.gamma = a.value("gamma", c.augmentation.gamma);
      c.augmentation.gamma_strength = a.value("gamma_strength", c.augmentation.gamma_strength);
    }
    if (j.contains("cut_points")) c.cut_points = parse_cut_policy(j.at("cut_points").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.train_limit = j.value("train_limit", c.train_limit);
    c.data = j.value("data", c.data);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

template <typename T>
struct Dataset {
  int num_classes = 0;
  std::vector<SegmentationSample<T>> train;
  std::vector<SegmentationSample<T>> val;
};

template <typename T>
Dataset<T> load_dataset(const std::string& dir) {
  const Manifest m = read_manifest(dir);
  return {m.num_classes, load_split<T>(dir, m, "train"), load_split<T>(dir, m, "val")};
}

// ---------------------------------------------------------------- evaluation

/// Per-pixel argmax of the class scores (first maximum wins).
template <typename T>
LabelMap argmax_labels(const Tensor<T>& scores, int batch_index = 0) {
  const Shape& s = scores.shape();
  LabelMap out(s.h, s.w, 0);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    int best = 0;
    T bv = scores.plane(batch_index, 0)[i];
    for (int c = 1; c < s.c; ++c) {
      const T v = scores.plane(batch_index, c)[i];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out.values[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
LabelMap predict(const NetworkSpec& spec, ParamStore<T>& params, const Tensor<T>& image) {
  Tape<T> tape;
  Var<T> x = tape.input(image);
  auto r = forward(spec, params, tape, x, Mode::Infer);
  return argmax_labels(r.logits.value());
}

struct EvalResult {
  ConfusionMatrix cm;
  IoUResult iou;
  std::vector<LabelMap> predictions;
};

template <typename T>
EvalResult evaluate(const NetworkSpec& spec, ParamStore<T>& params,
                    const std::vector<SegmentationSample<T>>& samples, bool keep_predictions = false) {
  EvalResult r{ConfusionMatrix(spec.num_classes), {}, {}};
  for (const auto& s : samples) {
    LabelMap pred = predict(spec, params, s.image);
    accumulate(r.cm, s.labels, pred);
    if (keep_predictions) r.predictions.push_back(std::move(pred));
  }
  r.iou = mean_iou(r.cm);
  return r;
}

inline void write_iou_csv(const IoUResult& iou, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os << "class,iou\n" << std::setprecision(10);
  for (std::size_t c = 0; c < iou.per_class.size(); ++c) {
    os << c << ",";
    if (!std::isnan(iou.per_class[c])) os << iou.per_class[c];
    os << "\n";
  }
  os << "mean," << iou.mean << "\n";
}

/// Evaluates a saved checkpoint on one split of a dataset directory.
template <typename T>
EvalResult evaluate_checkpoint(const std::string& ckpt, const std::string& data_dir, const std::string& split,
                               bool keep_predictions = false) {
  ParamStore<T> params = load_checkpoint<T>(ckpt);
  const auto spec = detect_network(params);
  if (!spec) throw CheckpointError("checkpoint '" + ckpt + "' does not match any known architecture");
  const Manifest m = read_manifest(data_dir);
  if (m.num_classes != spec->num_classes) {
    throw ConfigError("checkpoint predicts " + std::to_string(spec->num_classes) + " classes but dataset has " +
                      std::to_string(m.num_classes));
  }
  const auto samples = load_split<T>(data_dir, m, split);
  if (samples.empty()) throw ConfigError("split '" + split + "' is empty");
  return evaluate(*spec, params, samples, keep_predictions);
}

// ---------------------------------------------------------------- training

struct IterationLog {
  int iteration = 0;
  double lr = 0;
  double loss = 0;
  std::size_t k_used = 0;
  double threshold = 0;
};

struct EvalLog {
  int iteration = 0;  // number of completed iterations
  double mean_iou = 0;
  double best_mean_iou = 0;
};

/// Everything needed to continue a run.
template <typename T>
struct TrainSession {
  NetworkSpec spec;
  ParamStore<T> params;
  int iteration = 0;  // completed iterations
  double best_mean_iou = -1;
  int best_iteration = -1;
};

template <typename T>
TrainSession<T> new_session(const TrainConfig& cfg, int num_classes) {
  TrainSession<T> s;
  s.spec = build_network(parse_arch(cfg.arch), num_classes);
  s.params = init_network<T>(s.spec, cfg.seed);
  return s;
}

template <typename T>
void save_session(const TrainSession<T>& s, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(s.params, (std::filesystem::path(dir) / "last.ckpt").string());
  std::ofstream os(std::filesystem::path(dir) / "state.json");
  if (!os) throw IoError("cannot write state.json in '" + dir + "'");
  os << nlohmann::json{{"iteration", s.iteration},
                       {"best_mean_iou", s.best_mean_iou},
                       {"best_iteration", s.best_iteration},
                       {"arch", s.spec.name}}
            .dump(2)
     << "\n";
}

template <typename T>
TrainSession<T> load_session(const std::string& dir) {
  TrainSession<T> s;
  s.params = load_checkpoint<T>((std::filesystem::path(dir) / "last.ckpt").string());
  const auto spec = detect_network(s.params);
  if (!spec) throw CheckpointError("checkpoint in '" + dir + "' does not match any known architecture");
  s.spec = *spec;
  const auto j = read_json_file((std::filesystem::path(dir) / "state.json").string());
  s.iteration = j.at("iteration").get<int>();
  s.best_mean_iou = j.at("best_mean_iou").get<double>();
  s.best_iteration = j.at("best_iteration").get<int>();
  return s;
}

struct TrainResult {
  std::vector<IterationLog> iterations;
  std::vector<EvalLog> evals;
  double best_mean_iou = -1;
  int best_iteration = -1;
  double seconds = 0;
};

struct TrainHooks {
  std::function<void(const IterationLog&)> on_iteration;
  std::function<void(const EvalLog&)> on_eval;
  /// Stop after this many completed iterations (< cfg.iterations) without
  /// finishing the run; used to exercise resuming.
  int stop_at = -1;
};

inline std::mt19937_64 iteration_rng(std::uint64_t seed, int iteration) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration), 0x46525252u};
  return std::mt19937_64(seq);
}

/// Draws, augments and stacks one batch.
template <typename T>
std::pair<Tensor<T>, std::vector<std::uint8_t>> make_batch(const std::vector<SegmentationSample<T>>& pool,
                                                           const TrainConfig& cfg, int iteration) {
  auto rng = iteration_rng(cfg.seed, iteration);
  const Shape one = pool.front().image.shape();
  Tensor<T> images(Shape{cfg.batch_size, 3, one.h, one.w});
  std::vector<std::uint8_t> labels;
  labels.reserve(static_cast<std::size_t>(cfg.batch_size) * one.plane());
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (int b = 0; b < cfg.batch_size; ++b) {
    const auto& src = pool[pick(rng)];
    if (!(src.image.shape() == one)) throw ShapeError("training images must share one size");
    const SegmentationSample<T> s = augment(src, cfg.augmentation, rng);
    std::copy(s.image.data(), s.image.data() + s.image.size(), images.plane(b, 0));
    labels.insert(labels.end(), s.labels.values.begin(), s.labels.values.end());
  }
  return {std::move(images), std::move(labels)};
}

/// One optimization step; returns the loss report.
template <typename T>
LossReport train_step(TrainSession<T>& s, const TrainConfig& cfg, const Tensor<T>& images,
                      std::span<const std::uint8_t> labels, double lr, MemoryStats* stats = nullptr) {
  const Shape& in = images.shape();
  Tape<T> tape;
  Var<T> x = tape.input(images);
  ForwardOptions opts{cfg.cut_points == CutPolicy::Stages};
  auto r = forward(s.spec, s.params, tape, x, Mode::Train, opts);
  r.probs.reset();
  const std::size_t k = k_schedule(in.h, in.w, cfg.k_fraction) * static_cast<std::size_t>(in.n);
  auto node = bootstrapped_ce_logits(tape, r.logits, labels, k);
  if (!std::isfinite(node.report->loss)) throw NumericError("non-finite loss");
  s.params.zero_grad();
  if (cfg.cut_points == CutPolicy::Stages) {
    tape.backward_checkpointed(node.loss);
  } else {
    tape.backward_full(node.loss);
  }
  if (stats != nullptr) *stats = tape.stats();
  adam_step(s.params, AdamConfig{lr});
  return *node.report;
}

namespace detail {

inline std::ofstream open_log(const std::string& path, const char* header, bool append) {
  const bool fresh = !append || !std::filesystem::exists(path);
  std::ofstream os(path, fresh ? std::ios::out : std::ios::app);
  if (!os) throw IoError("cannot write '" + path + "'");
  if (fresh) os << header << "\n";
  os << std::setprecision(17);
  return os;
}

}  // namespace detail

/// Runs (or continues) training until cfg.iterations. When cfg.out_dir is
/// set, writes train_log.csv, val_log.csv, best.ckpt, last.ckpt and
/// state.json there.
template <typename T>
TrainResult train(const TrainConfig& cfg, const Dataset<T>& data, TrainSession<T>& s, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("training split is empty");
  if (s.spec.num_classes != data.num_classes) {
    throw ConfigError("network predicts " + std::to_string(s.spec.num_classes) + " classes but dataset has " +
                      std::to_string(data.num_classes));
  }
  std::vector<SegmentationSample<T>> subset;
  const auto* pool = &data.train;
  if (cfg.train_limit > 0 && static_cast<std::size_t>(cfg.train_limit) < data.train.size()) {
    subset.assign(data.train.begin(), data.train.begin() + cfg.train_limit);
    pool = &subset;
  }

  const bool files = !cfg.out_dir.empty();
  std::ofstream train_log, val_log;
  if (files) {
    std::filesystem::create_directories(cfg.out_dir);
    const bool append = s.iteration > 0;
    train_log = detail::open_log((std::filesystem::path(cfg.out_dir) / "train_log.csv").string(),
                                 "iteration,lr,loss,k,threshold", append);
    val_log = detail::open_log((std::filesystem::path(cfg.out_dir) / "val_log.csv").string(),
                               "iteration,mean_iou,best_mean_iou", append);
  }

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  const int end = hooks.stop_at >= 0 ? std::min(hooks.stop_at, cfg.iterations) : cfg.iterations;
  while (s.iteration < end) {
    const int it = s.iteration;
    auto [images, labels] = make_batch(*pool, cfg, it);
    const double lr = cfg.lr_at(it);
    LossReport rep;
    try {
      rep = train_step(s, cfg, images, labels, lr);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at iteration " + std::to_string(it) + " (lr " + std::to_string(lr) +
                         "): " + e.what());
    }
    ++s.iteration;
    IterationLog log{it, lr, rep.loss, rep.k_used, rep.threshold};
    result.iterations.push_back(log);
    if (files) train_log << it << "," << lr << "," << rep.loss << "," << rep.k_used << "," << rep.threshold << "\n";
    if (hooks.on_iteration) hooks.on_iteration(log);

    const bool eval_now = !data.val.empty() && cfg.eval_every > 0 &&
                          (s.iteration % cfg.eval_every == 0 || s.iteration == cfg.iterations);
    if (eval_now) {
      const double miou = evaluate(s.spec, s.params, data.val).iou.mean;
      if (miou > s.best_mean_iou) {
        s.best_mean_iou = miou;
        s.best_iteration = s.iteration;
        if (files) save_checkpoint(s.params, (std::filesystem::path(cfg.out_dir) / "best.ckpt").string());
      }
      EvalLog ev{s.iteration, miou, s.best_mean_iou};
      result.evals.push_back(ev);
      if (files) val_log << ev.iteration << "," << ev.mean_iou << "," << ev.best_mean_iou << std::endl;
      if (hooks.on_eval) hooks.on_eval(ev);
    }
  }
  if (files) save_session(s, cfg.out_dir);
  result.best_mean_iou = s.best_mean_iou;
  result.best_iteration = s.best_iteration;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

template <typename T>
TrainResult train(const TrainConfig& cfg, const Dataset<T>& data, const TrainHooks& hooks = {}) {
  auto s = new_session<T>(cfg, data.num_classes);
  return train(cfg, data, s, hooks);
}

// ---------------------------------------------------------------- comparison

struct CompareConfig {
  TrainConfig base;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> archs{"frrn-a-mini", "resnet-baseline-mini"};
};

inline CompareConfig compare_config_from_json(const nlohmann::json& j) {
  CompareConfig c;
  c.base = train_config_from_json(j, {"seeds", "archs"});
  try {
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("archs")) c.archs = j.at("archs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid comparison config: ") + e.what());
  }
  if (c.seeds.size() < 3) throw ConfigError("comparison needs at least 3 seeds");
  if (c.archs.size() < 2) throw ConfigError("comparison needs at least 2 architectures");
  for (const auto& a : c.archs) parse_arch(a);
  return c;
}

struct CompareRun {
  std::string arch;
  std::uint64_t seed = 0;
  double best_mean_iou = 0;
  double seconds = 0;
  /// (iteration, best mean IoU up to that iteration)
  std::vector<std::pair<int, double>> best_so_far;
};

struct CompareReport {
  std::vector<CompareRun> runs;
  std::map<std::string, std::size_t> params;            // trained (mini) networks
  std::map<std::string, std::size_t> params_full_scale;  // full-width counterparts, 19 classes
  std::map<std::string, double> mean_best_iou;

  /// Seeds on which `a` scored at least as high as `b`.
  int seeds_won(const std::string& a, const std::string& b) const {
    int wins = 0;
    for (const auto& ra : runs) {
      if (ra.arch != a) continue;
      for (const auto& rb : runs) {
        if (rb.arch == b && rb.seed == ra.seed && ra.best_mean_iou >= rb.best_mean_iou) ++wins;
      }
    }
    return wins;
  }
};

inline Arch full_scale(Arch a) {
  switch (a) {
    case Arch::FrrnAMini: return Arch::FrrnA;
    case Arch::FrrnBMini: return Arch::FrrnB;
    case Arch::ResnetBaselineMini: return Arch::ResnetBaseline;
    default: return a;
  }
}

template <typename T>
CompareReport compare_baseline(const CompareConfig& cfg, const Dataset<T>& data,
                               const std::function<void(const std::string&)>& progress = {}) {
  CompareReport report;
  for (const auto& arch : cfg.archs) {
    const Arch a = parse_arch(arch);
    report.params[arch] = count_parameters(build_network(a, data.num_classes));
    report.params_full_scale[arch] = count_parameters(build_network(full_scale(a), 19));
    double sum = 0;
    for (std::uint64_t seed : cfg.seeds) {
      TrainConfig tc = cfg.base;
      tc.arch = arch;
      tc.seed = seed;
      if (!cfg.base.out_dir.empty()) {
        tc.out_dir = (std::filesystem::path(cfg.base.out_dir) / (arch + "_seed" + std::to_string(seed))).string();
      }
      TrainResult r = train(tc, data);
      CompareRun run{arch, seed, r.best_mean_iou, r.seconds, {}};
      double best = -1;
      for (const auto& e : r.evals) {
        best = std::max(best, e.mean_iou);
        run.best_so_far.emplace_back(e.iteration, best);
      }
      sum += r.best_mean_iou;
      if (progress) {
        std::ostringstream msg;
        msg << arch << " seed " << seed << ": best val mean IoU " << std::fixed << std::setprecision(4)
            << r.best_mean_iou << " (" << std::setprecision(1) << r.seconds << " s)";
        progress(msg.str());
      }
      report.runs.push_back(std::move(run));
    }
    report.mean_best_iou[arch] = sum / static_cast<double>(cfg.seeds.size());
  }
  return report;
}

inline nlohmann::json to_json(const CompareReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"arch", run.arch}, {"seed", run.seed}, {"best_mean_iou", run.best_mean_iou}, {"seconds", run.seconds}});
  }
  return {{"runs", runs}, {"params", r.params}, {"params_full_scale", r.params_full_scale}, {"mean_best_iou", r.mean_best_iou}};
}

/// compare_summary.json, compare_runs.csv and compare_curves.csv.
inline void write_compare_report(const CompareReport& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "compare_summary.json");
    if (!os) throw IoError("cannot write comparison report in '" + dir + "'");
    os << to_json(r).dump(2) << "\n";
  }
  std::ofstream runs(fs::path(dir) / "compare_runs.csv");
  runs << "arch,seed,params,best_mean_iou\n" << std::setprecision(10);
  for (const auto& run : r.runs) runs << run.arch << "," << run.seed << "," << r.params.at(run.arch) << "," << run.best_mean_iou << "\n";
  std::ofstream curves(fs::path(dir) / "compare_curves.csv");
  curves << "arch,seed,iteration,best_mean_iou\n" << std::setprecision(10);
  for (const auto& run : r.runs) {
    for (const auto& [it, v] : run.best_so_far) curves << run.arch << "," << run.seed << "," << it << "," << v << "\n";
  }
}

}  // namespace frrn
