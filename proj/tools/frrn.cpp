// frrn: command-line front end.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error. Failures print a
// single "error: ..." line on stderr.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "frrn/frrn.hpp"
#include "frrn/gradcheck.hpp"
#include "frrn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string precision = "f32";
  bool precision_set = false;
  int threads = 1;
};

void print_config(const json& cfg) { std::cout << "# config " << cfg.dump() << std::endl; }

json globals_json(const Globals& g) {
  json j{{"precision", g.precision}, {"threads", g.threads}, {"effective_threads", 1}};
  j["seed"] = g.seed ? json(*g.seed) : json(nullptr);
  return j;
}

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("--size expects HEIGHTxWIDTH, got '" + s + "'");
  }
}

/// "1,2,4,8" or with an ellipsis continuing the pattern: "1,2,4,...,80"
/// (doubling) or "1,3,5,...,15" (constant step). The end value is included.
std::vector<int> parse_radii(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
  std::vector<int> out;
  try {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i] != "...") {
        out.push_back(std::stoi(parts[i]));
        continue;
      }
      if (out.size() < 2 || i + 1 != parts.size() - 1) throw UsageError("'...' needs two values before it and one after");
      const int end = std::stoi(parts[i + 1]);
      const int a = out[out.size() - 2], b = out.back();
      const bool geometric = a > 0 && b % a == 0 && b / a > 1 && (out.size() < 3 || out[out.size() - 3] * (b / a) == a);
      for (int next = geometric ? b * (b / a) : b + (b - a); next < end && next > out.back(); next = geometric ? next * (b / a) : next + (b - a)) {
        out.push_back(next);
      }
      out.push_back(end);
      break;
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("invalid --radii '" + text + "'");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 1 || (i > 0 && out[i] <= out[i - 1])) throw UsageError("--radii must be positive and strictly increasing");
  }
  return out;
}

// ------------------------------------------------------------------ commands

int cmd_gen_data(const Globals& g, const std::string& out, int n_train, int n_val, const std::string& size,
                 int classes, double noise, int min_shapes, int max_shapes) {
  frrn::SyntheticSceneConfig cfg;
  std::tie(cfg.height, cfg.width) = parse_size(size);
  cfg.num_classes = classes;
  cfg.noise_stddev = noise;
  cfg.min_shapes = min_shapes;
  cfg.max_shapes = max_shapes;
  cfg.seed = g.seed.value_or(7);
  if (min_shapes < 1 || max_shapes < min_shapes) throw frrn::ConfigError("need 1 <= --min-shapes <= --max-shapes");
  json resolved{{"command", "gen-data"}, {"out", out},      {"train", n_train},      {"val", n_val},
                {"height", cfg.height},  {"width", cfg.width}, {"classes", classes}, {"noise", noise},
                {"min_shapes", min_shapes}, {"max_shapes", max_shapes}, {"seed", cfg.seed}};
  print_config(resolved);
  const auto m = frrn::generate_dataset(cfg, n_train, n_val, out);
  std::cout << "wrote " << m.train.size() << " train and " << m.val.size() << " val samples to " << out << "\n";
  return 0;
}

template <typename T>
int run_train(frrn::TrainConfig cfg, bool resume) {
  if (cfg.data.empty()) throw frrn::ConfigError("training config needs 'data' (dataset directory)");
  const auto data = frrn::load_dataset<T>(cfg.data);
  frrn::TrainSession<T> session;
  if (resume) {
    if (cfg.out_dir.empty()) throw frrn::ConfigError("--resume needs 'out_dir'");
    session = frrn::load_session<T>(cfg.out_dir);
    if (session.spec.name != cfg.arch) {
      throw frrn::ConfigError("saved session is " + session.spec.name + " but config asks for " + cfg.arch);
    }
    std::cout << "resuming at iteration " << session.iteration << "\n";
  } else {
    session = frrn::new_session<T>(cfg, data.num_classes);
  }
  std::cout << cfg.arch << ": " << frrn::count_parameters(session.spec) << " parameters, " << data.train.size()
            << " train / " << data.val.size() << " val samples\n";
  frrn::TrainHooks hooks;
  const int every = std::max(1, cfg.iterations / 50);
  hooks.on_iteration = [every](const frrn::IterationLog& l) {
    if (l.iteration % every == 0) {
      std::cout << "iter " << l.iteration << " lr " << l.lr << " loss " << std::setprecision(6) << l.loss << std::endl;
    }
  };
  hooks.on_eval = [](const frrn::EvalLog& e) {
    std::cout << "eval " << e.iteration << " mean_iou " << std::setprecision(6) << e.mean_iou << " best "
              << e.best_mean_iou << std::endl;
  };
  const auto r = frrn::train(cfg, data, session, hooks);
  std::cout << "done: " << r.iterations.size() << " iterations in " << std::setprecision(4) << r.seconds
            << " s, best val mean IoU " << r.best_mean_iou << " at iteration " << r.best_iteration << "\n";
  return 0;
}

frrn::TrainConfig resolve_train_config(const Globals& g, const std::string& path, const std::string& data,
                                       const std::string& out_dir, int iterations, json* raw = nullptr) {
  json j = frrn::read_json_file(path);
  if (raw) *raw = j;
  frrn::TrainConfig cfg = frrn::train_config_from_json(j, raw ? std::vector<std::string>{"seeds", "archs"} : std::vector<std::string>{});
  if (g.seed) cfg.seed = *g.seed;
  if (g.precision_set) cfg.precision = g.precision;
  if (!data.empty()) cfg.data = data;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (iterations >= 0) {
    cfg.iterations = iterations;
    if (!cfg.lr_schedule.empty() && cfg.lr_schedule.back().until < iterations) cfg.lr_schedule.back().until = iterations;
  }
  cfg.validate();
  return cfg;
}

int cmd_train(const Globals& g, const std::string& config, const std::string& data, const std::string& out_dir,
              int iterations, bool resume) {
  auto cfg = resolve_train_config(g, config, data, out_dir, iterations);
  json resolved = frrn::to_json(cfg);
  resolved["command"] = "train";
  resolved["resume"] = resume;
  resolved["threads"] = g.threads;
  print_config(resolved);
  return cfg.precision == "f64" ? run_train<double>(cfg, resume) : run_train<float>(cfg, resume);
}

template <typename T>
int run_eval(const std::string& ckpt, const std::string& data, const std::string& split, const std::string& out,
             const std::string& pred_dir) {
  const auto r = frrn::evaluate_checkpoint<T>(ckpt, data, split, !pred_dir.empty());
  std::cout << "mean_iou " << std::setprecision(6) << r.iou.mean << "\n";
  for (std::size_t c = 0; c < r.iou.per_class.size(); ++c) std::cout << "class " << c << " iou " << r.iou.per_class[c] << "\n";
  if (!out.empty()) frrn::write_iou_csv(r.iou, out);
  if (!pred_dir.empty()) {
    fs::create_directories(pred_dir);
    const auto m = frrn::read_manifest(data);
    const auto& entries = m.split(split);
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
      frrn::save_label(r.predictions[i], (fs::path(pred_dir) / fs::path(entries[i].label).filename()).string());
    }
  }
  return 0;
}

int cmd_eval(const Globals& g, const std::string& ckpt, const std::string& data, const std::string& split,
             const std::string& out, const std::string& pred_dir) {
  print_config({{"command", "eval"}, {"ckpt", ckpt}, {"data", data}, {"split", split}, {"out", out},
                {"pred_dir", pred_dir}, {"globals", globals_json(g)}});
  return g.precision == "f64" ? run_eval<double>(ckpt, data, split, out, pred_dir)
                              : run_eval<float>(ckpt, data, split, out, pred_dir);
}

std::vector<std::uint8_t> read_mapping(const std::string& path) {
  const json j = frrn::read_json_file(path);
  try {
    const auto m = j.at("mapping").get<std::vector<int>>();
    std::vector<std::uint8_t> out;
    for (int v : m) {
      if (v < 0 || v >= 255) throw frrn::ConfigError("mapping values must lie in [0, 254]");
      out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
  } catch (const json::exception& e) {
    throw frrn::ConfigError("mapping file '" + path + "' needs {\"mapping\": [category of class 0, ...]}: " + e.what());
  }
}

int cmd_trimap(const Globals& g, const std::string& gt_dir, const std::string& pred_dir, const std::string& radii_text,
               const std::string& out, int classes, const std::string& mapping_path) {
  const auto radii = parse_radii(radii_text);
  print_config({{"command", "trimap"}, {"gt", gt_dir}, {"pred", pred_dir}, {"radii", radii}, {"out", out},
                {"classes", classes}, {"mapping", mapping_path}, {"globals", globals_json(g)}});
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.path().extension() == ".pgm") files.push_back(e.path().filename());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw frrn::IoError("no .pgm label maps in '" + gt_dir + "'");
  std::vector<std::uint8_t> mapping;
  if (!mapping_path.empty()) mapping = read_mapping(mapping_path);
  std::vector<std::pair<frrn::LabelMap, frrn::LabelMap>> pairs;
  int max_label = -1;
  for (const auto& f : files) {
    const auto pred_path = fs::path(pred_dir) / f;
    if (!fs::exists(pred_path)) throw frrn::IoError("missing prediction '" + pred_path.string() + "'");
    auto gt = frrn::load_label((fs::path(gt_dir) / f).string());
    auto pred = frrn::load_label(pred_path.string());
    if (!mapping.empty()) {
      gt = frrn::remap_labels(gt, mapping);
      pred = frrn::remap_labels(pred, mapping);
    }
    for (auto v : gt.values) if (v != frrn::kVoidLabel) max_label = std::max<int>(max_label, v);
    for (auto v : pred.values) if (v != frrn::kVoidLabel) max_label = std::max<int>(max_label, v);
    pairs.emplace_back(std::move(gt), std::move(pred));
  }
  if (classes <= 0) classes = max_label + 1;
  if (classes < 1) throw frrn::ConfigError("no labelled pixels found");
  frrn::TrimapAccumulator acc(radii, classes);
  frrn::ConfusionMatrix global(classes);
  for (const auto& [gt, pred] : pairs) {
    acc.add(gt, pred);
    frrn::accumulate(global, gt, pred);
  }
  std::ofstream csv;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    csv.open(out);
    if (!csv) throw frrn::IoError("cannot write '" + out + "'");
    os = &csv;
  }
  *os << "radius,pixels,mean_iou\n" << std::setprecision(10);
  const auto curve = acc.curve();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    *os << curve[i].first << "," << acc.matrices()[i].total() << "," << curve[i].second << "\n";
  }
  std::cout << "global mean_iou " << frrn::mean_iou_or_nan(global) << " over " << pairs.size() << " images\n";
  return 0;
}

template <typename T>
int run_compare(const frrn::CompareConfig& cfg) {
  if (cfg.base.data.empty()) throw frrn::ConfigError("comparison config needs 'data'");
  const auto data = frrn::load_dataset<T>(cfg.base.data);
  const auto report = frrn::compare_baseline(cfg, data, [](const std::string& msg) { std::cout << msg << std::endl; });
  for (const auto& [arch, v] : report.mean_best_iou) {
    std::cout << arch << ": params " << report.params.at(arch) << " (full scale " << report.params_full_scale.at(arch)
              << "), mean best val IoU " << std::setprecision(4) << v << "\n";
  }
  if (cfg.archs.size() >= 2) {
    std::cout << cfg.archs[0] << " >= " << cfg.archs[1] << " on " << report.seeds_won(cfg.archs[0], cfg.archs[1])
              << " of " << cfg.seeds.size() << " seeds\n";
  }
  if (!cfg.base.out_dir.empty()) {
    frrn::write_compare_report(report, cfg.base.out_dir);
    std::cout << "report written to " << cfg.base.out_dir << "\n";
  }
  return 0;
}

int cmd_compare(const Globals& g, const std::string& config, const std::string& data, const std::string& out_dir,
                int iterations) {
  json raw;
  auto base = resolve_train_config(g, config, data, out_dir, iterations, &raw);
  auto cfg = frrn::compare_config_from_json(raw);
  cfg.base = base;
  json resolved = frrn::to_json(cfg.base);
  resolved["command"] = "compare";
  resolved["seeds"] = cfg.seeds;
  resolved["archs"] = cfg.archs;
  print_config(resolved);
  return cfg.base.precision == "f64" ? run_compare<double>(cfg) : run_compare<float>(cfg);
}

int cmd_params(const Globals& g, const std::string& arch, int classes, bool table) {
  print_config({{"command", "params"}, {"arch", arch}, {"classes", classes}, {"globals", globals_json(g)}});
  const auto spec = frrn::build_network(frrn::parse_arch(arch), classes);
  if (table) {
    for (const auto& [stage, n] : frrn::parameter_table(spec)) std::cout << std::left << std::setw(12) << stage << n << "\n";
  }
  const std::size_t total = frrn::count_parameters(spec);
  std::cout << "total " << total << " (" << std::fixed << std::setprecision(2) << total / 1e6 << "M)\n";
  return 0;
}

int cmd_gradcheck(const Globals& g, const std::string& ops_text, int trials, bool inject_fault) {
  std::vector<std::string> ops;
  if (ops_text == "all") {
    ops = frrn::gradcheck_ops();
  } else {
    std::stringstream ss(ops_text);
    for (std::string op; std::getline(ss, op, ',');) {
      if (!frrn::is_gradcheck_op(op) || op == "faulty_relu") throw UsageError("unknown op '" + op + "'");
      ops.push_back(op);
    }
  }
  if (inject_fault) {
    for (auto& op : ops) {
      if (op == "relu") op = "faulty_relu";
    }
    if (std::find(ops.begin(), ops.end(), "faulty_relu") == ops.end()) ops.push_back("faulty_relu");
  }
  if (trials < 1) throw UsageError("--trials must be >= 1");
  const std::uint64_t seed = g.seed.value_or(1);
  print_config({{"command", "gradcheck"}, {"ops", ops}, {"trials", trials}, {"seed", seed}, {"precision", "f64"},
                {"step", frrn::kGradcheckStep}, {"tolerance", frrn::kGradcheckTolerance}});
  std::cout << "op,trials,coordinates,max_rel_error,status\n";
  bool ok = true;
  for (const auto& op : ops) {
    const auto r = frrn::gradcheck_op(op, trials, seed);
    std::cout << op << "," << r.trials << "," << r.checked_coordinates << "," << std::scientific << std::setprecision(3)
              << r.max_rel_error << std::defaultfloat << "," << (r.passed ? "pass" : "FAIL") << "\n";
    ok = ok && r.passed;
  }
  if (!ok) {
    std::cerr << "error: gradient check failed (max relative error above " << frrn::kGradcheckTolerance << ")\n";
    return 1;
  }
  return 0;
}

int cmd_gamma_demo(const Globals& g, double a, int samples, double lo, double hi, const std::string& out) {
  if (samples < 1) throw UsageError("--samples must be >= 1");
  const std::uint64_t seed = g.seed.value_or(1);
  print_config({{"command", "gamma-demo"}, {"a", a}, {"samples", samples}, {"naive_lo", lo}, {"naive_hi", hi},
                {"seed", seed}, {"out", out}});
  frrn::GammaSampler sampler(a, seed);
  std::mt19937_64 naive_rng(seed + 1);
  std::ofstream per_sample;
  if (!out.empty()) {
    per_sample.open(out);
    if (!per_sample) throw frrn::IoError("cannot write '" + out + "'");
    per_sample << "sample,z,gamma,u,naive_gamma,naive_u\n" << std::setprecision(12);
  }
  double sum_u = 0, sum_naive = 0;
  for (int i = 0; i < samples; ++i) {
    const double z = sampler.sample_offset();
    const double gamma = frrn::gamma_from_offset(z);
    const double u = frrn::gamma_fixed_point(gamma);
    const double ng = frrn::naive_gamma(lo, hi, naive_rng);
    const double nu = frrn::gamma_fixed_point(ng);
    sum_u += u;
    sum_naive += nu;
    if (per_sample.is_open()) per_sample << i << "," << z << "," << gamma << "," << u << "," << ng << "," << nu << "\n";
  }
  const double mu = sum_u / samples, mn = sum_naive / samples;
  std::cout << "scheme,samples,mean_u,abs_bias\n" << std::setprecision(6);
  std::cout << "corrected," << samples << "," << mu << "," << std::abs(mu - 0.5) << "\n";
  std::cout << "naive," << samples << "," << mn << "," << std::abs(mn - 0.5) << "\n";
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-resolution residual networks: data generation, training, evaluation and checks", "frrn"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides config files)");
  auto* prec_opt = app.add_option("--precision", g.precision, "Floating-point precision")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--threads", g.threads, "Worker threads (kernels run single-threaded; accepted for compatibility)")
      ->check(CLI::PositiveNumber);

  std::function<int()> action;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic street-like segmentation dataset");
  std::string gen_out, gen_size = "64x128";
  int gen_train = 200, gen_val = 40, gen_classes = 6, gen_min = 2, gen_max = 5;
  double gen_noise = 0.04;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--train", gen_train, "Training samples")->capture_default_str();
  gen->add_option("--val", gen_val, "Validation samples")->capture_default_str();
  gen->add_option("--size", gen_size, "Image size HEIGHTxWIDTH")->capture_default_str();
  gen->add_option("--classes", gen_classes, "Number of classes (2..8)")->capture_default_str();
  gen->add_option("--noise", gen_noise, "Gaussian pixel noise stddev (intensity units)")->capture_default_str();
  gen->add_option("--min-shapes", gen_min, "Minimum objects per image")->capture_default_str();
  gen->add_option("--max-shapes", gen_max, "Maximum objects per image")->capture_default_str();
  gen->callback([&] { action = [&] { return cmd_gen_data(g, gen_out, gen_train, gen_val, gen_size, gen_classes, gen_noise, gen_min, gen_max); }; });

  auto* tr = app.add_subcommand("train", "Train a network from a JSON config");
  std::string tr_config, tr_data, tr_out;
  int tr_iters = -1;
  bool tr_resume = false;
  tr->add_option("--config", tr_config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  tr->add_option("--data", tr_data, "Dataset directory (overrides config)");
  tr->add_option("--out-dir", tr_out, "Output directory (overrides config)");
  tr->add_option("--iterations", tr_iters, "Iteration count (overrides config)");
  tr->add_flag("--resume", tr_resume, "Continue from last.ckpt/state.json in the output directory");
  tr->callback([&] { action = [&] { return cmd_train(g, tr_config, tr_data, tr_out, tr_iters, tr_resume); }; });

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  std::string ev_ckpt, ev_data, ev_split = "val", ev_out, ev_pred;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", ev_split, "train or val")->check(CLI::IsMember({"train", "val"}))->capture_default_str();
  ev->add_option("--out", ev_out, "Per-class IoU CSV");
  ev->add_option("--pred-dir", ev_pred, "Directory for predicted label maps (PGM)");
  ev->callback([&] { action = [&] { return cmd_eval(g, ev_ckpt, ev_data, ev_split, ev_out, ev_pred); }; });

  auto* tm = app.add_subcommand("trimap", "Mean IoU within boundary bands of growing width");
  std::string tm_gt, tm_pred, tm_radii = "1,2,4,...,80", tm_out, tm_mapping;
  int tm_classes = 0;
  tm->add_option("--gt", tm_gt, "Directory of ground-truth label maps (PGM)")->required()->check(CLI::ExistingDirectory);
  tm->add_option("--pred", tm_pred, "Directory of predicted label maps with matching names")->required()->check(CLI::ExistingDirectory);
  tm->add_option("--radii", tm_radii, "Band radii, e.g. 1,2,4,...,80")->capture_default_str();
  tm->add_option("--out", tm_out, "CSV output (stdout if omitted)");
  tm->add_option("--classes", tm_classes, "Number of classes (default: largest label + 1)");
  tm->add_option("--mapping", tm_mapping, "JSON class-to-category mapping for category-level curves")->check(CLI::ExistingFile);
  tm->callback([&] { action = [&] { return cmd_trimap(g, tm_gt, tm_pred, tm_radii, tm_out, tm_classes, tm_mapping); }; });

  auto* cmp = app.add_subcommand("compare", "Train FRRN and baseline on several seeds and compare");
  std::string cmp_config, cmp_data, cmp_out;
  int cmp_iters = -1;
  cmp->add_option("--config", cmp_config, "Comparison config (JSON)")->required()->check(CLI::ExistingFile);
  cmp->add_option("--data", cmp_data, "Dataset directory (overrides config)");
  cmp->add_option("--out-dir", cmp_out, "Output directory (overrides config)");
  cmp->add_option("--iterations", cmp_iters, "Iteration budget per run (overrides config)");
  cmp->callback([&] { action = [&] { return cmd_compare(g, cmp_config, cmp_data, cmp_out, cmp_iters); }; });

  auto* prm = app.add_subcommand("params", "Print the parameter count of an architecture");
  std::string prm_arch;
  int prm_classes = 19;
  bool prm_table = false;
  prm->add_option("--arch", prm_arch, "frrn-a, frrn-b, frrn-a-mini, frrn-b-mini, resnet-baseline, resnet-baseline-mini")->required();
  prm->add_option("--classes", prm_classes, "Number of classes")->capture_default_str()->check(CLI::Range(2, 255));
  prm->add_flag("--table", prm_table, "Also print per-stage totals");
  prm->callback([&] { action = [&] { return cmd_params(g, prm_arch, prm_classes, prm_table); }; });

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  std::string gc_ops = "all";
  int gc_trials = 10;
  bool gc_fault = false;
  gc->add_option("--ops", gc_ops, "'all' or a comma-separated list of ops")->capture_default_str();
  gc->add_option("--trials", gc_trials, "Random trials per op")->capture_default_str();
  gc->add_flag("--inject-fault", gc_fault, "Replace relu by a copy with a wrong backward (self-test)");
  gc->callback([&] { action = [&] { return cmd_gradcheck(g, gc_ops, gc_trials, gc_fault); }; });

  auto* gd = app.add_subcommand("gamma-demo", "Bias of the gamma augmentation schemes");
  double gd_a = 0.35, gd_lo = 0.25, gd_hi = 1.75;
  int gd_samples = 100000;
  std::string gd_out;
  gd->add_option("--a", gd_a, "Strength a of Z ~ U[-a, a], in [0, 0.5]")->capture_default_str();
  gd->add_option("--samples", gd_samples, "Number of samples")->capture_default_str();
  gd->add_option("--naive-lo", gd_lo, "Lower bound of the naive gamma ~ U[lo, hi]")->capture_default_str();
  gd->add_option("--naive-hi", gd_hi, "Upper bound of the naive gamma ~ U[lo, hi]")->capture_default_str();
  gd->add_option("--out", gd_out, "Per-sample CSV");
  gd->callback([&] { action = [&] { return cmd_gamma_demo(g, gd_a, gd_samples, gd_lo, gd_hi, gd_out); }; });

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;
  g.precision_set = prec_opt->count() > 0;

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const frrn::ConfigError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
}
