// Acceptance checks. Each criterion prints one line:
//   criterion N: PASS|FAIL  <measurements>
// and the process exits non-zero if any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <sstream>

#include "frrn/frrn.hpp"

using namespace frrn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// Work directory shared by the data-driven criteria.
fs::path g_work;

std::string ensure_dataset(int n_train, int n_val) {
  const fs::path dir = g_work / ("synthetic_" + std::to_string(n_train) + "_" + std::to_string(n_val));
  if (!fs::exists(dir / "manifest.json")) {
    SyntheticSceneConfig cfg;  // 64x128, 6 classes, seed 7
    generate_dataset(cfg, n_train, n_val, dir.string());
  }
  return dir.string();
}

// 1 --------------------------------------------------------------- gradients
Outcome gradients() {
  Stopwatch sw;
  double worst = 0;
  std::string worst_op;
  bool ok = true;
  int ops = 0, coords = 0;
  for (const auto& op : gradcheck_ops()) {
    const auto r = gradcheck_op(op, 100, 1);
    ++ops;
    coords += r.checked_coordinates;
    ok = ok && r.passed && r.trials >= 100;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_op = op;
    }
  }
  const auto fault = gradcheck_op("faulty_relu", 10, 1);
  const double t = sw.seconds();
  ok = ok && !fault.passed && t < 120;
  return {ok, std::to_string(ops) + " ops x 100 trials, " + std::to_string(coords) + " coordinates, max rel err " +
                  fmt(worst, 3) + " (" + worst_op + ") <= 1e-4; injected fault detected (" + fmt(fault.max_rel_error, 3) +
                  "); " + fmt(t, 3) + " s"};
}

// 2 ----------------------------------------------------------- checkpointing
Outcome checkpointing() {
  Stopwatch sw;
  const auto spec = build_network(Arch::FrrnAMini, 6);
  std::mt19937_64 rng(5);
  const auto input = Tensor<double>::uniform(Shape{2, 3, 64, 128}, rng, 0.0, 1.0);
  std::vector<std::uint8_t> labels(input.shape().n * input.shape().plane());
  for (auto& l : labels) l = rng() % 10 == 0 ? kVoidLabel : static_cast<std::uint8_t>(rng() % 6);
  std::vector<Tensor<double>> grads[2];
  MemoryStats stats[2];
  std::size_t cuts = 0;
  for (int mode = 0; mode < 2; ++mode) {
    auto p = init_network<double>(spec, 9);
    Tape<double> tape;
    Var<double> x = tape.input(input);
    auto r = forward(spec, p, tape, x, Mode::Train, ForwardOptions{mode == 1});
    r.probs.reset();
    auto loss = bootstrapped_ce_logits(tape, r.logits, labels, k_schedule(64, 128, 0.125) * 2);
    r.logits.reset();
    if (mode == 0) {
      tape.backward_full(loss.loss);
    } else {
      cuts = tape.cut_points().size();
      tape.backward_checkpointed(loss.loss);
    }
    stats[mode] = tape.stats();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i].trainable) grads[mode].push_back(p[i].grad);
    }
  }
  bool equal = grads[0].size() == grads[1].size();
  for (std::size_t i = 0; equal && i < grads[0].size(); ++i) equal = grads[0][i] == grads[1][i];
  const double ratio = static_cast<double>(stats[1].peak) / static_cast<double>(stats[0].peak);
  const double t = sw.seconds();
  const bool ok = equal && stats[1].peak < stats[0].peak && t < 60;
  return {ok, std::string(equal ? "gradients bit-identical" : "gradients DIFFER") + " over " +
                  std::to_string(grads[0].size()) + " tensors; " + std::to_string(cuts + 1) + " blocks; peak activations " +
                  std::to_string(stats[1].peak) + " vs " + std::to_string(stats[0].peak) + " scalars (ratio " +
                  fmt(ratio, 3) + "); " + fmt(t, 3) + " s"};
}

// 3 --------------------------------------------------------- parameter counts
Outcome parameter_counts() {
  const double a = static_cast<double>(count_parameters(build_frrn_a(19)));
  const double b = static_cast<double>(count_parameters(build_resnet_baseline(19)));
  const bool ok = std::abs(a - 17.7e6) <= 0.05 * 17.7e6 && std::abs(b - 16.7e6) <= 0.05 * 16.7e6 && a > b;
  return {ok, "frrn-a " + std::to_string(static_cast<long>(a)) + " (17.7M +- 5%), resnet-baseline " +
                  std::to_string(static_cast<long>(b)) + " (16.7M +- 5%)"};
}

// 4 ------------------------------------------------------- bootstrapped loss
Outcome bootstrap_oracle() {
  Stopwatch sw;
  std::mt19937_64 rng(2017);
  int mismatched = 0, non_monotone = 0;
  double max_err = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int c = 2 + static_cast<int>(rng() % 6);
    const int h = 1 + static_cast<int>(rng() % 100), w = 1 + static_cast<int>(rng() % 100);
    const int n = h * w;
    Tensor<double> probs(Shape{1, c, h, w});
    std::vector<std::uint8_t> labels(n);
    std::vector<double> truep(n);
    const double void_rate = (rng() % 4) * 0.1;
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < n; ++i) {
      labels[i] = u(rng) < void_rate ? kVoidLabel : static_cast<std::uint8_t>(rng() % c);
      // coarse quantization injects many ties
      double p = rng() % 3 == 0 ? (1 + rng() % 8) / 10.0 : u(rng);
      if (rng() % 50 == 0) p = 0.0;
      truep[i] = p;
      const int y = labels[i] == kVoidLabel ? 0 : labels[i];
      for (int k = 0; k < c; ++k) probs[static_cast<std::size_t>(k) * n + i] = k == y ? p : (1 - p) / (c - 1);
    }
    // force one supervised pixel and rewrite its column to match
    const int f = static_cast<int>(rng() % n);
    labels[f] = static_cast<std::uint8_t>(rng() % c);
    for (int k = 0; k < c; ++k) probs[static_cast<std::size_t>(k) * n + f] = k == labels[f] ? truep[f] : (1 - truep[f]) / (c - 1);
    std::size_t supervised = 0;
    for (auto l : labels) supervised += l != kVoidLabel;
    const std::size_t k = 1 + rng() % supervised;

    // oracle: full sort of (value, index)
    std::vector<std::pair<double, std::size_t>> order;
    for (int i = 0; i < n; ++i)
      if (labels[i] != kVoidLabel) order.emplace_back(truep[i], i);
    std::sort(order.begin(), order.end());
    std::vector<std::uint8_t> want_mask(n, 0);
    double want = 0;
    for (std::size_t j = 0; j < k; ++j) {
      want_mask[order[j].second] = 1;
      want -= std::log(std::max(order[j].first, kLogClamp));
    }
    want /= static_cast<double>(k);

    const auto rep = bootstrapped_ce_report(probs, labels, k);
    const double err = std::abs(rep.loss - want) / std::max(1.0, want);
    max_err = std::max(max_err, err);
    if (rep.selected_mask != want_mask || err > 1e-12) ++mismatched;
    const std::size_t k2 = k + 1 + rng() % std::max<std::size_t>(1, supervised - k);
    if (k2 <= supervised && bootstrapped_ce_report(probs, labels, k2).loss > rep.loss + 1e-12) ++non_monotone;
  }
  const double t = sw.seconds();
  return {mismatched == 0 && non_monotone == 0 && t < 30,
          "1000 instances: " + std::to_string(mismatched) + " selection/value mismatches (max rel err " + fmt(max_err, 3) +
              "), " + std::to_string(non_monotone) + " monotonicity violations; " + fmt(t, 3) + " s"};
}

// 5 ----------------------------------------------------------------- gamma
Outcome gamma_bias() {
  Stopwatch sw;
  GammaSampler sampler(0.35, 1);
  std::mt19937_64 naive_rng(2);
  double sum = 0, sum_naive = 0, worst_sym = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = sampler.sample_offset();
    const double g = gamma_from_offset(z);
    worst_sym = std::max(worst_sym, std::abs(g * gamma_from_offset(-z) - 1.0));
    sum += gamma_fixed_point(g);
    sum_naive += gamma_fixed_point(naive_gamma(0.25, 1.75, naive_rng));
  }
  const double mean = sum / n, naive = sum_naive / n;
  const double t = sw.seconds();
  const bool ok = std::abs(mean - 0.5) <= 0.005 && std::abs(mean - 0.5) < std::abs(naive - 0.5) && worst_sym <= 1e-12 && t < 30;
  return {ok, "mean u " + fmt(mean, 6) + " (naive " + fmt(naive, 6) + "), max |g(Z)g(-Z)-1| " + fmt(worst_sym, 3) + "; " +
                  fmt(t, 3) + " s"};
}

// 6 ---------------------------------------------------------------- trimap
Outcome trimap() {
  Stopwatch sw;
  bool nested = true, saturates = true, increasing = true;
  std::mt19937_64 rng(6);
  // random blobby instances: nested bands and saturation
  for (int inst = 0; inst < 20; ++inst) {
    const int h = 24 + static_cast<int>(rng() % 16), w = 24 + static_cast<int>(rng() % 24);
    LabelMap gt(h, w), pred(h, w);
    const int cx = static_cast<int>(rng() % w), cy = static_cast<int>(rng() % h), r = 4 + static_cast<int>(rng() % 10);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::uint8_t v = (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r ? 2 : (y < h / 2 ? 0 : 1);
        if (rng() % 40 == 0) v = kVoidLabel;
        gt.at(y, x) = v;
        pred.at(y, x) = rng() % 6 == 0 ? static_cast<std::uint8_t>(rng() % 3) : (v == kVoidLabel ? 0 : v);
      }
    std::vector<int> radii;
    for (int k = 1; k <= 16; ++k) radii.push_back(k);
    radii.push_back(h + w);
    const auto d2 = squared_distance_transform(boundary_mask(gt), h, w);
    std::vector<std::uint8_t> prev(gt.size(), 0);
    for (int k = 1; k <= 16; ++k) {
      const auto band = band_from_distances(d2, k);
      for (std::size_t i = 0; i < band.mask.size(); ++i) nested = nested && band.mask[i] >= prev[i];
      prev = band.mask;
    }
    ConfusionMatrix global(3);
    accumulate(global, gt, pred);
    saturates = saturates && trimap_curve(gt, pred, radii, 3).back().second == mean_iou(global).mean;
  }
  // boundary-error-only instance: one column of errors along a vertical edge
  LabelMap gt(32, 64);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x) gt.at(y, x) = x < 32 ? 0 : 1;
  LabelMap pred = gt;
  for (int y = 0; y < 32; ++y) pred.at(y, 31) = 1;
  std::vector<int> radii;
  for (int k = 1; k <= 16; ++k) radii.push_back(k);
  const auto curve = trimap_curve(gt, pred, radii, 2);
  for (std::size_t i = 1; i < curve.size(); ++i) increasing = increasing && curve[i].second > curve[i - 1].second;
  const double t = sw.seconds();
  return {nested && saturates && increasing && t < 10,
          std::string("nested bands r=1..16: ") + (nested ? "yes" : "NO") + "; saturated == global: " +
              (saturates ? "yes" : "NO") + "; boundary-error curve " + fmt(curve.front().second, 3) + " -> " +
              fmt(curve.back().second, 3) + (increasing ? " strictly increasing" : " NOT increasing") + "; " + fmt(t, 3) + " s"};
}

// 7 ---------------------------------------------------------- comparison
Outcome comparison() {
  Stopwatch sw;
  const auto data = load_dataset<float>(ensure_dataset(200, 40));
  CompareConfig cfg;
  cfg.base.iterations = 400;
  cfg.base.eval_every = 50;
  cfg.base.cut_points = CutPolicy::None;
  cfg.base.out_dir = (g_work / "compare").string();
  cfg.seeds = {1, 2, 3};
  cfg.archs = {"frrn-a-mini", "resnet-baseline-mini"};
  const auto report = compare_baseline(cfg, data, [](const std::string& m) { std::cerr << "  " << m << std::endl; });
  write_compare_report(report, cfg.base.out_dir);
  double worst_frrn = 1;
  std::ostringstream per_seed;
  for (const auto& run : report.runs) {
    if (run.arch == "frrn-a-mini") worst_frrn = std::min(worst_frrn, run.best_mean_iou);
    per_seed << " " << (run.arch == "frrn-a-mini" ? "F" : "B") << run.seed << "=" << fmt(run.best_mean_iou, 3);
  }
  const double mf = report.mean_best_iou.at("frrn-a-mini"), mb = report.mean_best_iou.at("resnet-baseline-mini");
  const double t = sw.seconds();
  const bool ok = worst_frrn >= 0.85 && mf >= mb && t <= 1800;
  return {ok, "best val mIoU" + per_seed.str() + "; min FRRN " + fmt(worst_frrn, 4) + " >= 0.85; mean FRRN " + fmt(mf, 4) +
                  " vs baseline " + fmt(mb, 4) + "; curves in " + cfg.base.out_dir + "/compare_curves.csv; " + fmt(t, 4) + " s"};
}

// 8 -------------------------------------------------------------- overfit
Outcome overfit() {
  Stopwatch sw;
  const auto data = load_dataset<float>(ensure_dataset(200, 40));
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.train_limit = 1;
  cfg.iterations = 500;
  cfg.eval_every = 0;
  cfg.augmentation.translate = false;
  cfg.augmentation.gamma = false;
  cfg.cut_points = CutPolicy::None;
  const auto r = train(cfg, data);
  int first = -1;
  double final_loss = r.iterations.back().loss;
  for (const auto& l : r.iterations) {
    if (l.loss < 0.05) {
      first = l.iteration + 1;
      break;
    }
  }
  const double t = sw.seconds();
  return {first > 0 && first <= 500 && t < 180,
          (first > 0 ? "loss < 0.05 after " + std::to_string(first) + " iterations" : std::string("loss never < 0.05")) +
              " (initial " + fmt(r.iterations.front().loss) + ", final " + fmt(final_loss, 3) + "); " + fmt(t, 3) + " s"};
}

// 9 ------------------------------------------------------------ determinism
Outcome determinism() {
  Stopwatch sw;
  const auto data = load_dataset<double>(ensure_dataset(200, 40));
  TrainConfig cfg;
  cfg.precision = "f64";
  cfg.iterations = 4;
  cfg.eval_every = 2;
  std::vector<double> trace[2];
  std::string ckpt[2];
  for (int run = 0; run < 2; ++run) {
    cfg.out_dir = (g_work / ("determinism_" + std::to_string(run))).string();
    fs::remove_all(cfg.out_dir);
    for (const auto& l : train(cfg, data).iterations) trace[run].push_back(l.loss);
    for (const char* f : {"last.ckpt", "best.ckpt"}) {
      std::ifstream is(fs::path(cfg.out_dir) / f, std::ios::binary);
      ckpt[run] += std::string(std::istreambuf_iterator<char>(is), {});
    }
  }
  const bool same_trace = trace[0] == trace[1];
  const bool same_ckpt = !ckpt[0].empty() && ckpt[0] == ckpt[1];
  return {same_trace && same_ckpt, std::string("loss traces ") + (same_trace ? "bit-identical" : "DIFFER") + " over " +
                                       std::to_string(trace[0].size()) + " iterations; checkpoints (" +
                                       std::to_string(ckpt[0].size()) + " bytes) " + (same_ckpt ? "bit-identical" : "DIFFER") +
                                       "; " + fmt(sw.seconds(), 3) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> which;
  std::string work = (fs::temp_directory_path() / "frrn_acceptance").string();
  app.add_option("--criterion", which, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--work-dir", work, "Directory for generated data and reports")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<std::function<Outcome()>> criteria{gradients, checkpointing, parameter_counts, bootstrap_oracle, gamma_bias,
                                                       trimap,    comparison,    overfit,          determinism};
  bool all = true;
  for (int c : which) {
    Outcome o;
    try {
      o = criteria[c - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
