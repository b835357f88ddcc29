// Acceptance gate: one PASS/FAIL line per criterion. Exit status 1 if any fails.
// Arguments select criteria by name; no arguments runs all of them.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "toad/commands.hpp"
#include "toad/metrics.hpp"
#include "toad/optim.hpp"
#include "toad/streaming.hpp"
#include "toad/synth.hpp"
#include "toad/training.hpp"

namespace {

using namespace toad;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- gradients

Outcome gradient_fidelity() {
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.window = 4;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.classes = 3;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rand = [&](Shape s, double scale) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data()) v = scale * n(rng);
    return t;
  };
  const auto name = rand({3, 8}, 1), prompt = rand({3, 8}, 1), future = rand({3, 8}, 1);
  auto params = init_params(cfg, build_classifier(name, prompt, &future, cfg.classifier_mode), 5);
  // Larger weights than the initialiser so every path carries a visible gradient.
  params.for_each_trainable([&](const std::string&, Tensor<double>& t) {
    for (auto& v : t.data()) v += 0.3 * n(rng);
  });
  WindowBatch<double> batch;
  batch.x = rand({2, 4, 8}, 1);
  batch.y = {1, 2};
  batch.y_future = {2, 0};
  batch.frame_index = {0, 1};

  const auto start = std::chrono::steady_clock::now();
  const auto analytic = loss_and_grad(cfg, params, batch);
  if (analytic.future_terms != 2) return {false, "future term missing"};
  // Entries where both estimates sit below the finite-difference noise level
  // (structurally zero, e.g. key biases under row softmax) are compared absolutely.
  constexpr double kZero = 1e-8;
  double worst = 0.0;
  std::string worst_name;
  std::size_t i = 0, zeros = 0, checked = 0;
  params.for_each_trainable([&](const std::string& tname, Tensor<double>& t) {
    const auto& g = analytic.grads.tensors[i++];
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double keep = t[k], h = 1e-5;
      t[k] = keep + h;
      const double up = loss_and_grad(cfg, params, batch, false).loss;
      t[k] = keep - h;
      const double down = loss_and_grad(cfg, params, batch, false).loss;
      t[k] = keep;
      const double num = (up - down) / (2 * h);
      const double scale = std::max(std::abs(num), std::abs(g[k]));
      double err;
      if (scale < kZero) {
        ++zeros;
        err = std::abs(num - g[k]) < kZero ? 0.0 : 1.0;
      } else {
        ++checked;
        err = std::abs(num - g[k]) / std::max(scale, 1e-6);
      }
      if (err > worst) {
        worst = err;
        worst_name = tname;
      }
    }
  });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-4 && secs < 60,
          "max rel err " + fmt("%.3g", worst) + (worst_name.empty() ? "" : " (" + worst_name + ")") +
              " over " + std::to_string(checked) + " entries in " +
              std::to_string(params.trainable_count()) + " tensors, " + std::to_string(zeros) +
              " structural zeros, " + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------- metrics

struct Point {
  std::size_t rank, tp;
};

std::vector<Point> brute_points(std::span<const float> s, std::span<const std::uint8_t> p) {
  std::vector<Point> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!p[i]) continue;
    std::size_t rank = 0, tp = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] > s[i] || (s[j] == s[i] && j <= i)) {
        ++rank;
        tp += p[j];
      }
    }
    out.push_back({rank, tp});
  }
  std::sort(out.begin(), out.end(), [](Point a, Point b) { return a.rank < b.rank; });
  return out;
}

Outcome metric_oracles() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  std::size_t instances = 0, mismatches = 0;
  while (instances < 1200) {
    const std::size_t f = 2 + rng() % 199, c = 2 + rng() % 4;
    std::vector<int> labels(f);
    for (auto& l : labels) l = static_cast<int>(rng() % c);
    const bool coarse = rng() % 2;  // coarse grids force ties
    for (std::size_t k = 0; k < c; ++k) {
      std::vector<float> s(f);
      std::vector<std::uint8_t> p(f);
      for (std::size_t i = 0; i < f; ++i) {
        s[i] = coarse ? static_cast<float>(rng() % 10) / 10.0f
                      : std::uniform_real_distribution<float>(0, 1)(rng);
        p[i] = labels[i] == static_cast<int>(k);
      }
      if (std::count(p.begin(), p.end(), 1) == 0) continue;
      const auto pts = brute_points(s, p);
      double ap = 0, cap = 0;
      const double w = negative_positive_ratio(p);
      for (auto pt : pts) {
        ap += static_cast<double>(pt.tp) / static_cast<double>(pt.rank);
        const double tp = static_cast<double>(pt.tp), fp = static_cast<double>(pt.rank - pt.tp);
        cap += w * tp / (w * tp + fp);
      }
      ap /= static_cast<double>(pts.size());
      cap /= static_cast<double>(pts.size());
      if (w == 0.0) cap = 1.0;
      mismatches += average_precision(s, p) != ap;
      mismatches += calibrated_ap(s, p, w) != cap;
      mismatches += calibrated_ap(s, p, 1.0) != average_precision(s, p);
      ++instances;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {mismatches == 0 && secs < 60, std::to_string(instances) + " instances, " +
                                            std::to_string(mismatches) + " mismatches, " +
                                            fmt("%.1fs", secs)};
}

Outcome calibrated_precision_values() {
  bool ok = calibrated_precision(10, 10, 2) == 2.0 / 3.0;
  for (int tp = 1; tp <= 20; ++tp)
    for (int fp = 0; fp <= 20; ++fp)
      ok = ok && calibrated_precision(tp, fp, 1.0) == static_cast<double>(tp) / (tp + fp);
  for (double w : {0.01, 0.5, 1.0, 3.0, 250.0}) ok = ok && calibrated_precision(7, 0, w) == 1.0;
  return {ok, "P(10,10,2)=" + fmt("%.17g", calibrated_precision(10, 10, 2))};
}

Outcome schedule_values() {
  AdamWConfig c;
  const double b = c.lr_base;
  const bool values = lr_at(5, c) == b && std::abs(lr_at(30, c)) <= 1e-12 &&
                      std::abs(lr_at(17.5, c) - b / 2) <= 1e-12;
  const double h = 1e-4;
  const double slope = std::max(b / c.warmup_epochs,
                                b * std::numbers::pi / 2 / (c.total_epochs - c.warmup_epochs));
  double excess = 0, prev = lr_at(0, c);
  for (int i = 1; i <= 300000; ++i) {
    const double lr = lr_at(i * h, c);
    excess = std::max(excess, std::abs(lr - prev) - slope * h);
    prev = lr;
  }
  const double seam = std::abs(lr_at(5 - 1e-12, c) - lr_at(5 + 1e-12, c));
  return {values && excess < 1e-6 * b && seam < 1e-6 * b,
          "lr(5)=" + fmt("%.3g", lr_at(5, c)) + " lr(17.5)=" + fmt("%.3g", lr_at(17.5, c)) +
              " lr(30)=" + fmt("%.3g", lr_at(30, c)) + ", jump beyond slope " +
              fmt("%.2g", excess / b) + "*lr_base"};
}

// ---------------------------------------------------------------- streaming

Model synth_model(const SynthData& s, std::size_t window, std::size_t layers, std::uint64_t seed,
                  ClassifierMode mode = ClassifierMode::kPrompt, bool future = true) {
  ModelConfig cfg;
  cfg.dim = s.dataset.dim;
  cfg.classes = s.dataset.classes;
  cfg.window = window;
  cfg.layers = layers;
  cfg.heads = cfg.dim % 4 == 0 ? 4 : 2;
  cfg.classifier_mode = mode;
  cfg.future_enabled = future;
  const auto cls = build_classifier(s.class_name.embeddings, s.prompt.embeddings,
                                    &s.future.embeddings, mode);
  return {cfg, init_params(cfg, cls, seed)};
}

Outcome streaming_equivalence() {
  SynthConfig sc;
  sc.videos = 5;
  sc.frames = 600;
  sc.min_segment = 60;
  sc.max_segment = 200;
  const auto s = synth_dataset(sc);
  std::size_t frames = 0, diffs = 0;
  for (std::size_t t : {8, 16, 32, 64}) {
    const auto model = synth_model(s, t, 2, t);
    for (const auto& v : s.dataset.videos) {
      const auto online = run_stream(model, v);
      const auto offline = score_video_offline(model, v);
      for (std::size_t i = 0; i < online.current.scores.size(); ++i) {
        diffs += online.current.scores[i] != offline.scores[i];
      }
      frames += v.features.frames();
    }
  }
  // Causality: rewrite everything after frame 300 and compare the prefix.
  const auto model = synth_model(s, 16, 2, 1);
  auto video = s.dataset.videos[0];
  const auto before = run_stream(model, video);
  for (std::size_t t = 301; t < video.features.frames(); ++t)
    for (auto& x : video.features.features.row(t)) x = 5.0f - x;
  const auto after = run_stream(model, video);
  std::size_t leaks = 0;
  for (std::size_t t = 0; t <= 300; ++t)
    for (std::size_t c = 0; c < model.config.classes; ++c)
      leaks += before.current.scores.at(t, c) != after.current.scores.at(t, c);
  return {diffs == 0 && leaks == 0, std::to_string(frames) + " frame scorings over T in {8,16,32,64}, " +
                                        std::to_string(diffs) + " differences, " +
                                        std::to_string(leaks) + " causality leaks"};
}

// ---------------------------------------------------------------- training

struct RunMetrics {
  double train_accuracy = 0, test_map = 0, test_mcap = 0;
  std::optional<double> future_accuracy;
  bool frozen_constant = true;
  std::size_t epochs = 0;
};

RunMetrics train_and_evaluate(Model& model, const Dataset& train_set, const Dataset& test_set,
                              std::span<const WindowRef> windows, const TrainConfig& tc,
                              bool eval_train) {
  auto state = OptimState<float>::init(model.params, tc.adamw);
  const auto checksum = model.params.frozen_checksum();
  const auto result = train(model, state, train_set, windows, tc);
  RunMetrics m;
  for (const auto& e : result.log) m.frozen_constant = m.frozen_constant && e.frozen_checksum == checksum;
  m.frozen_constant = m.frozen_constant && model.params.frozen_checksum() == checksum;
  m.epochs = result.log.size();
  const std::vector<std::string> names;
  if (eval_train) {
    m.train_accuracy = evaluate(model, train_set, names, tc.rate, tc.horizon, 1).frame_accuracy;
  }
  const auto test = evaluate(model, test_set, names, tc.rate, tc.horizon, 1);
  m.test_map = test.map.mean;
  m.test_mcap = test.mcap.mean;
  m.future_accuracy = test.future_accuracy;
  return m;
}

TrainConfig reference_schedule() {
  TrainConfig tc;  // batch 32, 30 epochs, lr 5e-5, wd 0.2, warmup 5, rate 6
  tc.adamw.total_epochs = static_cast<double>(tc.epochs);
  return tc;
}

std::pair<SynthData, SynthData> split(SynthConfig sc, std::size_t test_videos) {
  auto train_data = synth_dataset(sc);
  sc.videos = test_videos;
  sc.seed += 0x7e57;
  sc.id_prefix += "_test";
  return {std::move(train_data), synth_dataset(sc)};
}

std::vector<RunMetrics> g_learning_runs;

Outcome learning_sanity() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> acc, maps;
  g_learning_runs.clear();
  for (std::uint64_t seed : {1, 2, 3}) {
    SynthConfig sc;  // C=5, d=32, sep=10
    sc.videos = 4;
    sc.frames = 9000;
    sc.min_segment = 3000;
    sc.max_segment = 6000;
    sc.seed = seed;
    sc.world_seed = seed;
    const auto [tr, te] = split(sc, 2);
    auto model = synth_model(tr, 8, 2, seed);
    auto tc = reference_schedule();
    tc.seed = seed;
    const auto windows = training_windows(tr.dataset, tc.rate);
    const auto m = train_and_evaluate(model, tr.dataset, te.dataset, windows, tc, true);
    g_learning_runs.push_back(m);
    acc.push_back(m.train_accuracy);
    maps.push_back(m.test_map);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double a = median(acc), mp = median(maps);
  return {a >= 0.99 && mp >= 0.95 && secs < 600,
          "median train acc " + fmt("%.4f", a) + ", median test mAP " + fmt("%.4f", mp) + ", " +
              fmt("%.0fs", secs)};
}

Outcome frozen_invariant() {
  if (g_learning_runs.empty()) learning_sanity();
  bool ok = !g_learning_runs.empty();
  std::size_t epochs = 0;
  for (const auto& r : g_learning_runs) {
    ok = ok && r.frozen_constant;
    epochs = r.epochs;
  }
  return {ok && epochs == 30, std::to_string(g_learning_runs.size()) + " runs x " +
                                  std::to_string(epochs) + " epochs, checksum " +
                                  (ok ? "unchanged" : "CHANGED")};
}

Outcome future_effect() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> drop, fut;
  double chance = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    SynthConfig sc;
    sc.videos = 6;
    sc.frames = 2000;
    sc.transitions = TransitionMode::kCyclic;
    sc.seed = seed;
    sc.world_seed = seed;
    chance = 1.0 / static_cast<double>(sc.classes);
    const auto [tr, te] = split(sc, 2);
    auto tc = reference_schedule();
    tc.seed = seed;
    const auto windows = training_windows(tr.dataset, tc.rate);
    auto on = synth_model(tr, 8, 2, seed, ClassifierMode::kPrompt, true);
    auto off = synth_model(tr, 8, 2, seed, ClassifierMode::kPrompt, false);
    const auto m_on = train_and_evaluate(on, tr.dataset, te.dataset, windows, tc, false);
    const auto m_off = train_and_evaluate(off, tr.dataset, te.dataset, windows, tc, false);
    drop.push_back(m_off.test_map - m_on.test_map);
    fut.push_back(m_on.future_accuracy.value_or(0.0));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double d = median(drop), f = median(fut);
  return {d <= 0.01 && f >= 2 * chance,
          "median mAP(off)-mAP(on) " + fmt("%.4f", d) + ", median future acc " + fmt("%.3f", f) +
              " (chance " + fmt("%.2f", chance) + "), " + fmt("%.0fs", secs)};
}

Outcome fewshot_protocol() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> gap;
  bool nested = true, equal_iters = true;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    SynthConfig sc;
    sc.videos = 8;
    sc.frames = 2000;
    sc.min_segment = 200;
    sc.max_segment = 600;
    // Weak text prior and per-instance variation, so one instance per class
    // cannot stand in for the class.
    sc.text_jitter = 3.0;
    sc.instance_spread = 2.0;
    sc.seed = seed;
    sc.world_seed = seed;
    const auto [tr, te] = split(sc, 2);
    auto tc = reference_schedule();
    tc.seed = seed;
    tc.epochs = 10;
    tc.adamw.total_epochs = 10;
    tc.adamw.warmup_epochs = 2;
    tc.adamw.lr_base = 2e-4;
    const std::size_t full = iterations_per_epoch(training_windows(tr.dataset, tc.rate).size(), tc.batch);
    std::vector<WindowRef> prev;
    double map1 = 0, map8 = 0;
    for (std::size_t k : {1, 2, 4, 8}) {
      const auto sub = fewshot_subset(tr.dataset, k, seed, tc.rate);
      nested = nested && std::includes(sub.unique.begin(), sub.unique.end(), prev.begin(), prev.end());
      prev = sub.unique;
      equal_iters = equal_iters && iterations_per_epoch(sub.windows.size(), tc.batch) == full;
      if (k != 1 && k != 8) continue;
      auto model = synth_model(tr, 8, 1, seed, ClassifierMode::kClassName, false);
      const auto m = train_and_evaluate(model, tr.dataset, te.dataset, sub.windows, tc, false);
      (k == 1 ? map1 : map8) = m.test_map;
    }
    gap.push_back(map8 - map1);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double g = median(gap);
  std::string per_seed;
  for (double v : gap) per_seed += (per_seed.empty() ? "" : " ") + fmt("%+.3f", v);
  return {nested && equal_iters && g >= 0.0,
          std::string("nested ") + (nested ? "yes" : "no") + ", equal iterations " +
              (equal_iters ? "yes" : "no") + ", median mAP(8)-mAP(1) " + fmt("%.4f", g) + " [" + per_seed + "], " +
              fmt("%.0fs", secs)};
}

Outcome zeroshot_path() {
  SynthConfig sc;
  sc.videos = 4;
  sc.frames = 3000;
  const auto s = synth_dataset(sc);
  auto model = synth_model(s, 8, 0, 1);
  const auto r = evaluate(model, s.dataset, {}, 6, 60, 1);
  return {r.map.mean >= 0.99, "0-layer encoder, prompt classifier: mAP " + fmt("%.4f", r.map.mean) +
                                  ", mcAP " + fmt("%.4f", r.mcap.mean)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient_fidelity", gradient_fidelity},
      {"metric_oracles", metric_oracles},
      {"calibrated_precision", calibrated_precision_values},
      {"learning_sanity", learning_sanity},
      {"frozen_classifier", frozen_invariant},
      {"streaming_equivalence", streaming_equivalence},
      {"future_effect", future_effect},
      {"schedule", schedule_values},
      {"fewshot_protocol", fewshot_protocol},
      {"zeroshot_path", zeroshot_path},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
