#include "toad/commands.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <istream>
#include <ostream>

#include "toad/streaming.hpp"

namespace toad {
namespace fs = std::filesystem;
namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void archive_config(const RunConfig& cfg) {
  ensure_dir(cfg.output_dir);
  write_file(fs::path(cfg.output_dir) / "config.txt", cfg.to_text());
}

Dataset require_dataset(const std::string& path, const char* key) {
  if (path.empty()) throw ConfigError(std::string("config key '") + key + "' is not set");
  return load_dataset(path);
}

void check_dataset(const Dataset& data, const ModelConfig& model, const std::string& what) {
  if (data.dim != model.dim) {
    throw DataError(what + " has feature dim " + std::to_string(data.dim) + ", model dim is " +
                    std::to_string(model.dim));
  }
  if (data.classes != model.classes) {
    throw DataError(what + " has " + std::to_string(data.classes) + " classes, model has " +
                    std::to_string(model.classes));
  }
}

// Architecture keys of the run config must agree with a loaded checkpoint.
void check_architecture(const ModelConfig& want, const ModelConfig& got) {
  auto cmp = [](const char* key, std::size_t a, std::size_t b) {
    if (a != b) {
      throw ConfigError(std::string("checkpoint ") + key + " = " + std::to_string(b) +
                        " does not match config " + key + " = " + std::to_string(a));
    }
  };
  cmp("dim", want.dim, got.dim);
  cmp("window", want.window, got.window);
  cmp("layers", want.layers, got.layers);
  cmp("heads", want.heads, got.heads);
  cmp("classes", want.classes, got.classes);
  cmp("mlp_ratio", want.mlp_ratio, got.mlp_ratio);
}

Model load_model(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("config key 'checkpoint' is not set");
  auto ck = load_checkpoint(cfg.checkpoint);
  check_architecture(cfg.model, ck.model.config);
  return std::move(ck.model);
}

TextEmbeddings load_text(const std::string& path, TextMode expected, std::size_t classes,
                         std::size_t dim, const char* key) {
  if (path.empty()) throw ConfigError(std::string("config key '") + key + "' is not set");
  if (!fs::exists(path)) throw ConfigError(std::string(key) + " file " + path + " does not exist");
  auto text = load_text_embeddings(path);
  if (text.mode != expected) {
    throw DataError(path + " holds " + to_string(text.mode) + " embeddings, expected " +
                    to_string(expected));
  }
  if (text.embeddings.dim(0) != classes || text.embeddings.dim(1) != dim) {
    throw DataError(path + " is " + shape_string(text.embeddings.shape()) + ", model needs " +
                    std::to_string(classes) + "x" + std::to_string(dim));
  }
  return text;
}

Model fresh_model(const RunConfig& cfg) {
  return Model{cfg.model, init_params(cfg.model, load_classifier(cfg, cfg.model.classifier_mode),
                                      cfg.train.seed)};
}

Model train_fresh(const RunConfig& cfg, const Dataset& train_set, std::span<const WindowRef> windows,
                  std::ostream& log, const std::string& tag, TrainResult* result = nullptr) {
  Model model = fresh_model(cfg);
  auto state = OptimState<float>::init(model.params, cfg.train.adamw);
  auto r = train(model, state, train_set, windows, cfg.train, 0,
                 [&](const EpochLog& e, const Model&, const OptimState<float>&) {
                   log << tag << " epoch " << e.epoch << " loss " << fixed(e.loss, 6) << '\n';
                 });
  if (result) *result = std::move(r);
  return model;
}

void save_report(const fs::path& dir, const std::string& stem, const MapReport& r) {
  write_file(dir / (stem + ".txt"), r.to_text());
  write_file(dir / (stem + ".summary"), r.to_summary());
  write_file(dir / (stem + ".csv"), r.to_csv());
}

std::vector<std::string> eval_columns(const EvalResult& r) {
  return {fixed(r.map.mean), fixed(r.mcap.mean), fixed(r.frame_accuracy),
          r.future_accuracy ? fixed(*r.future_accuracy) : "-"};
}

std::string synth_text(const SynthConfig& c, std::size_t test_videos) {
  std::string out;
  auto line = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  line("classes", std::to_string(c.classes));
  line("dim", std::to_string(c.dim));
  line("videos", std::to_string(c.videos));
  line("test_videos", std::to_string(test_videos));
  line("frames", std::to_string(c.frames));
  line("sep", fixed(c.sep, 6));
  line("noise", fixed(c.noise, 6));
  line("instance_spread", fixed(c.instance_spread, 6));
  line("min_segment", std::to_string(c.min_segment));
  line("max_segment", std::to_string(c.max_segment));
  line("transitions", to_string(c.transitions));
  line("background_noise_only", c.background_noise_only ? "true" : "false");
  line("text_jitter", fixed(c.text_jitter, 6));
  line("seed", std::to_string(c.seed));
  line("world_seed", std::to_string(c.world_seed));
  return out;
}

}  // namespace

std::string Table::to_text() const {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out += cells[c];
      if (c + 1 < cells.size()) out += std::string(width[c] - cells[c].size() + 2, ' ');
    }
    out += '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out;
}

std::string Table::to_csv() const {
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out += (c ? "," : "") + cells[c];
    out += '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out;
}

void Table::save(const fs::path& dir, const std::string& stem) const {
  write_file(dir / (stem + ".txt"), to_text());
  write_file(dir / (stem + ".csv"), to_csv());
}

EvalResult evaluate(const Model& model, const Dataset& data, const std::vector<std::string>& names,
                    std::size_t rate, std::size_t horizon, std::size_t eval_stride) {
  check_dataset(data, model.config, "evaluation data");
  const auto streams = run_streams(model, data, rate, horizon, eval_stride, thread_budget());
  std::vector<ScoreTable> tables;
  std::size_t future_ok = 0, future_n = 0;
  for (const auto& s : streams) {
    tables.push_back(s.current);
    if (!model.config.future_enabled) continue;
    for (std::size_t t = 0; t < s.future_labels.size(); ++t) {
      if (s.future_labels[t] == kNoLabel) continue;
      const auto row = s.future.row(t);
      future_ok += (std::max_element(row.begin(), row.end()) - row.begin()) == s.future_labels[t];
      ++future_n;
    }
  }
  const auto all = ScoreTable::concat(tables);
  EvalResult r;
  r.map = map_report(all, false, names);
  r.mcap = map_report(all, true, names);
  r.frame_accuracy = frame_accuracy(all);
  r.frames = all.frames();
  if (future_n > 0) r.future_accuracy = static_cast<double>(future_ok) / static_cast<double>(future_n);
  return r;
}

ClassifierMatrix<float> load_classifier(const RunConfig& cfg, ClassifierMode mode) {
  const std::size_t c = cfg.model.classes, d = cfg.model.dim;
  std::optional<TextEmbeddings> name, prompt, future;
  if (mode != ClassifierMode::kPrompt) {
    name = load_text(cfg.text_class_name, TextMode::kClassName, c, d, "text_class_name");
  }
  if (mode != ClassifierMode::kClassName) {
    prompt = load_text(cfg.text_prompt, TextMode::kPrompt, c, d, "text_prompt");
  }
  if (cfg.model.future_enabled) {
    future = load_text(cfg.text_future, TextMode::kFuturePrompt, c, d, "text_future");
  }
  const auto& a = name ? name->embeddings : prompt->embeddings;
  const auto& b = prompt ? prompt->embeddings : name->embeddings;
  return build_classifier(a, b, future ? &future->embeddings : nullptr, mode);
}

std::vector<std::string> class_names(const RunConfig& cfg, std::size_t classes) {
  std::vector<std::string> names;
  if (!cfg.vocab.empty()) {
    names = load_vocabulary(cfg.vocab).names;
    if (names.size() != classes) {
      throw DataError("vocabulary " + cfg.vocab + " has " + std::to_string(names.size()) +
                      " names, model has " + std::to_string(classes) + " classes");
    }
    return names;
  }
  names.push_back("background");
  for (std::size_t c = 1; c < classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset data = require_dataset(cfg.train_data, "train_data");
  check_dataset(data, cfg.model, "training data");
  const auto windows = training_windows(data, cfg.train.rate);

  Checkpoint ck;
  std::size_t start_epoch = 0;
  if (!cfg.checkpoint.empty()) {
    ck = load_checkpoint(cfg.checkpoint);
    check_architecture(cfg.model, ck.model.config);
    if (!ck.optim) throw ConfigError("checkpoint " + cfg.checkpoint + " has no optimizer state to resume");
    ck.optim->config = cfg.train.adamw;
    start_epoch = ck.epoch;
    log << "resuming after epoch " << start_epoch << '\n';
  } else {
    ck.model = fresh_model(cfg);
    ck.optim = OptimState<float>::init(ck.model.params, cfg.train.adamw);
  }
  archive_config(cfg);
  const fs::path out = cfg.output_dir;
  std::string csv = "epoch,loss,current_loss,future_loss,lr,frozen_checksum,nudges,iterations\n";
  TrainOutcome outcome;
  outcome.result = train(
      ck.model, *ck.optim, data, windows, cfg.train, start_epoch,
      [&](const EpochLog& e, const Model& model, const OptimState<float>& state) {
        char line[256];
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%s,%zu,%zu\n", e.epoch, e.loss,
                      e.current_loss, e.future_loss, e.lr, hex(e.frozen_checksum).c_str(), e.nudges,
                      e.iterations);
        csv += line;
        log << "epoch " << e.epoch << " loss " << fixed(e.loss, 6) << " lr " << e.lr << " frozen "
            << hex(e.frozen_checksum) << '\n';
        if (e.epoch == 0) return;
        Checkpoint snap{model, state, static_cast<std::uint32_t>(e.epoch)};
        save_checkpoint(epoch_checkpoint_path(out, "model", snap.epoch), snap);
        prune_checkpoints(out, "model", cfg.keep_last);
      });
  write_file(out / "train_log.csv", csv);
  ck.epoch = static_cast<std::uint32_t>(cfg.train.epochs);
  outcome.checkpoint_path = out / "model.ckpt";
  save_checkpoint(outcome.checkpoint_path, ck);
  outcome.final = std::move(ck);
  return outcome;
}

EvalResult cmd_eval(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Model model = load_model(cfg);
  const Dataset data = require_dataset(cfg.test_data, "test_data");
  const auto names = class_names(cfg, model.config.classes);
  archive_config(cfg);
  const auto r = evaluate(model, data, names, cfg.train.rate, cfg.train.horizon, cfg.eval_stride);
  const fs::path out = cfg.output_dir;
  save_report(out, "map", r.map);
  save_report(out, "mcap", r.mcap);
  log << r.map.to_text() << r.mcap.to_text() << "frame accuracy " << fixed(r.frame_accuracy) << '\n';
  return r;
}

std::size_t cmd_stream(const RunConfig& cfg, const std::string& features, std::istream& pipe,
                       std::ostream& out) {
  cfg.validate();
  const Model model = load_model(cfg);
  const auto names = class_names(cfg, model.config.classes);
  StreamState state(model, cfg.train.rate, cfg.eval_stride);
  char line[256];
  auto emit = [&](std::span<const float> frame) {
    const auto& s = state.push_frame(frame);
    const auto scores = s.current.data();
    const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    // Scores are per-class log-odds; print the probability.
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(scores[best])));
    std::snprintf(line, sizeof line, "%zu %s %.6f\n", state.frames_seen() - 1, names[best].c_str(), p);
    out << line;
  };
  if (features != "-") {
    const auto seq = load_features(features);
    if (seq.dim() != model.config.dim) {
      throw DataError(features + " has feature dim " + std::to_string(seq.dim()) + ", model dim is " +
                      std::to_string(model.config.dim));
    }
    for (std::size_t t = 0; t < seq.frames(); ++t) emit(seq.features.row(t));
    return seq.frames();
  }
  auto read_u32 = [&](std::uint32_t& v) -> std::size_t {
    unsigned char b[4];
    pipe.read(reinterpret_cast<char*>(b), 4);
    v = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return static_cast<std::size_t>(pipe.gcount());
  };
  std::vector<float> frame;
  for (;;) {
    std::uint32_t d = 0;
    const std::size_t got = read_u32(d);
    if (got == 0) break;
    const std::string at = " at frame " + std::to_string(state.frames_seen());
    if (got != 4) throw DataError("stdin: truncated frame header" + at);
    if (d != model.config.dim) {
      throw DataError("stdin: frame dim " + std::to_string(d) + at + ", model dim is " +
                      std::to_string(model.config.dim));
    }
    frame.resize(d);
    for (auto& x : frame) {
      std::uint32_t bits = 0;
      if (read_u32(bits) != 4) throw DataError("stdin: truncated frame payload" + at);
      x = std::bit_cast<float>(bits);
    }
    emit(frame);
  }
  return state.frames_seen();
}

Table cmd_zeroshot(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset data = require_dataset(cfg.test_data, "test_data");
  Model model = cfg.checkpoint.empty() ? fresh_model(cfg) : load_model(cfg);
  model.config.future_enabled = cfg.model.future_enabled;
  const auto names = class_names(cfg, model.config.classes);
  archive_config(cfg);
  Table table{{"classifier", "mAP", "mcAP", "frame_acc", "future_acc"}, {}};
  for (auto mode : {ClassifierMode::kPrompt, ClassifierMode::kClassName, ClassifierMode::kMixed}) {
    model.config.classifier_mode = mode;
    model.params.classifier = load_classifier(cfg, mode);
    const auto r = evaluate(model, data, names, cfg.train.rate, cfg.train.horizon, cfg.eval_stride);
    const std::string stem = std::string("zeroshot_") + to_string(mode);
    save_report(cfg.output_dir, stem, r.map);
    auto row = eval_columns(r);
    row.insert(row.begin(), to_string(mode));
    table.rows.push_back(row);
    log << to_string(mode) << " mAP " << fixed(r.map.mean) << '\n';
  }
  table.save(cfg.output_dir, "zeroshot");
  return table;
}

Table cmd_fewshot(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset train_set = require_dataset(cfg.train_data, "train_data");
  const Dataset test_set = require_dataset(cfg.test_data, "test_data");
  check_dataset(train_set, cfg.model, "training data");
  const auto names = class_names(cfg, cfg.model.classes);
  archive_config(cfg);
  const std::size_t full = training_windows(train_set, cfg.train.rate).size();
  const std::size_t full_iters = iterations_per_epoch(full, cfg.train.batch);
  Table table{{"shots", "instances", "unique_windows", "windows", "iterations", "mAP", "mcAP",
               "frame_acc", "future_acc"},
              {}};
  for (std::size_t k : cfg.shots) {
    const auto subset = fewshot_subset(train_set, k, cfg.train.seed, cfg.train.rate);
    TrainResult tr;
    const Model model = train_fresh(cfg, train_set, subset.windows, log, "shots=" + std::to_string(k), &tr);
    if (tr.iterations_per_epoch != full_iters) {
      throw DataError("few-shot run has " + std::to_string(tr.iterations_per_epoch) +
                      " iterations per epoch, full-shot has " + std::to_string(full_iters));
    }
    const auto r = evaluate(model, test_set, names, cfg.train.rate, cfg.train.horizon, cfg.eval_stride);
    std::vector<std::string> row{std::to_string(k), std::to_string(subset.chosen.size()),
                                 std::to_string(subset.unique.size()),
                                 std::to_string(subset.windows.size()),
                                 std::to_string(tr.iterations_per_epoch)};
    for (auto& c : eval_columns(r)) row.push_back(c);
    table.rows.push_back(row);
  }
  table.save(cfg.output_dir, "fewshot");
  return table;
}

Table cmd_ablate(const RunConfig& cfg, const std::string& axis, std::ostream& log) {
  std::vector<std::pair<std::string, RunConfig>> runs;
  if (axis == "frames") {
    for (std::size_t t : {8, 16, 32, 64}) {
      RunConfig c = cfg;
      c.model.window = t;
      runs.emplace_back("T=" + std::to_string(t), c);
    }
  } else if (axis == "classifier") {
    for (auto mode : {ClassifierMode::kPrompt, ClassifierMode::kClassName, ClassifierMode::kMixed}) {
      for (bool future : {true, false}) {
        RunConfig c = cfg;
        c.model.classifier_mode = mode;
        c.model.future_enabled = future;
        runs.emplace_back(std::string(to_string(mode)) + (future ? "+future" : ""), c);
      }
    }
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "' (expected frames or classifier)");
  }
  for (const auto& [label, c] : runs) c.validate();
  const Dataset train_set = require_dataset(cfg.train_data, "train_data");
  const Dataset test_set = require_dataset(cfg.test_data, "test_data");
  check_dataset(train_set, cfg.model, "training data");
  const auto names = class_names(cfg, cfg.model.classes);
  archive_config(cfg);
  const auto windows = training_windows(train_set, cfg.train.rate);
  Table table{{"config", "mAP", "mcAP", "frame_acc", "future_acc"}, {}};
  for (const auto& [label, c] : runs) {
    const Model model = train_fresh(c, train_set, windows, log, label);
    const auto r = evaluate(model, test_set, names, c.train.rate, c.train.horizon, c.eval_stride);
    auto row = eval_columns(r);
    row.insert(row.begin(), label);
    table.rows.push_back(row);
  }
  table.save(cfg.output_dir, "ablate_" + axis);
  return table;
}

SynthOutcome cmd_synth(const SynthConfig& cfg, std::size_t test_videos, const fs::path& out_dir) {
  cfg.validate();
  if (test_videos == 0) throw ConfigError("test_videos must be positive");
  SynthConfig test_cfg = cfg;
  test_cfg.videos = test_videos;
  test_cfg.seed = cfg.seed + 0x7e57;
  test_cfg.id_prefix = cfg.id_prefix + "_test";
  SynthOutcome out{synth_dataset(cfg), synth_dataset(test_cfg)};
  ensure_dir(out_dir / "train");
  ensure_dir(out_dir / "test");
  save_dataset(out_dir / "train", out.train.dataset);
  save_dataset(out_dir / "test", out.test.dataset);
  save_vocabulary(out_dir / "vocab.txt", out.train.vocab);
  save_text_embeddings(out_dir / "class_name.text", out.train.class_name);
  save_text_embeddings(out_dir / "prompt.text", out.train.prompt);
  save_text_embeddings(out_dir / "future.text", out.train.future);
  write_file(out_dir / "synth.txt", synth_text(cfg, test_videos));
  RunConfig run;
  run.model.dim = cfg.dim;
  run.model.classes = cfg.classes;
  // A small encoder that fits the synthetic dimension.
  run.model.window = 8;
  run.model.layers = 2;
  run.model.heads = cfg.dim % 4 == 0 ? 4 : cfg.dim % 2 == 0 ? 2 : 1;
  const fs::path abs = fs::absolute(out_dir);
  run.train_data = (abs / "train").string();
  run.test_data = (abs / "test").string();
  run.vocab = (abs / "vocab.txt").string();
  run.text_class_name = (abs / "class_name.text").string();
  run.text_prompt = (abs / "prompt.text").string();
  run.text_future = (abs / "future.text").string();
  run.output_dir = (abs / "run").string();
  write_file(out_dir / "run.cfg", run.to_text());
  return out;
}

}  // namespace toad
