#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "toad/checkpoint.hpp"
#include "toad/metrics.hpp"
#include "toad/run_config.hpp"
#include "toad/synth.hpp"
#include "toad/training.hpp"

namespace toad {

// Rows of strings with a header; printed aligned or as CSV.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_text() const;
  std::string to_csv() const;
  // Writes <stem>.txt and <stem>.csv.
  void save(const std::filesystem::path& dir, const std::string& stem) const;
};

struct EvalResult {
  MapReport map;
  MapReport mcap;
  double frame_accuracy = 0.0;
  std::optional<double> future_accuracy;  // over frames with a defined future label
  std::size_t frames = 0;
};

// Streams every test video through `model` and scores it.
EvalResult evaluate(const Model& model, const Dataset& data, const std::vector<std::string>& names,
                    std::size_t rate, std::size_t horizon, std::size_t eval_stride);

// Frozen classifier from the configured text-embedding files for `mode`.
// A mode only needs the files it uses; the future file is required when the
// future head is enabled.
ClassifierMatrix<float> load_classifier(const RunConfig& cfg, ClassifierMode mode);

std::vector<std::string> class_names(const RunConfig& cfg, std::size_t classes);

struct TrainOutcome {
  Checkpoint final;
  TrainResult result;
  std::filesystem::path checkpoint_path;
};

// Trains on cfg.train_data, writing config.txt, train_log.csv, per-epoch
// checkpoints (pruned to keep_last) and model.ckpt into output_dir. A
// checkpoint with optimizer state in cfg.checkpoint resumes from it.
TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log);

// Writes map.{txt,summary,csv} and mcap.{txt,summary,csv}.
EvalResult cmd_eval(const RunConfig& cfg, std::ostream& log);

// Reads a TOADFEAT file, or frames from `pipe` as (u32 d, d x f32) records when
// `features` is "-", and prints "frame class probability" per frame to `out`.
std::size_t cmd_stream(const RunConfig& cfg, const std::string& features, std::istream& pipe,
                       std::ostream& out);

// One evaluation per classifier mode; writes zeroshot_<mode>.* and zeroshot.{txt,csv}.
Table cmd_zeroshot(const RunConfig& cfg, std::ostream& log);

// Trains and evaluates per shot count; writes fewshot.{txt,csv}.
Table cmd_fewshot(const RunConfig& cfg, std::ostream& log);

// axis "frames": T in {8,16,32,64}; axis "classifier": {prompt, class_name, mixed}
// x {future on, off}. Writes ablate_<axis>.{txt,csv}. Unknown axis: ConfigError.
Table cmd_ablate(const RunConfig& cfg, const std::string& axis, std::ostream& log);

struct SynthOutcome {
  SynthData train;
  SynthData test;
};

// Writes train/ and test/ dataset directories, vocab.txt, the three text
// embedding files, synth.txt and a run.cfg pointing at them.
SynthOutcome cmd_synth(const SynthConfig& cfg, std::size_t test_videos,
                       const std::filesystem::path& out_dir);

}  // namespace toad
