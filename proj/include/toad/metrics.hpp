#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "toad/tensor.hpp"

namespace toad {

// Per-frame class scores aligned with ground-truth labels.
struct ScoreTable {
  Tensor<float> scores;     // [F x C]
  std::vector<int> labels;  // F

  std::size_t frames() const { return labels.size(); }
  std::size_t classes() const { return scores.rank() == 2 ? scores.dim(1) : 0; }
  void validate() const;
  // Concatenates tables frame-wise (pooled evaluation set).
  static ScoreTable concat(std::span<const ScoreTable> parts);
};

// Mean over positives of precision at each positive's rank. Frames are ranked
// by descending score, ties by ascending frame index. Zero positives raise
// DegenerateInputError.
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> positives);

// w*TP / (w*TP + FP).
double calibrated_precision(double tp, double fp, double w);

// Like average_precision with calibrated precision at every positive's rank.
// With every frame positive (w = 0) the result is defined as 1.
double calibrated_ap(std::span<const float> scores, std::span<const std::uint8_t> positives,
                     double w);

// negatives / positives over the evaluated frames.
double negative_positive_ratio(std::span<const std::uint8_t> positives);

struct ClassReport {
  std::size_t class_index = 0;
  std::string name;
  double ap = 0.0;
  std::size_t positives = 0;
  double w = 0.0;
};

struct MapReport {
  bool calibrated = false;
  std::vector<ClassReport> classes;        // action classes with >= 1 positive
  std::vector<std::size_t> skipped;        // action classes with no positive frame
  double mean = 0.0;

  // One line per class, then the mean and the skipped classes.
  std::string to_text() const;
  // Flat `key=value` lines; parse_summary() reads them back.
  std::string to_summary() const;
  std::string to_csv() const;
};

// AP (or cAP) per action class 1..C-1; background (class 0) is excluded from
// the mean, as are classes without positives (listed in `skipped`).
MapReport map_report(const ScoreTable& table, bool calibrated,
                     std::span<const std::string> class_names = {});

std::map<std::string, std::string> parse_summary(const std::string& text);

// Fraction of frames whose argmax score equals the label.
double frame_accuracy(const ScoreTable& table);

}  // namespace toad
