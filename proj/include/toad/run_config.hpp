#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "toad/model.hpp"
#include "toad/training.hpp"

namespace toad {

// Everything a command needs, as flat `key = value` lines. '#' starts a comment.
// Unknown keys are rejected; unspecified keys keep their defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_data;
  std::string test_data;
  std::string vocab;
  std::string text_class_name;
  std::string text_prompt;
  std::string text_future;
  std::string output_dir = "runs/out";
  std::string checkpoint;  // eval/zeroshot/stream input, or train resume point
  std::size_t keep_last = 0;
  std::size_t eval_stride = 1;
  std::vector<std::size_t> shots = {1, 2, 4, 8};

  RunConfig();

  static const std::vector<std::string>& keys();
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  // Throws ConfigError for an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::string to_text() const;
  void validate() const;
};

}  // namespace toad
