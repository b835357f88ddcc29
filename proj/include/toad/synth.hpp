#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "toad/data.hpp"

namespace toad {

enum class TransitionMode {
  kAlternating,  // background, random action, background, random action, ...
  kCyclic,       // label c is always followed by c + 1 (mod C), background included
};

const char* to_string(TransitionMode mode);
TransitionMode parse_transition_mode(const std::string& text);

struct SynthConfig {
  std::size_t classes = 5;  // including background
  std::size_t dim = 32;
  std::size_t videos = 8;
  std::size_t frames = 3000;
  double sep = 10.0;
  double noise = 1.0;
  double instance_spread = 0.0;  // per-segment mean offset std, per coordinate
  std::size_t min_segment = 300;
  std::size_t max_segment = 900;
  TransitionMode transitions = TransitionMode::kAlternating;
  // When set, background frames are pure noise instead of noise around the
  // background anchor.
  bool background_noise_only = false;
  // Relative strength of the perturbation separating class-name and future-prompt
  // embeddings from the prompt embeddings (the anchors).
  double text_jitter = 0.5;
  float fps = 30.0f;
  std::uint64_t seed = 0;        // per-video labels and noise
  std::uint64_t world_seed = 0;  // anchors and text embeddings, shared across splits
  std::string id_prefix = "video";

  void validate() const;
};

struct SynthData {
  Dataset dataset;
  ClassVocabulary vocab;
  Tensor<float> anchors;  // [C x d] orthonormal rows
  TextEmbeddings class_name;
  TextEmbeddings prompt;
  TextEmbeddings future;
};

// Every class gets an orthonormal anchor direction; a frame of class c is
// anchor_c * sep + N(0, noise^2 I). The prompt embeddings are the anchors.
SynthData synth_dataset(const SynthConfig& cfg);

// Index of the anchor row with the largest cosine similarity to `frame`.
std::size_t nearest_anchor(std::span<const float> frame, const Tensor<float>& anchors);

}  // namespace toad
