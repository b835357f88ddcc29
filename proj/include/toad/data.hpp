#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "toad/batch.hpp"
#include "toad/tensor.hpp"

namespace toad {

// Per-video frame features, one row per original (pre-downsampling) frame.
struct FeatureSequence {
  std::string video_id;
  float fps = 30.0f;
  Tensor<float> features;  // [N x d]

  std::size_t frames() const { return features.rank() == 2 ? features.dim(0) : 0; }
  std::size_t dim() const { return features.rank() == 2 ? features.dim(1) : 0; }
};

// Per-frame labels; 0 is background.
struct LabelTrack {
  std::string video_id;
  std::size_t classes = 0;
  std::vector<std::uint16_t> labels;

  std::size_t frames() const { return labels.size(); }
};

enum class TextMode : std::uint8_t { kClassName = 0, kPrompt = 1, kFuturePrompt = 2 };

const char* to_string(TextMode mode);

struct TextEmbeddings {
  TextMode mode = TextMode::kPrompt;
  Tensor<float> embeddings;  // [C x d]
};

// Ordered class names; index 0 is background.
struct ClassVocabulary {
  static constexpr std::string_view kPromptTemplate = "a video of a person {}";
  static constexpr std::string_view kFutureTemplate = "a video of a person {} in the future";
  static constexpr std::string_view kBackgroundPrompt = "a video of background";

  std::vector<std::string> names;

  std::size_t size() const { return names.size(); }
  std::string prompt(std::size_t c) const;
  std::string future_prompt(std::size_t c) const;
  // Throws DataError on empty or duplicate names.
  void validate() const;
};

// Binary formats. All integers and floats are little-endian.
//   TOADFEAT: magic, u32 version, f32 fps, u32 N, u32 d, N*d f32
//   TOADLABL: magic, u32 version, u32 N, u32 C, N u16
//   TOADTEXT: magic, u32 version, u32 C, u32 d, u8 mode, C*d f32
inline constexpr std::uint32_t kFormatVersion = 1;

std::string encode_features(const FeatureSequence& seq);
FeatureSequence decode_features(std::string_view bytes, std::string video_id = {});
std::string encode_labels(const LabelTrack& track);
LabelTrack decode_labels(std::string_view bytes, std::string video_id = {});
std::string encode_text_embeddings(const TextEmbeddings& text);
TextEmbeddings decode_text_embeddings(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

FeatureSequence load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const FeatureSequence& seq);
LabelTrack load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const LabelTrack& track);
TextEmbeddings load_text_embeddings(const std::filesystem::path& path);
void save_text_embeddings(const std::filesystem::path& path, const TextEmbeddings& text);
ClassVocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const std::filesystem::path& path, const ClassVocabulary& vocab);

// Original-frame indices of the window ending at `t`: t-(T-1)*rate, ..., t-rate, t.
// Indices that would be negative are replaced by the earliest available one.
std::vector<std::size_t> window_indices(std::size_t t, std::size_t length, std::size_t rate);

struct WindowSample {
  Tensor<float> x;  // [T x d]
  int y = 0;
  std::vector<std::size_t> frames;
};

WindowSample sample_window(const FeatureSequence& seq, const LabelTrack& labels, std::size_t t,
                           std::size_t length, std::size_t rate = 6);

// labels[t + horizon] or kNoLabel past the end of the video.
int future_label(const LabelTrack& labels, std::size_t t, std::size_t horizon);

struct Video {
  FeatureSequence features;
  LabelTrack labels;
};

struct Dataset {
  std::vector<Video> videos;
  std::size_t classes = 0;
  std::size_t dim = 0;

  std::size_t total_frames() const;
  // Checks alignment, label range and a common feature dimension.
  void validate() const;
};

struct WindowRef {
  std::uint32_t video = 0;
  std::uint32_t frame = 0;

  friend bool operator==(const WindowRef&, const WindowRef&) = default;
  friend auto operator<=>(const WindowRef&, const WindowRef&) = default;
};

// Dense training positions: every `rate`-th original frame of every video.
std::vector<WindowRef> training_windows(const Dataset& data, std::size_t rate);

WindowBatch<float> make_batch(const Dataset& data, std::span<const WindowRef> refs,
                              std::size_t length, std::size_t rate, std::size_t horizon);

// A maximal run of one label inside one video: frames [begin, end).
struct Instance {
  std::uint32_t video = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  int label = 0;

  friend bool operator==(const Instance&, const Instance&) = default;
};

std::vector<Instance> find_instances(const Dataset& data);

struct FewShotSubset {
  std::vector<Instance> chosen;       // k per class
  std::vector<WindowRef> unique;      // training positions inside the chosen instances
  std::vector<WindowRef> windows;     // `unique` tiled to the full-shot window count
};

// Chooses k instances per class (background included) with a seeded shuffle, so
// the subset for k1 < k2 is contained in the subset for k2. The windows are
// repeated until they match the full-shot count, giving equal iterations per epoch.
FewShotSubset fewshot_subset(const Dataset& data, std::size_t shots, std::uint64_t seed,
                             std::size_t rate);

// Directory layout: <dir>/<split>/<video>.feat and <video>.labels.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

}  // namespace toad
