#include "toad/data.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "bytes.hpp"

namespace toad {
namespace {

using detail::ByteReader;
using detail::ByteWriter;
using detail::checked_u32;

constexpr std::string_view kFeatMagic = "TOADFEAT";
constexpr std::string_view kLablMagic = "TOADLABL";
constexpr std::string_view kTextMagic = "TOADTEXT";

std::string replace_placeholder(std::string_view tmpl, const std::string& name) {
  std::string out(tmpl);
  const auto at = out.find("{}");
  out.replace(at, 2, name);
  return out;
}

}  // namespace

const char* to_string(TextMode mode) {
  switch (mode) {
    case TextMode::kClassName: return "class_name";
    case TextMode::kPrompt: return "prompt";
    case TextMode::kFuturePrompt: return "future_prompt";
  }
  return "unknown";
}

std::string ClassVocabulary::prompt(std::size_t c) const {
  if (c == 0) return std::string(kBackgroundPrompt);
  return replace_placeholder(kPromptTemplate, names.at(c));
}

std::string ClassVocabulary::future_prompt(std::size_t c) const {
  if (c == 0) return std::string(kBackgroundPrompt) + " in the future";
  return replace_placeholder(kFutureTemplate, names.at(c));
}

void ClassVocabulary::validate() const {
  if (names.size() < 2) throw DataError("vocabulary needs background plus at least one action");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) throw DataError("vocabulary line " + std::to_string(i) + " is empty");
    if (!seen.insert(names[i]).second) {
      throw DataError("vocabulary name '" + names[i] + "' is duplicated");
    }
  }
}

std::string encode_features(const FeatureSequence& seq) {
  if (seq.features.rank() != 2) {
    throw DimensionError("features must be N x d, got " + shape_string(seq.features.shape()));
  }
  ByteWriter w;
  w.magic(kFeatMagic);
  w.u32(kFormatVersion);
  w.f32(seq.fps);
  w.u32(checked_u32(seq.frames(), "frame count"));
  w.u32(checked_u32(seq.dim(), "feature dim"));
  for (float v : seq.features.data()) w.f32(v);
  return w.take();
}

FeatureSequence decode_features(std::string_view bytes, std::string video_id) {
  ByteReader r(bytes);
  r.magic(kFeatMagic, "feature file");
  r.version("feature file");
  FeatureSequence seq;
  seq.video_id = std::move(video_id);
  seq.fps = r.f32("feature header");
  const std::uint32_t n = r.u32("feature header");
  const std::uint32_t d = r.u32("feature header");
  if (n == 0 || d == 0) {
    throw ParseError(ParseError::Kind::kDimension, r.offset() - 8,
                     "feature file: N and d must be positive (N=" + std::to_string(n) +
                         ", d=" + std::to_string(d) + ")");
  }
  const std::size_t count = static_cast<std::size_t>(n) * d;
  r.need(count * 4, "feature payload");
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    data[i] = r.f32("feature payload");
    if (!std::isfinite(data[i])) {
      throw ParseError(ParseError::Kind::kRange, at,
                       "feature file: non-finite value at frame " + std::to_string(i / d));
    }
  }
  r.finish("feature file");
  seq.features = Tensor<float>({n, d}, std::move(data));
  return seq;
}

std::string encode_labels(const LabelTrack& track) {
  ByteWriter w;
  w.magic(kLablMagic);
  w.u32(kFormatVersion);
  w.u32(checked_u32(track.frames(), "frame count"));
  w.u32(checked_u32(track.classes, "class count"));
  for (auto v : track.labels) w.u16(v);
  return w.take();
}

LabelTrack decode_labels(std::string_view bytes, std::string video_id) {
  ByteReader r(bytes);
  r.magic(kLablMagic, "label file");
  r.version("label file");
  LabelTrack track;
  track.video_id = std::move(video_id);
  const std::uint32_t n = r.u32("label header");
  track.classes = r.u32("label header");
  if (n == 0 || track.classes == 0) {
    throw ParseError(ParseError::Kind::kDimension, r.offset() - 8,
                     "label file: N and C must be positive");
  }
  r.need(static_cast<std::size_t>(n) * 2, "label payload");
  track.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    track.labels[i] = r.u16("label payload");
    if (track.labels[i] >= track.classes) {
      throw ParseError(ParseError::Kind::kRange, at,
                       "label file: label " + std::to_string(track.labels[i]) + " at frame " +
                           std::to_string(i) + " outside [0, " + std::to_string(track.classes) +
                           ")");
    }
  }
  r.finish("label file");
  return track;
}

std::string encode_text_embeddings(const TextEmbeddings& text) {
  if (text.embeddings.rank() != 2) {
    throw DimensionError("text embeddings must be C x d, got " +
                         shape_string(text.embeddings.shape()));
  }
  ByteWriter w;
  w.magic(kTextMagic);
  w.u32(kFormatVersion);
  w.u32(checked_u32(text.embeddings.dim(0), "class count"));
  w.u32(checked_u32(text.embeddings.dim(1), "embedding dim"));
  w.u8(static_cast<std::uint8_t>(text.mode));
  for (float v : text.embeddings.data()) w.f32(v);
  return w.take();
}

TextEmbeddings decode_text_embeddings(std::string_view bytes) {
  ByteReader r(bytes);
  r.magic(kTextMagic, "text-embedding file");
  r.version("text-embedding file");
  const std::uint32_t c = r.u32("text header");
  const std::uint32_t d = r.u32("text header");
  if (c == 0 || d == 0) {
    throw ParseError(ParseError::Kind::kDimension, r.offset() - 8,
                     "text-embedding file: C and d must be positive");
  }
  const std::size_t mode_at = r.offset();
  const std::uint8_t mode = r.u8("text header");
  if (mode > 2) {
    throw ParseError(ParseError::Kind::kRange, mode_at,
                     "text-embedding file: unknown mode byte " + std::to_string(mode));
  }
  const std::size_t count = static_cast<std::size_t>(c) * d;
  r.need(count * 4, "text payload");
  std::vector<float> data(count);
  for (auto& v : data) v = r.f32("text payload");
  r.finish("text-embedding file");
  return {static_cast<TextMode>(mode), Tensor<float>({c, d}, std::move(data))};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(ParseError::Kind::kIo, 0, "cannot open " + path.string());
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

FeatureSequence load_features(const std::filesystem::path& path) {
  try {
    return decode_features(read_file(path), path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), e.offset(), path.string() + ": " + e.detail());
  }
}

void save_features(const std::filesystem::path& path, const FeatureSequence& seq) {
  write_file(path, encode_features(seq));
}

LabelTrack load_labels(const std::filesystem::path& path) {
  try {
    return decode_labels(read_file(path), path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), e.offset(), path.string() + ": " + e.detail());
  }
}

void save_labels(const std::filesystem::path& path, const LabelTrack& track) {
  write_file(path, encode_labels(track));
}

TextEmbeddings load_text_embeddings(const std::filesystem::path& path) {
  try {
    return decode_text_embeddings(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), e.offset(), path.string() + ": " + e.detail());
  }
}

void save_text_embeddings(const std::filesystem::path& path, const TextEmbeddings& text) {
  write_file(path, encode_text_embeddings(text));
}

ClassVocabulary load_vocabulary(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  ClassVocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.names.push_back(line);
  }
  while (!vocab.names.empty() && vocab.names.back().empty()) vocab.names.pop_back();
  vocab.validate();
  return vocab;
}

void save_vocabulary(const std::filesystem::path& path, const ClassVocabulary& vocab) {
  vocab.validate();
  std::string out;
  for (const auto& n : vocab.names) out += n + "\n";
  write_file(path, out);
}

std::vector<std::size_t> window_indices(std::size_t t, std::size_t length, std::size_t rate) {
  if (rate == 0) throw ConfigError("downsampling rate must be positive");
  std::vector<std::size_t> idx(length);
  const std::size_t earliest = t % rate;
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t back = (length - 1 - i) * rate;
    idx[i] = back <= t ? t - back : earliest;
  }
  return idx;
}

WindowSample sample_window(const FeatureSequence& seq, const LabelTrack& labels, std::size_t t,
                           std::size_t length, std::size_t rate) {
  if (t >= seq.frames() || t >= labels.frames()) {
    throw DataError("sample_window: frame " + std::to_string(t) + " outside video of " +
                    std::to_string(seq.frames()) + " frames");
  }
  WindowSample s;
  s.frames = window_indices(t, length, rate);
  const std::size_t d = seq.dim();
  s.x = Tensor<float>({length, d});
  for (std::size_t i = 0; i < length; ++i) {
    const auto src = seq.features.row(s.frames[i]);
    std::copy(src.begin(), src.end(), s.x.row(i).begin());
  }
  s.y = labels.labels[t];
  return s;
}

int future_label(const LabelTrack& labels, std::size_t t, std::size_t horizon) {
  if (horizon == 0) throw ConfigError("future horizon must be >= 1");
  const std::size_t target = t + horizon;
  return target < labels.frames() ? static_cast<int>(labels.labels[target]) : kNoLabel;
}

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& v : videos) n += v.features.frames();
  return n;
}

void Dataset::validate() const {
  if (videos.empty()) throw DataError("dataset has no videos");
  for (const auto& v : videos) {
    if (v.features.frames() == 0) throw DataError("video " + v.features.video_id + " is empty");
    if (v.features.dim() != dim) {
      throw DataError("video " + v.features.video_id + " has feature dim " +
                      std::to_string(v.features.dim()) + ", dataset expects " +
                      std::to_string(dim));
    }
    if (v.labels.frames() != v.features.frames()) {
      throw DataError("video " + v.features.video_id + " has " +
                      std::to_string(v.features.frames()) + " feature rows but " +
                      std::to_string(v.labels.frames()) + " labels");
    }
    for (std::size_t i = 0; i < v.labels.frames(); ++i) {
      if (v.labels.labels[i] >= classes) {
        throw LabelError("video " + v.features.video_id + ": label " +
                         std::to_string(v.labels.labels[i]) + " at frame " + std::to_string(i) +
                         " outside [0, " + std::to_string(classes) + ")");
      }
    }
  }
}

std::vector<WindowRef> training_windows(const Dataset& data, std::size_t rate) {
  if (rate == 0) throw ConfigError("downsampling rate must be positive");
  std::vector<WindowRef> refs;
  for (std::size_t v = 0; v < data.videos.size(); ++v) {
    const std::size_t n = data.videos[v].features.frames();
    for (std::size_t t = 0; t < n; t += rate) {
      refs.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t)});
    }
  }
  return refs;
}

WindowBatch<float> make_batch(const Dataset& data, std::span<const WindowRef> refs,
                              std::size_t length, std::size_t rate, std::size_t horizon) {
  WindowBatch<float> batch;
  const std::size_t d = data.dim;
  batch.x = Tensor<float>({refs.size(), length, d});
  float* out = batch.x.raw();
  for (const auto& ref : refs) {
    const Video& v = data.videos.at(ref.video);
    for (std::size_t f : window_indices(ref.frame, length, rate)) {
      const auto src = v.features.features.row(f);
      out = std::copy(src.begin(), src.end(), out);
    }
    batch.y.push_back(v.labels.labels.at(ref.frame));
    batch.y_future.push_back(future_label(v.labels, ref.frame, horizon));
    batch.frame_index.push_back(ref.frame);
  }
  return batch;
}

std::vector<Instance> find_instances(const Dataset& data) {
  std::vector<Instance> out;
  for (std::size_t v = 0; v < data.videos.size(); ++v) {
    const auto& labels = data.videos[v].labels.labels;
    std::size_t begin = 0;
    for (std::size_t t = 1; t <= labels.size(); ++t) {
      if (t == labels.size() || labels[t] != labels[begin]) {
        out.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(begin),
                       static_cast<std::uint32_t>(t), labels[begin]});
        begin = t;
      }
    }
  }
  return out;
}

FewShotSubset fewshot_subset(const Dataset& data, std::size_t shots, std::uint64_t seed,
                             std::size_t rate) {
  if (shots == 0) throw ConfigError("few-shot count must be positive");
  if (rate == 0) throw ConfigError("downsampling rate must be positive");
  std::map<int, std::vector<Instance>> by_class;
  for (const auto& inst : find_instances(data)) by_class[inst.label].push_back(inst);

  FewShotSubset subset;
  std::set<WindowRef> unique;
  for (std::size_t c = 0; c < data.classes; ++c) {
    auto it = by_class.find(static_cast<int>(c));
    if (it == by_class.end()) {
      throw DataError("few-shot: class " + std::to_string(c) + " has no annotated instance");
    }
    auto pool = it->second;
    // One stream per class keeps the selection for class c independent of the others.
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (c + 1)));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(shots, pool.size()));
    for (const auto& inst : pool) {
      subset.chosen.push_back(inst);
      const std::uint32_t first = (inst.begin + static_cast<std::uint32_t>(rate) - 1) /
                                  static_cast<std::uint32_t>(rate) *
                                  static_cast<std::uint32_t>(rate);
      if (first >= inst.end) {
        unique.insert({inst.video, inst.begin});
        continue;
      }
      for (std::uint32_t t = first; t < inst.end; t += static_cast<std::uint32_t>(rate)) {
        unique.insert({inst.video, t});
      }
    }
  }
  subset.unique.assign(unique.begin(), unique.end());
  const std::size_t full = training_windows(data, rate).size();
  if (subset.unique.size() >= full) {
    subset.windows = subset.unique;
  } else {
    subset.windows.reserve(full);
    while (subset.windows.size() < full) {
      const std::size_t take = std::min(subset.unique.size(), full - subset.windows.size());
      subset.windows.insert(subset.windows.end(), subset.unique.begin(),
                            subset.unique.begin() + static_cast<std::ptrdiff_t>(take));
    }
  }
  return subset;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " not found");
  std::vector<fs::path> feats;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".feat") feats.push_back(entry.path());
  }
  std::sort(feats.begin(), feats.end());
  if (feats.empty()) throw DataError("no .feat files in " + dir.string());
  Dataset data;
  for (const auto& f : feats) {
    Video v;
    v.features = load_features(f);
    auto label_path = f;
    label_path.replace_extension(".labels");
    v.labels = load_labels(label_path);
    if (data.videos.empty()) {
      data.classes = v.labels.classes;
      data.dim = v.features.dim();
    } else if (v.labels.classes != data.classes) {
      throw DataError(label_path.string() + " declares " + std::to_string(v.labels.classes) +
                      " classes, expected " + std::to_string(data.classes));
    }
    data.videos.push_back(std::move(v));
  }
  data.validate();
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  for (const auto& v : data.videos) {
    save_features(dir / (v.features.video_id + ".feat"), v.features);
    save_labels(dir / (v.features.video_id + ".labels"), v.labels);
  }
}

}  // namespace toad
