#include "toad/synth.hpp"

#include <cmath>
#include <random>

namespace toad {

const char* to_string(TransitionMode mode) {
  switch (mode) {
    case TransitionMode::kAlternating: return "alternating";
    case TransitionMode::kCyclic: return "cyclic";
  }
  return "unknown";
}

TransitionMode parse_transition_mode(const std::string& text) {
  if (text == "alternating") return TransitionMode::kAlternating;
  if (text == "cyclic") return TransitionMode::kCyclic;
  throw ConfigError("unknown transition mode '" + text + "' (expected alternating or cyclic)");
}

void SynthConfig::validate() const {
  if (classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (dim == 0 || videos == 0 || frames == 0) {
    throw ConfigError("synth: dim, videos and frames must be positive");
  }
  if (!(sep >= 0.0) || !(noise >= 0.0)) throw ConfigError("synth: sep and noise must be >= 0");
  if (!(instance_spread >= 0.0)) throw ConfigError("synth: instance_spread must be >= 0");
  if (min_segment == 0 || max_segment < min_segment) {
    throw ConfigError("synth: need 0 < min_segment <= max_segment");
  }
  if (classes > 65535) throw ConfigError("synth: labels are stored as u16");
  if (classes > dim) throw ConfigError("synth: orthonormal anchors need classes <= dim");
}

namespace {

std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& x : v) {
      x = n(rng);
      sq += x * x;
    }
  } while (sq == 0.0);
  for (auto& x : v) x /= std::sqrt(sq);
  return v;
}

Tensor<float> make_anchors(std::size_t classes, std::size_t d, std::mt19937_64& rng) {
  std::vector<std::vector<double>> rows;
  while (rows.size() < classes) {
    auto v = random_unit(d, rng);
    if (classes <= d) {
      // Gram-Schmidt against the rows so far.
      for (const auto& r : rows) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += v[i] * r[i];
        for (std::size_t i = 0; i < d; ++i) v[i] -= dot * r[i];
      }
      double sq = 0.0;
      for (double x : v) sq += x * x;
      if (sq < 1e-12) continue;
      for (auto& x : v) x /= std::sqrt(sq);
    }
    rows.push_back(std::move(v));
  }
  Tensor<float> out({classes, d});
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < d; ++i) out.at(c, i) = static_cast<float>(rows[c][i]);
  }
  return out;
}

Tensor<float> jittered(const Tensor<float>& anchors, double jitter, std::mt19937_64& rng) {
  Tensor<float> out(anchors.shape());
  for (std::size_t c = 0; c < anchors.rows(); ++c) {
    const auto r = random_unit(anchors.cols(), rng);
    double sq = 0.0;
    std::vector<double> row(anchors.cols());
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = anchors.at(c, i) + jitter * r[i];
      sq += row[i] * row[i];
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      out.at(c, i) = static_cast<float>(row[i] / std::sqrt(sq));
    }
  }
  return out;
}

std::vector<std::uint16_t> make_labels(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(cfg.min_segment, cfg.max_segment);
  std::uniform_int_distribution<std::size_t> action(1, cfg.classes - 1);
  std::uniform_int_distribution<std::size_t> any(0, cfg.classes - 1);
  std::vector<std::uint16_t> labels;
  labels.reserve(cfg.frames);
  std::size_t current = cfg.transitions == TransitionMode::kCyclic ? any(rng) : 0;
  while (labels.size() < cfg.frames) {
    const std::size_t n = std::min(len(rng), cfg.frames - labels.size());
    labels.insert(labels.end(), n, static_cast<std::uint16_t>(current));
    if (cfg.transitions == TransitionMode::kCyclic) {
      current = (current + 1) % cfg.classes;
    } else {
      current = current == 0 ? action(rng) : 0;
    }
  }
  return labels;
}

}  // namespace

SynthData synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.world_seed);
  SynthData out;
  out.anchors = make_anchors(cfg.classes, cfg.dim, rng);
  out.prompt = {TextMode::kPrompt, out.anchors};
  out.class_name = {TextMode::kClassName, jittered(out.anchors, cfg.text_jitter, rng)};
  out.future = {TextMode::kFuturePrompt, jittered(out.anchors, cfg.text_jitter, rng)};
  out.vocab.names.push_back("background");
  for (std::size_t c = 1; c < cfg.classes; ++c) out.vocab.names.push_back("action_" + std::to_string(c));

  out.dataset.classes = cfg.classes;
  out.dataset.dim = cfg.dim;
  for (std::size_t v = 0; v < cfg.videos; ++v) {
    std::mt19937_64 vrng(cfg.seed * 1000003ULL + 7919ULL * (v + 1));
    std::normal_distribution<double> noise(0.0, 1.0);
    Video video;
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04zu", cfg.id_prefix.c_str(), v);
    video.features.video_id = id;
    video.features.fps = cfg.fps;
    video.labels.video_id = id;
    video.labels.classes = cfg.classes;
    video.labels.labels = make_labels(cfg, vrng);
    video.features.features = Tensor<float>({cfg.frames, cfg.dim});
    std::vector<double> offset(cfg.dim, 0.0);
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const std::size_t c = video.labels.labels[t];
      const bool pure_noise = c == 0 && cfg.background_noise_only;
      const bool segment_start = t == 0 || c != video.labels.labels[t - 1];
      if (segment_start && cfg.instance_spread > 0.0) {
        for (auto& o : offset) o = cfg.instance_spread * noise(vrng);
      }
      auto row = video.features.features.row(t);
      for (std::size_t i = 0; i < cfg.dim; ++i) {
        const double mean = pure_noise ? 0.0 : cfg.sep * out.anchors.at(c, i) + offset[i];
        row[i] = static_cast<float>(mean + cfg.noise * noise(vrng));
      }
    }
    out.dataset.videos.push_back(std::move(video));
  }
  return out;
}

std::size_t nearest_anchor(std::span<const float> frame, const Tensor<float>& anchors) {
  std::size_t best = 0;
  double best_cos = -std::numeric_limits<double>::infinity();
  double norm = 0.0;
  for (float v : frame) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  for (std::size_t c = 0; c < anchors.rows(); ++c) {
    const auto a = anchors.row(c);
    double dot = 0.0, an = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += static_cast<double>(a[i]) * frame[i];
      an += static_cast<double>(a[i]) * a[i];
    }
    const double cos = dot / (norm * std::sqrt(an) + 1e-300);
    if (cos > best_cos) {
      best_cos = cos;
      best = c;
    }
  }
  return best;
}

}  // namespace toad
