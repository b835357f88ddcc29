#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "toad/batch.hpp"
#include "toad/tape.hpp"
#include "toad/tensor.hpp"

namespace toad {

enum class ClassifierMode { kClassName, kPrompt, kMixed };

const char* to_string(ClassifierMode mode);
ClassifierMode parse_classifier_mode(const std::string& text);

struct ModelConfig {
  std::size_t dim = 768;
  std::size_t window = 64;
  std::size_t layers = 6;
  std::size_t heads = 12;
  std::size_t classes = 21;  // including background
  std::size_t mlp_ratio = 4;
  double tau = std::log(100.0);  // logits are scaled by exp(tau)
  double lambda = 0.5;
  bool future_enabled = true;
  ClassifierMode classifier_mode = ClassifierMode::kPrompt;
  double layer_norm_eps = 1e-5;
  // Window lengths that get a positional table besides `window`.
  std::vector<std::size_t> extra_windows = {8, 16, 32, 64};

  double logit_scale() const { return std::exp(tau); }
  std::vector<std::size_t> positional_lengths() const;
  // Throws ConfigError on violated invariants.
  void validate() const;
};

// Frozen text classifiers. Rows are unit L2 norm.
template <typename T>
struct ClassifierMatrix {
  Tensor<T> current;  // C x d
  Tensor<T> future;   // C x d, empty when no future embeddings were supplied

  template <typename U>
  ClassifierMatrix<U> cast() const {
    return {current.template cast<U>(), future.template cast<U>()};
  }
};

// Builds the frozen classifiers. `mixed` is normalize(mean(normalize(name), normalize(prompt))).
// The future matrix is always the normalized future-prompt embeddings.
// A zero-norm row raises DegenerateInputError naming the class index.
template <typename T>
ClassifierMatrix<T> build_classifier(const Tensor<T>& class_name, const Tensor<T>& prompt,
                                     const Tensor<T>* future_prompt, ClassifierMode mode);

template <typename T>
struct BlockParams {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> w1, b1, w2, b2;
};

// Linear maps use the row-vector convention y = x.W + b with W stored [in x out].
template <typename T>
struct ModelParams {
  std::map<std::size_t, Tensor<T>> positional;  // window length -> [T x d]
  std::vector<BlockParams<T>> blocks;
  Tensor<T> future_weight;  // [d x d]
  Tensor<T> future_bias;    // [d]
  ClassifierMatrix<T> classifier;
  T tau = T{0};

  // Visits (name, tensor) for every trainable tensor in a fixed order.
  template <typename F>
  void for_each_trainable(F&& f);
  template <typename F>
  void for_each_trainable(F&& f) const;

  std::size_t trainable_count() const;
  std::size_t trainable_elements() const;
  // Hash of the classifier matrices and tau.
  std::uint64_t frozen_checksum() const;

  template <typename U>
  ModelParams<U> cast() const;
};

// Seeded initialisation: weights N(0, 0.02^2), biases 0, layer-norm gains 1,
// future projection N(0, 1/d).
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, ClassifierMatrix<T> classifier,
                           std::uint64_t seed);

// Gradient buffers aligned with ModelParams::for_each_trainable order.
template <typename T>
struct Gradients {
  std::vector<Tensor<T>> tensors;

  static Gradients zeros_like(const ModelParams<T>& params);
  void set_zero();
};

// Maps each trainable tensor of a ModelParams to its gradient buffer.
template <typename T>
class GradientSinks {
 public:
  GradientSinks() = default;
  GradientSinks(const ModelParams<T>& params, Gradients<T>& grads);
  Tensor<T>* find(const Tensor<T>& param) const;

 private:
  std::unordered_map<const Tensor<T>*, Tensor<T>*> map_;
};

template <typename T>
struct VideoEmbedding {
  Tensor<T> v;      // [d], unit norm
  Tensor<T> v_raw;  // [d], pooled encoder output before normalisation
};

enum class DeadReluPolicy {
  kStrict,  // throw DegenerateInputError
  kNudge,   // add 1e-8 to the first coordinate and report it
};

// Tape-level building blocks shared by inference and training.
template <typename T>
struct EncodedIds {
  typename Tape<T>::Id v_raw;
  typename Tape<T>::Id v;
};

template <typename T>
EncodedIds<T> encode_on_tape(Tape<T>& tape, const ModelConfig& cfg, const ModelParams<T>& params,
                             typename Tape<T>::Id window, const GradientSinks<T>* sinks);

// Returns the id of the unit-norm future embedding. Sets `nudged` when the
// ReLU output was all zero and the nudge policy applied.
template <typename T>
typename Tape<T>::Id future_on_tape(Tape<T>& tape, const ModelParams<T>& params,
                                    typename Tape<T>::Id v_raw, const GradientSinks<T>* sinks,
                                    DeadReluPolicy policy, bool& nudged);

// [T x d] window -> pooled, normalised video embedding.
template <typename T>
VideoEmbedding<T> encode_window(const ModelConfig& cfg, const ModelParams<T>& params,
                                const Tensor<T>& window);

// z[c] = <v, t_c>. `v` has d elements, `classifier` is C x d.
template <typename T>
Tensor<T> classify(const Tensor<T>& v, const Tensor<T>& classifier);

// normalize(relu(v_raw.W + b)).
template <typename T>
Tensor<T> future_project(const ModelParams<T>& params, const Tensor<T>& v_raw,
                         DeadReluPolicy policy = DeadReluPolicy::kStrict);

template <typename T>
struct WindowScores {
  Tensor<T> current;  // [C]
  Tensor<T> future;   // [C], empty when the future head is disabled
};

// encode_window -> classify (and the future head when enabled) for one window.
template <typename T>
WindowScores<T> score_window(const ModelConfig& cfg, const ModelParams<T>& params,
                             const Tensor<T>& window,
                             DeadReluPolicy policy = DeadReluPolicy::kNudge);

// In place: z_c <- log(p_c / (1 - p_c)) with p = softmax(scale * z). Ranks
// frames per class exactly like p_c does and stays finite where float softmax
// (or log softmax, for the winning class) would saturate into ties.
template <typename T>
void log_odds(std::span<T> z, double scale) {
  if (z.size() < 2) {
    for (T& v : z) v = static_cast<T>(HUGE_VAL);
    return;
  }
  // Largest and second largest scaled scores give each class its rival maximum.
  std::size_t best = 0;
  for (std::size_t c = 1; c < z.size(); ++c) if (z[c] > z[best]) best = c;
  std::size_t second = best == 0 ? 1 : 0;
  for (std::size_t c = 0; c < z.size(); ++c) if (c != best && z[c] > z[second]) second = c;
  const double top = scale * static_cast<double>(z[best]);
  const double runner = scale * static_cast<double>(z[second]);
  double all = 0.0;
  for (T v : z) all += std::exp(scale * static_cast<double>(v) - top);
  double rest_best = 0.0;  // sum over j != best, relative to runner
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != best) rest_best += std::exp(scale * static_cast<double>(z[j]) - runner);
  }
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double own = scale * static_cast<double>(z[c]);
    double rivals;
    if (c == best) {
      rivals = runner + std::log(rest_best);
    } else {
      // Remove own term from the full sum; the best term keeps it well away from 0.
      rivals = top + std::log(std::max(all - std::exp(own - top), 1.0));
    }
    z[c] = static_cast<T>(own - rivals);
  }
}

template <typename T>
struct ForwardOutput {
  Tensor<T> z;                          // [B x C]
  std::optional<Tensor<T>> z_future;    // [B x C] when the future head is enabled
};

// Scores every window of the batch independently.
template <typename T>
ForwardOutput<T> forward(const ModelConfig& cfg, const ModelParams<T>& params,
                         const WindowBatch<T>& batch,
                         DeadReluPolicy policy = DeadReluPolicy::kNudge);

// Configuration plus f32 parameters: what a checkpoint holds and what the
// streaming engine runs.
struct Model {
  ModelConfig config;
  ModelParams<float> params;
};

}  // namespace toad

#include "toad/model_params_inl.hpp"
