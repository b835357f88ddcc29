#include "toad/model.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace toad {

const char* to_string(ClassifierMode mode) {
  switch (mode) {
    case ClassifierMode::kClassName: return "class_name";
    case ClassifierMode::kPrompt: return "prompt";
    case ClassifierMode::kMixed: return "mixed";
  }
  return "unknown";
}

ClassifierMode parse_classifier_mode(const std::string& text) {
  if (text == "class_name") return ClassifierMode::kClassName;
  if (text == "prompt") return ClassifierMode::kPrompt;
  if (text == "mixed") return ClassifierMode::kMixed;
  throw ConfigError("unknown classifier mode '" + text +
                    "' (expected class_name, prompt or mixed)");
}

std::vector<std::size_t> ModelConfig::positional_lengths() const {
  std::set<std::size_t> lengths(extra_windows.begin(), extra_windows.end());
  lengths.insert(window);
  return {lengths.begin(), lengths.end()};
}

void ModelConfig::validate() const {
  if (dim == 0) throw ConfigError("dim must be positive");
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (window == 0) throw ConfigError("window must be positive");
  for (std::size_t w : extra_windows) {
    if (w == 0) throw ConfigError("extra window lengths must be positive");
  }
  if (classes < 2) throw ConfigError("need at least two classes (background + one action)");
  if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
  if (!std::isfinite(tau) || !(std::exp(tau) > 0.0) || !std::isfinite(std::exp(tau))) {
    throw ConfigError("tau must be finite with finite positive exp(tau)");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
}

namespace {

template <typename T>
Tensor<T> normalize_rows_named(const Tensor<T>& m, const char* what) {
  if (m.rank() != 2) {
    throw DimensionError(std::string(what) + " embeddings must be C x d, got " +
                         shape_string(m.shape()));
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    T sq = T{0};
    for (T v : m.row(r)) sq += v * v;
    if (!(sq > T{0})) {
      throw DegenerateInputError(std::string(what) + " embedding for class " +
                                 std::to_string(r) + " has zero norm");
    }
  }
  return l2_normalize(m, 1);
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

template <typename T>
ClassifierMatrix<T> build_classifier(const Tensor<T>& class_name, const Tensor<T>& prompt,
                                     const Tensor<T>* future_prompt, ClassifierMode mode) {
  if (class_name.shape() != prompt.shape()) {
    throw DimensionError("class-name embeddings " + shape_string(class_name.shape()) +
                         " and prompt embeddings " + shape_string(prompt.shape()) + " differ");
  }
  const Tensor<T> name_n = normalize_rows_named(class_name, "class-name");
  const Tensor<T> prompt_n = normalize_rows_named(prompt, "prompt");
  ClassifierMatrix<T> out;
  switch (mode) {
    case ClassifierMode::kClassName:
      out.current = name_n;
      break;
    case ClassifierMode::kPrompt:
      out.current = prompt_n;
      break;
    case ClassifierMode::kMixed: {
      Tensor<T> mean(name_n.shape());
      for (std::size_t i = 0; i < mean.size(); ++i) {
        mean[i] = (name_n[i] + prompt_n[i]) * T{0.5};
      }
      out.current = normalize_rows_named(mean, "mixed");
      break;
    }
  }
  if (future_prompt) {
    if (future_prompt->shape() != prompt.shape()) {
      throw DimensionError("future-prompt embeddings " + shape_string(future_prompt->shape()) +
                           " do not match " + shape_string(prompt.shape()));
    }
    out.future = normalize_rows_named(*future_prompt, "future-prompt");
  }
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, ClassifierMatrix<T> classifier,
                           std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.dim, hidden = cfg.dim * cfg.mlp_ratio;
  if (classifier.current.rank() != 2 || classifier.current.dim(0) != cfg.classes ||
      classifier.current.dim(1) != d) {
    throw DimensionError("classifier " + shape_string(classifier.current.shape()) +
                         " does not match classes x dim = " + std::to_string(cfg.classes) +
                         "x" + std::to_string(d));
  }
  if (cfg.future_enabled && classifier.future.shape() != classifier.current.shape()) {
    throw ConfigError("future head enabled but future classifier is " +
                      shape_string(classifier.future.shape()));
  }
  std::mt19937_64 rng(seed);
  constexpr double kStd = 0.02;
  ModelParams<T> p;
  for (std::size_t len : cfg.positional_lengths()) {
    p.positional.emplace(len, normal_tensor<T>({len, d}, kStd, rng));
  }
  p.blocks.resize(cfg.layers);
  for (auto& b : p.blocks) {
    b.ln1_gain = Tensor<T>({d}, T{1});
    b.ln1_bias = Tensor<T>({d});
    b.wq = normal_tensor<T>({d, d}, kStd, rng);
    b.bq = Tensor<T>({d});
    b.wk = normal_tensor<T>({d, d}, kStd, rng);
    b.bk = Tensor<T>({d});
    b.wv = normal_tensor<T>({d, d}, kStd, rng);
    b.bv = Tensor<T>({d});
    b.wo = normal_tensor<T>({d, d}, kStd, rng);
    b.bo = Tensor<T>({d});
    b.ln2_gain = Tensor<T>({d}, T{1});
    b.ln2_bias = Tensor<T>({d});
    b.w1 = normal_tensor<T>({d, hidden}, kStd, rng);
    b.b1 = Tensor<T>({hidden});
    b.w2 = normal_tensor<T>({hidden, d}, kStd, rng);
    b.b2 = Tensor<T>({d});
  }
  p.future_weight = normal_tensor<T>({d, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.future_bias = Tensor<T>({d});
  p.classifier = std::move(classifier);
  p.tau = static_cast<T>(cfg.tau);
  return p;
}

template <typename T>
Gradients<T> Gradients<T>::zeros_like(const ModelParams<T>& params) {
  Gradients<T> g;
  params.for_each_trainable(
      [&](const std::string&, const Tensor<T>& t) { g.tensors.emplace_back(t.shape()); });
  return g;
}

template <typename T>
void Gradients<T>::set_zero() {
  for (auto& t : tensors) t.fill(T{0});
}

template <typename T>
GradientSinks<T>::GradientSinks(const ModelParams<T>& params, Gradients<T>& grads) {
  std::size_t i = 0;
  params.for_each_trainable([&](const std::string&, const Tensor<T>& t) {
    map_.emplace(&t, &grads.tensors.at(i++));
  });
}

template <typename T>
Tensor<T>* GradientSinks<T>::find(const Tensor<T>& param) const {
  auto it = map_.find(&param);
  return it == map_.end() ? nullptr : it->second;
}

template <typename T>
EncodedIds<T> encode_on_tape(Tape<T>& tape, const ModelConfig& cfg, const ModelParams<T>& params,
                             typename Tape<T>::Id window, const GradientSinks<T>* sinks) {
  using Id = typename Tape<T>::Id;
  const Tensor<T>& x = tape.value(window);
  if (x.rank() != 2 || x.dim(1) != cfg.dim) {
    throw DimensionError("window must be T x " + std::to_string(cfg.dim) + ", got " +
                         shape_string(x.shape()));
  }
  const std::size_t len = x.dim(0);
  auto pos = params.positional.find(len);
  if (pos == params.positional.end()) {
    throw ConfigError("no positional table for window length " + std::to_string(len));
  }
  auto param = [&](const Tensor<T>& t) { return tape.parameter(t, sinks ? sinks->find(t) : nullptr); };
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  const std::size_t head_dim = cfg.dim / cfg.heads;
  const T attn_scale = T{1} / std::sqrt(static_cast<T>(head_dim));

  Id h = tape.add(window, param(pos->second));
  std::vector<Id> head_out(cfg.heads);
  for (const auto& b : params.blocks) {
    const Id a = tape.layer_norm(h, param(b.ln1_gain), param(b.ln1_bias), eps);
    const Id q = tape.add_row(tape.matmul(a, param(b.wq)), param(b.bq));
    const Id k = tape.add_row(tape.matmul(a, param(b.wk)), param(b.bk));
    const Id v = tape.add_row(tape.matmul(a, param(b.wv)), param(b.bv));
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      const Id qh = tape.slice_cols(q, hd * head_dim, head_dim);
      const Id kh = tape.slice_cols(k, hd * head_dim, head_dim);
      const Id vh = tape.slice_cols(v, hd * head_dim, head_dim);
      const Id scores = tape.scale(tape.matmul_bt(qh, kh), attn_scale);
      head_out[hd] = tape.matmul(tape.softmax_rows(scores), vh);
    }
    const Id merged = cfg.heads == 1 ? head_out[0] : tape.concat_cols(head_out);
    const Id attn = tape.add_row(tape.matmul(merged, param(b.wo)), param(b.bo));
    h = tape.add(h, attn);
    const Id m0 = tape.layer_norm(h, param(b.ln2_gain), param(b.ln2_bias), eps);
    const Id m1 = tape.gelu(tape.add_row(tape.matmul(m0, param(b.w1)), param(b.b1)));
    const Id m2 = tape.add_row(tape.matmul(m1, param(b.w2)), param(b.b2));
    h = tape.add(h, m2);
  }
  const Id v_raw = tape.mean_rows(h);
  return {v_raw, tape.l2_normalize_rows(v_raw)};
}

template <typename T>
typename Tape<T>::Id future_on_tape(Tape<T>& tape, const ModelParams<T>& params,
                                    typename Tape<T>::Id v_raw, const GradientSinks<T>* sinks,
                                    DeadReluPolicy policy, bool& nudged) {
  using Id = typename Tape<T>::Id;
  auto param = [&](const Tensor<T>& t) { return tape.parameter(t, sinks ? sinks->find(t) : nullptr); };
  const Id pre = tape.add_row(tape.matmul(v_raw, param(params.future_weight)),
                              param(params.future_bias));
  Id act = tape.relu(pre);
  nudged = false;
  const auto& values = tape.value(act).data();
  if (std::all_of(values.begin(), values.end(), [](T v) { return v == T{0}; })) {
    if (policy == DeadReluPolicy::kStrict) {
      throw DegenerateInputError("future projection: ReLU output is the zero vector");
    }
    Tensor<T> bump(tape.value(act).shape());
    bump[0] = static_cast<T>(1e-8);
    act = tape.add(act, tape.constant(std::move(bump)));
    nudged = true;
  }
  return tape.l2_normalize_rows(act);
}

template <typename T>
VideoEmbedding<T> encode_window(const ModelConfig& cfg, const ModelParams<T>& params,
                                const Tensor<T>& window) {
  Tape<T> tape;
  const auto ids = encode_on_tape(tape, cfg, params, tape.parameter(window, nullptr),
                                  static_cast<const GradientSinks<T>*>(nullptr));
  VideoEmbedding<T> out{tape.value(ids.v), tape.value(ids.v_raw)};
  out.v.reshape({cfg.dim});
  out.v_raw.reshape({cfg.dim});
  return out;
}

template <typename T>
Tensor<T> classify(const Tensor<T>& v, const Tensor<T>& classifier) {
  if (classifier.rank() != 2 || v.size() != classifier.cols()) {
    throw DimensionError("classify: embedding of " + std::to_string(v.size()) +
                         " elements against classifier " + shape_string(classifier.shape()));
  }
  Tensor<T> row = v;
  row.reshape({1, v.size()});
  Tensor<T> z = matmul_bt(row, classifier);
  z.reshape({classifier.rows()});
  return z;
}

template <typename T>
Tensor<T> future_project(const ModelParams<T>& params, const Tensor<T>& v_raw,
                         DeadReluPolicy policy) {
  Tape<T> tape;
  Tensor<T> row = v_raw;
  row.reshape({1, v_raw.size()});
  bool nudged = false;
  const auto id = future_on_tape(tape, params, tape.constant(std::move(row)),
                                 static_cast<const GradientSinks<T>*>(nullptr), policy, nudged);
  Tensor<T> out = tape.value(id);
  out.reshape({v_raw.size()});
  return out;
}

template <typename T>
WindowScores<T> score_window(const ModelConfig& cfg, const ModelParams<T>& params,
                             const Tensor<T>& window, DeadReluPolicy policy) {
  Tape<T> tape;
  const auto ids = encode_on_tape(tape, cfg, params, tape.parameter(window, nullptr),
                                  static_cast<const GradientSinks<T>*>(nullptr));
  const auto z = tape.matmul_bt(ids.v, tape.parameter(params.classifier.current, nullptr));
  WindowScores<T> out;
  out.current = tape.value(z);
  out.current.reshape({cfg.classes});
  if (cfg.future_enabled) {
    bool nudged = false;
    const auto f = future_on_tape(tape, params, ids.v_raw,
                                  static_cast<const GradientSinks<T>*>(nullptr), policy, nudged);
    const auto zf = tape.matmul_bt(f, tape.parameter(params.classifier.future, nullptr));
    out.future = tape.value(zf);
    out.future.reshape({cfg.classes});
  }
  return out;
}

template <typename T>
ForwardOutput<T> forward(const ModelConfig& cfg, const ModelParams<T>& params,
                         const WindowBatch<T>& batch, DeadReluPolicy policy) {
  const std::size_t n = batch.size();
  ForwardOutput<T> out;
  out.z = Tensor<T>({n, cfg.classes});
  if (cfg.future_enabled) out.z_future = Tensor<T>({n, cfg.classes});
  for (std::size_t b = 0; b < n; ++b) {
    const auto scores = score_window(cfg, params, batch.window(b), policy);
    std::copy(scores.current.data().begin(), scores.current.data().end(), out.z.row(b).begin());
    if (out.z_future) {
      std::copy(scores.future.data().begin(), scores.future.data().end(),
                out.z_future->row(b).begin());
    }
  }
  return out;
}

#define TOAD_INSTANTIATE_MODEL(T)                                                             \
  template ClassifierMatrix<T> build_classifier(const Tensor<T>&, const Tensor<T>&,           \
                                                const Tensor<T>*, ClassifierMode);            \
  template ModelParams<T> init_params(const ModelConfig&, ClassifierMatrix<T>, std::uint64_t); \
  template struct Gradients<T>;                                                               \
  template class GradientSinks<T>;                                                            \
  template EncodedIds<T> encode_on_tape(Tape<T>&, const ModelConfig&, const ModelParams<T>&,  \
                                        Tape<T>::Id, const GradientSinks<T>*);                \
  template Tape<T>::Id future_on_tape(Tape<T>&, const ModelParams<T>&, Tape<T>::Id,           \
                                      const GradientSinks<T>*, DeadReluPolicy, bool&);        \
  template VideoEmbedding<T> encode_window(const ModelConfig&, const ModelParams<T>&,         \
                                           const Tensor<T>&);                                 \
  template Tensor<T> classify(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> future_project(const ModelParams<T>&, const Tensor<T>&, DeadReluPolicy); \
  template WindowScores<T> score_window(const ModelConfig&, const ModelParams<T>&,            \
                                        const Tensor<T>&, DeadReluPolicy);                    \
  template ForwardOutput<T> forward(const ModelConfig&, const ModelParams<T>&,                \
                                    const WindowBatch<T>&, DeadReluPolicy);

TOAD_INSTANTIATE_MODEL(float)
TOAD_INSTANTIATE_MODEL(double)

#undef TOAD_INSTANTIATE_MODEL

}  // namespace toad
