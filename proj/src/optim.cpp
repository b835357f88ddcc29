#include "toad/optim.hpp"

#include <algorithm>
#include <numbers>
#include <string>

namespace toad {

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!std::isfinite(tau)) throw ConfigError("tau must be finite");
}

template <typename T>
double ce_loss(const Tensor<T>& z, std::span<const int> y, double tau) {
  return cross_entropy(z, y, std::exp(tau)).loss;
}

template <typename T>
CrossEntropyResult<T> ce_loss_with_grad(const Tensor<T>& z, std::span<const int> y, double tau) {
  return cross_entropy(z, y, std::exp(tau));
}

template <typename T>
double total_loss(const Tensor<T>& z, const Tensor<T>* z_future, std::span<const int> y,
                  const std::vector<int>* y_future, const LossConfig& cfg) {
  cfg.validate();
  if ((z_future == nullptr) != (y_future == nullptr)) {
    throw ConfigError("future logits and future labels must be supplied together");
  }
  double loss = ce_loss(z, y, cfg.tau);
  if (!z_future) return loss;
  if (y_future->size() != z_future->rows()) {
    throw DimensionError("total_loss: " + std::to_string(y_future->size()) +
                         " future labels for " + std::to_string(z_future->rows()) + " rows");
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < y_future->size(); ++i) {
    if ((*y_future)[i] != kNoLabel) keep.push_back(i);
  }
  if (keep.empty()) return loss;
  Tensor<T> zf({keep.size(), z_future->cols()});
  std::vector<int> yf;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto src = z_future->row(keep[r]);
    std::copy(src.begin(), src.end(), zf.row(r).begin());
    yf.push_back((*y_future)[keep[r]]);
  }
  return loss + cfg.lambda * ce_loss(zf, yf, cfg.tau);
}

void AdamWConfig::validate() const {
  if (!(lr_base >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(warmup_epochs >= 0.0) || !(total_epochs > warmup_epochs)) {
    throw ConfigError("need 0 <= warmup_epochs < total_epochs");
  }
}

double lr_at(double epoch, const AdamWConfig& cfg) {
  const double e = std::clamp(epoch, 0.0, cfg.total_epochs);
  if (e < cfg.warmup_epochs) return cfg.lr_base * (e / cfg.warmup_epochs);
  const double progress = (e - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs);
  return cfg.lr_base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
OptimState<T> OptimState<T>::init(const ModelParams<T>& params, const AdamWConfig& config) {
  config.validate();
  OptimState<T> s;
  s.config = config;
  params.for_each_trainable([&](const std::string&, const Tensor<T>& t) {
    s.first_moment.emplace_back(t.shape());
    s.second_moment.emplace_back(t.shape());
  });
  return s;
}

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::uint64_t step, double lr, const AdamWConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    double p = static_cast<double>(param[i]) * decay;
    p -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    param[i] = static_cast<T>(p);
  }
}

template <typename T>
void adamw_step(ModelParams<T>& params, const Gradients<T>& grads, OptimState<T>& state,
                double lr) {
  const std::uint64_t step = state.step + 1;
  std::size_t i = 0;
  params.for_each_trainable([&](const std::string& name, Tensor<T>& p) {
    const Tensor<T>& g = grads.tensors.at(i);
    if (g.shape() != p.shape() || state.first_moment.at(i).shape() != p.shape()) {
      throw DimensionError("adamw: gradient/moment shape mismatch for " + name);
    }
    if (!all_finite(g.data())) {
      throw NumericError("non-finite gradient for " + name + " at step " + std::to_string(step));
    }
    adamw_update<T>(p.data(), g.data(), state.first_moment[i].data(),
                    state.second_moment[i].data(), step, lr, state.config);
    ++i;
  });
  state.step = step;
}

template <typename T>
LossAndGrad<T> loss_and_grad(const ModelConfig& cfg, const ModelParams<T>& params,
                             const WindowBatch<T>& batch, bool with_grad) {
  using Id = typename Tape<T>::Id;
  LossAndGrad<T> out;
  const std::size_t n = batch.size();
  if (n == 0) throw DataError("loss_and_grad: empty batch");
  if (batch.y_future.size() != n) throw DimensionError("loss_and_grad: future labels misaligned");
  out.grads = Gradients<T>::zeros_like(params);
  GradientSinks<T> sinks(params, out.grads);
  const GradientSinks<T>* sink_ptr = with_grad ? &sinks : nullptr;

  std::size_t future_rows = 0;
  if (cfg.future_enabled) {
    for (int yf : batch.y_future) future_rows += yf != kNoLabel;
  }
  const double scale = std::exp(static_cast<double>(params.tau));
  for (std::size_t b = 0; b < n; ++b) {
    Tape<T> tape;
    const Tensor<T> window = batch.window(b);
    const auto enc = encode_on_tape(tape, cfg, params, tape.parameter(window, nullptr), sink_ptr);
    const Id z = tape.matmul_bt(enc.v, tape.parameter(params.classifier.current, nullptr));
    std::vector<Id> roots{tape.cross_entropy(z, {batch.y[b]}, scale, 1.0 / static_cast<double>(n))};
    out.current_loss += tape.value(roots[0])[0];
    if (cfg.future_enabled && batch.y_future[b] != kNoLabel) {
      bool nudged = false;
      const Id f = future_on_tape(tape, params, enc.v_raw, sink_ptr, DeadReluPolicy::kNudge, nudged);
      out.nudges += nudged;
      const Id zf = tape.matmul_bt(f, tape.parameter(params.classifier.future, nullptr));
      const double w = cfg.lambda / static_cast<double>(future_rows);
      roots.push_back(tape.cross_entropy(zf, {batch.y_future[b]}, scale, w));
      if (cfg.lambda > 0.0) out.future_loss += static_cast<double>(tape.value(roots[1])[0]) / cfg.lambda;
      ++out.future_terms;
    }
    if (with_grad) tape.backward(roots);
  }
  out.loss = out.current_loss + cfg.lambda * out.future_loss;
  return out;
}

#define TOAD_INSTANTIATE_OPTIM(T)                                                              \
  template double ce_loss(const Tensor<T>&, std::span<const int>, double);                     \
  template CrossEntropyResult<T> ce_loss_with_grad(const Tensor<T>&, std::span<const int>,     \
                                                   double);                                    \
  template double total_loss(const Tensor<T>&, const Tensor<T>*, std::span<const int>,         \
                             const std::vector<int>*, const LossConfig&);                      \
  template struct OptimState<T>;                                                               \
  template void adamw_update(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,     \
                             std::uint64_t, double, const AdamWConfig&);                       \
  template void adamw_step(ModelParams<T>&, const Gradients<T>&, OptimState<T>&, double);      \
  template LossAndGrad<T> loss_and_grad(const ModelConfig&, const ModelParams<T>&,             \
                                        const WindowBatch<T>&, bool);

TOAD_INSTANTIATE_OPTIM(float)
TOAD_INSTANTIATE_OPTIM(double)

#undef TOAD_INSTANTIATE_OPTIM

}  // namespace toad
