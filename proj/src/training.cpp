#include "toad/training.hpp"

#include <algorithm>
#include <random>

namespace toad {

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("batch must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (rate == 0) throw ConfigError("rate must be positive");
  adamw.validate();
}

std::size_t iterations_per_epoch(std::size_t windows, std::size_t batch) {
  return (windows + batch - 1) / batch;
}

double evaluate_loss(const Model& model, const Dataset& data, std::span<const WindowRef> windows,
                     const TrainConfig& cfg) {
  double total = 0.0;
  for (std::size_t i = 0; i < windows.size(); i += cfg.batch) {
    const auto refs = windows.subspan(i, std::min(cfg.batch, windows.size() - i));
    const auto batch = make_batch(data, refs, model.config.window, cfg.rate, cfg.horizon);
    total += loss_and_grad(model.config, model.params, batch, false).loss *
             static_cast<double>(refs.size());
  }
  return total / static_cast<double>(windows.size());
}

TrainResult train(Model& model, OptimState<float>& state, const Dataset& data,
                  std::span<const WindowRef> windows, const TrainConfig& cfg,
                  std::size_t start_epoch, const EpochCallback& on_epoch) {
  cfg.validate();
  model.config.validate();
  if (windows.empty()) throw DataError("no training windows");
  if (data.dim != model.config.dim) {
    throw DimensionError("dataset feature dim " + std::to_string(data.dim) +
                         " does not match model dim " + std::to_string(model.config.dim));
  }
  if (data.classes != model.config.classes) {
    throw DimensionError("dataset has " + std::to_string(data.classes) + " classes, model " +
                         std::to_string(model.config.classes));
  }
  TrainResult result;
  const std::size_t iters = iterations_per_epoch(windows.size(), cfg.batch);
  result.iterations_per_epoch = iters;
  if (cfg.log_initial_loss && start_epoch == 0) {
    EpochLog e;
    e.loss = evaluate_loss(model, data, windows, cfg);
    e.frozen_checksum = model.params.frozen_checksum();
    result.log.push_back(e);
    if (on_epoch) on_epoch(e, model, state);
  }
  std::vector<WindowRef> order(windows.begin(), windows.end());
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::copy(windows.begin(), windows.end(), order.begin());
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog e;
    e.epoch = epoch + 1;
    for (std::size_t it = 0; it < iters; ++it) {
      const std::size_t begin = it * cfg.batch;
      const std::span<const WindowRef> refs(order.data() + begin,
                                            std::min(cfg.batch, order.size() - begin));
      const auto batch = make_batch(data, refs, model.config.window, cfg.rate, cfg.horizon);
      auto lg = loss_and_grad(model.config, model.params, batch, true);
      const double lr = lr_at(static_cast<double>(epoch) + static_cast<double>(it) / iters, cfg.adamw);
      adamw_step(model.params, lg.grads, state, lr);
      e.loss += lg.loss;
      e.current_loss += lg.current_loss;
      e.future_loss += lg.future_loss;
      e.nudges += lg.nudges;
      e.lr = lr;
    }
    e.iterations = iters;
    e.loss /= static_cast<double>(iters);
    e.current_loss /= static_cast<double>(iters);
    e.future_loss /= static_cast<double>(iters);
    e.frozen_checksum = model.params.frozen_checksum();
    result.log.push_back(e);
    if (on_epoch) on_epoch(e, model, state);
  }
  return result;
}

}  // namespace toad
