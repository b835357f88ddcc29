#pragma once

// Template members of ModelParams; included from model.hpp.

#include <string>

namespace toad {
namespace detail {

template <typename Params, typename F>
void visit_trainable(Params& p, F&& f) {
  for (auto& [length, table] : p.positional) f("pos.T" + std::to_string(length), table);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "block" + std::to_string(i) + ".";
    f(pre + "ln1.gain", b.ln1_gain);
    f(pre + "ln1.bias", b.ln1_bias);
    f(pre + "attn.wq", b.wq);
    f(pre + "attn.bq", b.bq);
    f(pre + "attn.wk", b.wk);
    f(pre + "attn.bk", b.bk);
    f(pre + "attn.wv", b.wv);
    f(pre + "attn.bv", b.bv);
    f(pre + "attn.wo", b.wo);
    f(pre + "attn.bo", b.bo);
    f(pre + "ln2.gain", b.ln2_gain);
    f(pre + "ln2.bias", b.ln2_bias);
    f(pre + "mlp.w1", b.w1);
    f(pre + "mlp.b1", b.b1);
    f(pre + "mlp.w2", b.w2);
    f(pre + "mlp.b2", b.b2);
  }
  f(std::string("future.weight"), p.future_weight);
  f(std::string("future.bias"), p.future_bias);
}

}  // namespace detail

template <typename T>
template <typename F>
void ModelParams<T>::for_each_trainable(F&& f) {
  detail::visit_trainable(*this, f);
}

template <typename T>
template <typename F>
void ModelParams<T>::for_each_trainable(F&& f) const {
  detail::visit_trainable(*this, f);
}

template <typename T>
std::size_t ModelParams<T>::trainable_count() const {
  std::size_t n = 0;
  for_each_trainable([&](const std::string&, const Tensor<T>&) { ++n; });
  return n;
}

template <typename T>
std::size_t ModelParams<T>::trainable_elements() const {
  std::size_t n = 0;
  for_each_trainable([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

template <typename T>
std::uint64_t ModelParams<T>::frozen_checksum() const {
  std::uint64_t h = checksum(classifier.current);
  h = checksum(classifier.future, h);
  return checksum_bytes(&tau, sizeof(tau), h);
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  for (const auto& [length, table] : positional) {
    out.positional.emplace(length, table.template cast<U>());
  }
  out.blocks.resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& s = blocks[i];
    auto& d = out.blocks[i];
    d.ln1_gain = s.ln1_gain.template cast<U>();
    d.ln1_bias = s.ln1_bias.template cast<U>();
    d.wq = s.wq.template cast<U>();
    d.bq = s.bq.template cast<U>();
    d.wk = s.wk.template cast<U>();
    d.bk = s.bk.template cast<U>();
    d.wv = s.wv.template cast<U>();
    d.bv = s.bv.template cast<U>();
    d.wo = s.wo.template cast<U>();
    d.bo = s.bo.template cast<U>();
    d.ln2_gain = s.ln2_gain.template cast<U>();
    d.ln2_bias = s.ln2_bias.template cast<U>();
    d.w1 = s.w1.template cast<U>();
    d.b1 = s.b1.template cast<U>();
    d.w2 = s.w2.template cast<U>();
    d.b2 = s.b2.template cast<U>();
  }
  out.future_weight = future_weight.template cast<U>();
  out.future_bias = future_bias.template cast<U>();
  out.classifier = classifier.template cast<U>();
  out.tau = static_cast<U>(tau);
  return out;
}

}  // namespace toad
