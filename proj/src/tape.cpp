#include "toad/tape.hpp"

#include <string>

namespace toad {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kMatMulBT: return "matmul_bt";
    case OpKind::kAdd: return "add";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kScale: return "scale";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kSoftmaxRows: return "softmax";
    case OpKind::kGelu: return "gelu";
    case OpKind::kRelu: return "relu";
    case OpKind::kL2NormalizeRows: return "l2_normalize";
    case OpKind::kMeanRows: return "mean_rows";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

template <typename T>
typename Tape<T>::Id Tape<T>::push(Node node, const char* where) {
  if (node.op != OpKind::kParameter) check_finite(node.value, where);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

template <typename T>
const Tensor<T>& Tape<T>::value(Id id) const {
  const Node& n = nodes_.at(id);
  return n.ref ? *n.ref : n.value;
}

template <typename T>
typename Tape<T>::Id Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = OpKind::kConstant;
  n.value = std::move(value);
  return push(std::move(n), "constant");
}

template <typename T>
typename Tape<T>::Id Tape<T>::parameter(const Tensor<T>& value, Tensor<T>* grad_sink) {
  if (grad_sink && grad_sink->shape() != value.shape()) {
    throw DimensionError("gradient sink " + shape_string(grad_sink->shape()) +
                         " does not match parameter " + shape_string(value.shape()));
  }
  check_finite(value, "parameter");
  Node n;
  n.op = OpKind::kParameter;
  n.ref = &value;
  n.sink = grad_sink;
  n.needs_grad = grad_sink != nullptr;
  return push(std::move(n), "parameter");
}

template <typename T>
typename Tape<T>::Id Tape<T>::matmul(Id a, Id b) {
  Node n;
  n.op = OpKind::kMatMul;
  n.in0 = a;
  n.in1 = b;
  n.value = toad::matmul(value(a), value(b));
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n), "matmul");
}

template <typename T>
typename Tape<T>::Id Tape<T>::matmul_bt(Id a, Id b) {
  Node n;
  n.op = OpKind::kMatMulBT;
  n.in0 = a;
  n.in1 = b;
  n.value = toad::matmul_bt(value(a), value(b));
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n), "matmul_bt");
}

template <typename T>
typename Tape<T>::Id Tape<T>::add(Id a, Id b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.shape() != vb.shape()) {
    throw DimensionError("add: shape mismatch " + shape_string(va.shape()) + " vs " +
                         shape_string(vb.shape()));
  }
  Node n;
  n.op = OpKind::kAdd;
  n.in0 = a;
  n.in1 = b;
  n.value = va;
  for (std::size_t i = 0; i < vb.size(); ++i) n.value[i] += vb[i];
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n), "add");
}

template <typename T>
typename Tape<T>::Id Tape<T>::add_row(Id a, Id bias) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(bias);
  if (vb.size() != va.cols()) {
    throw DimensionError("add_row: bias " + shape_string(vb.shape()) +
                         " does not match last axis of " + shape_string(va.shape()));
  }
  Node n;
  n.op = OpKind::kAddRow;
  n.in0 = a;
  n.in1 = bias;
  n.value = va;
  for (std::size_t r = 0; r < va.rows(); ++r) {
    auto row = n.value.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += vb[c];
  }
  n.needs_grad = needs(a) || needs(bias);
  return push(std::move(n), "add_row");
}

template <typename T>
typename Tape<T>::Id Tape<T>::scale(Id a, T factor) {
  Node n;
  n.op = OpKind::kScale;
  n.in0 = a;
  n.factor = factor;
  n.value = value(a);
  for (auto& v : n.value.data()) v *= factor;
  n.needs_grad = needs(a);
  return push(std::move(n), "scale");
}

template <typename T>
typename Tape<T>::Id Tape<T>::layer_norm(Id x, Id gain, Id bias, T eps) {
  Node n;
  n.op = OpKind::kLayerNorm;
  n.in0 = x;
  n.in1 = gain;
  n.in2 = bias;
  n.factor = eps;
  n.value = toad::layer_norm(value(x), value(gain), value(bias), eps);
  n.needs_grad = needs(x) || needs(gain) || needs(bias);
  return push(std::move(n), "layer_norm");
}

template <typename T>
typename Tape<T>::Id Tape<T>::softmax_rows(Id x) {
  const Tensor<T>& vx = value(x);
  Node n;
  n.op = OpKind::kSoftmaxRows;
  n.in0 = x;
  n.value = toad::softmax(vx, vx.rank() - 1);
  n.needs_grad = needs(x);
  return push(std::move(n), "softmax");
}

template <typename T>
typename Tape<T>::Id Tape<T>::gelu(Id x) {
  Node n;
  n.op = OpKind::kGelu;
  n.in0 = x;
  n.value = toad::gelu(value(x));
  n.needs_grad = needs(x);
  return push(std::move(n), "gelu");
}

template <typename T>
typename Tape<T>::Id Tape<T>::relu(Id x) {
  Node n;
  n.op = OpKind::kRelu;
  n.in0 = x;
  n.value = toad::relu(value(x));
  n.needs_grad = needs(x);
  return push(std::move(n), "relu");
}

template <typename T>
typename Tape<T>::Id Tape<T>::l2_normalize_rows(Id x) {
  const Tensor<T>& vx = value(x);
  Node n;
  n.op = OpKind::kL2NormalizeRows;
  n.in0 = x;
  n.value = toad::l2_normalize(vx, vx.rank() - 1);
  n.needs_grad = needs(x);
  return push(std::move(n), "l2_normalize");
}

template <typename T>
typename Tape<T>::Id Tape<T>::mean_rows(Id x) {
  const Tensor<T>& vx = value(x);
  const std::size_t rows = vx.rows(), cols = vx.cols();
  if (rows == 0) throw DimensionError("mean_rows: no rows");
  Node n;
  n.op = OpKind::kMeanRows;
  n.in0 = x;
  n.value = Tensor<T>({1, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = vx.row(r);
    for (std::size_t c = 0; c < cols; ++c) n.value[c] += row[c];
  }
  const T inv = T{1} / static_cast<T>(rows);
  for (auto& v : n.value.data()) v *= inv;
  n.needs_grad = needs(x);
  return push(std::move(n), "mean_rows");
}

template <typename T>
typename Tape<T>::Id Tape<T>::slice_cols(Id x, std::size_t begin, std::size_t count) {
  const Tensor<T>& vx = value(x);
  if (begin + count > vx.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") exceeds " + shape_string(vx.shape()));
  }
  Node n;
  n.op = OpKind::kSliceCols;
  n.in0 = x;
  n.offset = begin;
  n.value = Tensor<T>({vx.rows(), count});
  for (std::size_t r = 0; r < vx.rows(); ++r) {
    const auto src = vx.row(r);
    auto dst = n.value.row(r);
    for (std::size_t c = 0; c < count; ++c) dst[c] = src[begin + c];
  }
  n.needs_grad = needs(x);
  return push(std::move(n), "slice_cols");
}

template <typename T>
typename Tape<T>::Id Tape<T>::concat_cols(std::span<const Id> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  for (Id p : parts) {
    if (value(p).rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(value(p).shape()));
    }
    cols += value(p).cols();
  }
  Node n;
  n.op = OpKind::kConcatCols;
  n.parts.assign(parts.begin(), parts.end());
  n.value = Tensor<T>({rows, cols});
  std::size_t offset = 0;
  for (Id p : parts) {
    const Tensor<T>& vp = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto src = vp.row(r);
      auto dst = n.value.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[offset + c] = src[c];
    }
    offset += vp.cols();
    n.needs_grad = n.needs_grad || needs(p);
  }
  return push(std::move(n), "concat_cols");
}

template <typename T>
typename Tape<T>::Id Tape<T>::cross_entropy(Id logits, std::vector<int> labels, double scale,
                                            double weight) {
  auto ce = toad::cross_entropy(value(logits), labels, scale);
  Node n;
  n.op = OpKind::kCrossEntropy;
  n.in0 = logits;
  n.scalar = ce.loss;
  n.weight = weight;
  n.value = Tensor<T>(Shape{}, static_cast<T>(weight * ce.loss));
  n.saved = std::move(ce.grad);
  n.labels = std::move(labels);
  n.needs_grad = needs(logits);
  return push(std::move(n), "cross_entropy");
}

template <typename T>
void Tape<T>::accumulate(Id id, const Tensor<T>& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
    n.grad.reshape(value(id).shape());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

template <typename T>
void Tape<T>::backward(Id root) {
  const Id roots[] = {root};
  backward(std::span<const Id>(roots));
}

template <typename T>
void Tape<T>::backward(std::span<const Id> roots) {
  trace_.clear();
  for (auto& n : nodes_) n.grad = Tensor<T>();
  for (Id r : roots) {
    accumulate(r, Tensor<T>(value(r).shape(), T{1}));
  }
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    trace_.push_back(i);
    check_finite(n.grad, op_name(n.op));
    propagate(n);
  }
}

template <typename T>
void Tape<T>::propagate(Node& n) {
  const Tensor<T>& g = n.grad;
  switch (n.op) {
    case OpKind::kConstant:
      break;
    case OpKind::kParameter: {
      Tensor<T>& sink = *n.sink;
      for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i];
      break;
    }
    case OpKind::kMatMul: {
      const Tensor<T>& a = value(n.in0);
      const Tensor<T>& b = value(n.in1);
      if (needs(n.in0)) accumulate(n.in0, toad::matmul_bt(g, b));
      if (needs(n.in1)) accumulate(n.in1, toad::matmul_at(a, g));
      break;
    }
    case OpKind::kMatMulBT: {
      // C = A.B^T: dA = dC.B, dB = dC^T.A
      const Tensor<T>& a = value(n.in0);
      const Tensor<T>& b = value(n.in1);
      if (needs(n.in0)) accumulate(n.in0, toad::matmul(g, b));
      if (needs(n.in1)) accumulate(n.in1, toad::matmul_at(g, a));
      break;
    }
    case OpKind::kAdd:
      accumulate(n.in0, g);
      accumulate(n.in1, g);
      break;
    case OpKind::kAddRow: {
      accumulate(n.in0, g);
      if (needs(n.in1)) {
        Tensor<T> db(value(n.in1).shape());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          const auto row = g.row(r);
          for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
        }
        accumulate(n.in1, db);
      }
      break;
    }
    case OpKind::kScale: {
      Tensor<T> dx = g;
      for (auto& v : dx.data()) v *= n.factor;
      accumulate(n.in0, dx);
      break;
    }
    case OpKind::kLayerNorm: {
      auto lg = toad::layer_norm_backward(value(n.in0), value(n.in1), g, n.factor);
      accumulate(n.in0, lg.dx);
      accumulate(n.in1, lg.dgain);
      accumulate(n.in2, lg.dbias);
      break;
    }
    case OpKind::kSoftmaxRows:
      accumulate(n.in0, toad::softmax_backward(n.value, g, n.value.rank() - 1));
      break;
    case OpKind::kGelu:
      accumulate(n.in0, toad::gelu_backward(value(n.in0), g));
      break;
    case OpKind::kRelu:
      accumulate(n.in0, toad::relu_backward(value(n.in0), g));
      break;
    case OpKind::kL2NormalizeRows: {
      const Tensor<T>& x = value(n.in0);
      accumulate(n.in0, toad::l2_normalize_backward(x, g, x.rank() - 1));
      break;
    }
    case OpKind::kMeanRows: {
      const Tensor<T>& x = value(n.in0);
      Tensor<T> dx(x.shape());
      const T inv = T{1} / static_cast<T>(x.rows());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = dx.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = g[c] * inv;
      }
      accumulate(n.in0, dx);
      break;
    }
    case OpKind::kSliceCols: {
      const Tensor<T>& x = value(n.in0);
      Tensor<T> dx(x.shape());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto src = g.row(r);
        auto dst = dx.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dst[n.offset + c] = src[c];
      }
      accumulate(n.in0, dx);
      break;
    }
    case OpKind::kConcatCols: {
      std::size_t offset = 0;
      for (Id p : n.parts) {
        const Tensor<T>& vp = value(p);
        if (needs(p)) {
          Tensor<T> dp(vp.shape());
          for (std::size_t r = 0; r < vp.rows(); ++r) {
            const auto src = g.row(r);
            auto dst = dp.row(r);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = src[offset + c];
          }
          accumulate(p, dp);
        }
        offset += vp.cols();
      }
      break;
    }
    case OpKind::kCrossEntropy: {
      Tensor<T> dz = n.saved;
      const T factor = static_cast<T>(n.weight) * g[0];
      for (auto& v : dz.data()) v *= factor;
      accumulate(n.in0, dz);
      break;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace toad
