#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "toad/kernels.hpp"
#include "toad/tensor.hpp"

namespace toad {

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kMatMul,
  kMatMulBT,
  kAdd,
  kAddRow,
  kScale,
  kLayerNorm,
  kSoftmaxRows,
  kGelu,
  kRelu,
  kL2NormalizeRows,
  kMeanRows,
  kSliceCols,
  kConcatCols,
  kCrossEntropy,
};

const char* op_name(OpKind op);

// Reverse-mode record of one forward pass over the fixed encoder graph.
//
// Every op appends a node holding its output; backward() walks the nodes in
// exact reverse order of creation. Parameter leaves are bound to an external
// gradient sink which backward() accumulates into, so a batch can reuse the
// same sinks across per-sample tapes. A tape is single-threaded and meant to
// live for one sample of one training step.
template <typename T>
class Tape {
 public:
  using Id = std::size_t;

  // Leaf that never receives a gradient.
  Id constant(Tensor<T> value);
  // Leaf referring to `value` (which must outlive the tape). When `grad_sink`
  // is non-null, backward() adds d(root)/d(value) into it.
  Id parameter(const Tensor<T>& value, Tensor<T>* grad_sink);

  Id matmul(Id a, Id b);
  Id matmul_bt(Id a, Id b);
  Id add(Id a, Id b);
  // Adds a length-cols bias to every row of `a`.
  Id add_row(Id a, Id bias);
  Id scale(Id a, T factor);
  Id layer_norm(Id x, Id gain, Id bias, T eps);
  Id softmax_rows(Id x);
  Id gelu(Id x);
  Id relu(Id x);
  Id l2_normalize_rows(Id x);
  // [rows x cols] -> [1 x cols]
  Id mean_rows(Id x);
  Id slice_cols(Id x, std::size_t begin, std::size_t count);
  Id concat_cols(std::span<const Id> parts);
  // Scalar node: weight * mean CE of softmax(scale * logits) against labels.
  Id cross_entropy(Id logits, std::vector<int> labels, double scale, double weight = 1.0);

  const Tensor<T>& value(Id id) const;
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(Id id) const { return nodes_[id].op; }

  // Seeds d(root)/d(root) = 1 (root must be a scalar node) and propagates.
  void backward(Id root);
  // Propagates from every id in `roots` at once, each seeded with ones.
  void backward(std::span<const Id> roots);

  // Node ids in the order the last backward() visited them.
  const std::vector<Id>& backward_trace() const { return trace_; }

 private:
  struct Node {
    OpKind op = OpKind::kConstant;
    Id in0 = 0, in1 = 0, in2 = 0;
    std::vector<Id> parts;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> saved;
    const Tensor<T>* ref = nullptr;
    Tensor<T>* sink = nullptr;
    bool needs_grad = false;
    T factor = T{0};
    double scalar = 0.0;
    double weight = 1.0;
    std::size_t offset = 0;
    std::vector<int> labels;
  };

  Id push(Node node, const char* where);
  bool needs(Id id) const { return nodes_[id].needs_grad; }
  void accumulate(Id id, const Tensor<T>& g);
  void propagate(Node& node);

  std::vector<Node> nodes_;
  std::vector<Id> trace_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace toad
