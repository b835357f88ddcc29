#pragma once

#include <cstddef>
#include <span>

#include "toad/tensor.hpp"

// Numeric kernels used by the encoder and the loss. Every kernel is a pure
// function of its inputs; backward functions take the forward operands plus the
// upstream gradient and return input gradients.
namespace toad {

// [m x k] . [k x n]. The left operand may be any rank; it is read as rows() x cols().
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// a . b^T for a [m x k], b [n x k].
template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);

// a^T . b for a [k x m], b [k x n].
template <typename T>
Tensor<T> matmul_at(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct MatmulGrads {
  Tensor<T> da;
  Tensor<T> db;
};

// Gradients of C = A.B: dA = dC.B^T, dB = A^T.dC.
template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc);

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, std::size_t axis);

// Row-wise layer normalisation over the last axis with affine gain/bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

template <typename T>
struct LayerNormGrads {
  Tensor<T> dx;
  Tensor<T> dgain;
  Tensor<T> dbias;
};

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gain,
                                      const Tensor<T>& dy, T eps);

// Scales every slice along `axis` to unit L2 norm. A zero-norm slice raises
// DegenerateInputError naming the slice.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> l2_normalize_backward(const Tensor<T>& x, const Tensor<T>& dy, std::size_t axis);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Subgradient 0 at x == 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
struct CrossEntropyResult {
  double loss = 0.0;  // mean over rows
  Tensor<T> grad;     // d(mean loss)/d(logits)
};

// Mean over rows of -log softmax(scale * logits)[label], evaluated in log space
// in double precision. Labels must lie in [0, cols).
template <typename T>
CrossEntropyResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                                    double scale);

}  // namespace toad
