#include "toad/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace toad {
namespace {

void require_matrix(const Tensor<auto>& t, const char* op, const char* operand) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": " + operand + " must be rank 2, got " +
                         shape_string(t.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_same_shape(const Tensor<auto>& a, const Tensor<auto>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(b, "matmul", "right operand");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (a.rank() == 0 || k != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " . " +
                         shape_string(b.shape()));
  }
  Tensor<T> c({m, n});
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* pc = c.raw();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = pa[i * k + p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (a.rank() == 0 || b.rank() == 0 || k != b.cols()) {
    throw DimensionError("matmul_bt: inner extents differ, " + shape_string(a.shape()) +
                         " . " + shape_string(b.shape()) + "^T");
  }
  Tensor<T> c({m, n});
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* pc = c.raw();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = pb + j * k;
      T acc = T{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] = acc;
    }
  }
  return c;
}

template <typename T>
Tensor<T> matmul_at(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (a.rank() == 0 || b.rank() == 0 || k != b.rows()) {
    throw DimensionError("matmul_at: inner extents differ, " + shape_string(a.shape()) +
                         "^T . " + shape_string(b.shape()));
  }
  Tensor<T> c({m, n});
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* pc = c.raw();
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = pa + p * m;
    const T* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T api = arow[i];
      T* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
  return c;
}

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc) {
  MatmulGrads<T> g{matmul_bt(dc, b), matmul_at(a, dc)};
  g.da.reshape(a.shape());
  return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  Tensor<T> y(x.shape());
  const T* px = x.raw();
  T* py = y.raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T mx = px[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, px[base + e * s.inner]);
      T sum = T{0};
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(px[base + e * s.inner] - mx);
        py[base + e * s.inner] = v;
        sum += v;
      }
      const T inv = T{1} / sum;
      for (std::size_t e = 0; e < s.extent; ++e) py[base + e * s.inner] *= inv;
    }
  }
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, std::size_t axis) {
  require_same_shape(y, dy, "softmax_backward");
  const AxisSplit s = split_axis(y.shape(), axis, "softmax_backward");
  Tensor<T> dx(y.shape());
  const T* py = y.raw();
  const T* pdy = dy.raw();
  T* pdx = dx.raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T dot = T{0};
      for (std::size_t e = 0; e < s.extent; ++e) {
        dot += py[base + e * s.inner] * pdy[base + e * s.inner];
      }
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t i = base + e * s.inner;
        pdx[i] = py[i] * (pdy[i] - dot);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match last axis of " +
                         shape_string(x.shape()));
  }
  if (!(eps > T{0})) throw DimensionError("layer_norm: eps must be positive");
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    auto yr = y.row(r);
    T mean = T{0};
    for (T v : xr) mean += v;
    mean /= static_cast<T>(n);
    T var = T{0};
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T rstd = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * rstd * gain[j] + bias[j];
  }
  return y;
}

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gain,
                                      const Tensor<T>& dy, T eps) {
  require_same_shape(x, dy, "layer_norm_backward");
  const std::size_t n = x.cols();
  LayerNormGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(gain.shape()), Tensor<T>(gain.shape())};
  std::vector<T> xhat(n), dxhat(n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    const auto dyr = dy.row(r);
    auto dxr = g.dx.row(r);
    T mean = T{0};
    for (T v : xr) mean += v;
    mean /= static_cast<T>(n);
    T var = T{0};
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T rstd = T{1} / std::sqrt(var + eps);
    T sum_dxhat = T{0}, sum_dxhat_xhat = T{0};
    for (std::size_t j = 0; j < n; ++j) {
      xhat[j] = (xr[j] - mean) * rstd;
      dxhat[j] = dyr[j] * gain[j];
      g.dgain[j] += dyr[j] * xhat[j];
      g.dbias[j] += dyr[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xhat[j];
    }
    const T inv_n = T{1} / static_cast<T>(n);
    for (std::size_t j = 0; j < n; ++j) {
      dxr[j] = rstd * (dxhat[j] - inv_n * sum_dxhat - xhat[j] * inv_n * sum_dxhat_xhat);
    }
  }
  return g;
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "l2_normalize");
  Tensor<T> y(x.shape());
  const T* px = x.raw();
  T* py = y.raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T sq = T{0};
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = px[base + e * s.inner];
        sq += v * v;
      }
      if (!(sq > T{0})) {
        throw DegenerateInputError("l2_normalize: zero-norm slice " +
                                   std::to_string(o * s.inner + in) + " of " +
                                   shape_string(x.shape()));
      }
      const T inv = T{1} / std::sqrt(sq);
      for (std::size_t e = 0; e < s.extent; ++e) {
        py[base + e * s.inner] = px[base + e * s.inner] * inv;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> l2_normalize_backward(const Tensor<T>& x, const Tensor<T>& dy, std::size_t axis) {
  require_same_shape(x, dy, "l2_normalize_backward");
  const AxisSplit s = split_axis(x.shape(), axis, "l2_normalize_backward");
  Tensor<T> dx(x.shape());
  const T* px = x.raw();
  const T* pdy = dy.raw();
  T* pdx = dx.raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T sq = T{0};
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = px[base + e * s.inner];
        sq += v * v;
      }
      const T norm = std::sqrt(sq);
      const T inv = T{1} / norm;
      // dx = (dy - y (y . dy)) / |x|
      T ydy = T{0};
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t i = base + e * s.inner;
        ydy += px[i] * inv * pdy[i];
      }
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t i = base + e * s.inner;
        pdx[i] = (pdy[i] - px[i] * inv * ydy) * inv;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require_same_shape(x, dy, "relu_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = T{0.5} * x[i] * (T{1} + std::erf(x[i] * inv_sqrt2));
  }
  return y;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require_same_shape(x, dy, "gelu_backward");
  Tensor<T> dx(x.shape());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  const T inv_sqrt2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T cdf = T{0.5} * (T{1} + std::erf(x[i] * inv_sqrt2));
    const T pdf = inv_sqrt2pi * std::exp(T{-0.5} * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
  return dx;
}

template <typename T>
CrossEntropyResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                                    double scale) {
  const std::size_t rows = logits.rows(), classes = logits.cols();
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " logit rows");
  }
  CrossEntropyResult<T> out{0.0, Tensor<T>(logits.shape())};
  if (rows == 0) return out;
  std::vector<double> s(classes);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw LabelError("cross_entropy: label " + std::to_string(y) + " at row " +
                       std::to_string(r) + " outside [0, " + std::to_string(classes) + ")");
    }
    const auto zr = logits.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      s[c] = scale * static_cast<double>(zr[c]);
      mx = std::max(mx, s[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(s[c] - mx);
    const double lse = mx + std::log(sum);
    out.loss += (lse - s[y]) * inv_rows;
    auto gr = out.grad.row(r);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(s[c] - lse);
      const double target = static_cast<std::size_t>(y) == c ? 1.0 : 0.0;
      gr[c] = static_cast<T>((p - target) * scale * inv_rows);
    }
  }
  return out;
}

#define TOAD_INSTANTIATE_KERNELS(T)                                                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> matmul_bt(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> matmul_at(const Tensor<T>&, const Tensor<T>&);                       \
  template MatmulGrads<T> matmul_backward(const Tensor<T>&, const Tensor<T>&,             \
                                          const Tensor<T>&);                              \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&, std::size_t);   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template LayerNormGrads<T> layer_norm_backward(const Tensor<T>&, const Tensor<T>&,      \
                                                 const Tensor<T>&, T);                    \
  template Tensor<T> l2_normalize(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> l2_normalize_backward(const Tensor<T>&, const Tensor<T>&,            \
                                           std::size_t);                                  \
  template Tensor<T> relu(const Tensor<T>&);                                              \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> gelu(const Tensor<T>&);                                              \
  template Tensor<T> gelu_backward(const Tensor<T>&, const Tensor<T>&);                   \
  template CrossEntropyResult<T> cross_entropy(const Tensor<T>&, std::span<const int>,    \
                                               double);

TOAD_INSTANTIATE_KERNELS(float)
TOAD_INSTANTIATE_KERNELS(double)

#undef TOAD_INSTANTIATE_KERNELS

}  // namespace toad
