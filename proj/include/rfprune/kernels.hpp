#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <vector>

#include "rfprune/network.hpp"

namespace rfprune {

/// Counts the multiply-accumulates a kernel actually executes on live
/// (non-padding-block) elements.
struct MacCounter {
  std::uint64_t macs = 0;
};

namespace detail {

// GCC/Clang vector extension; lowers to whatever SIMD width the target has.
typedef double v8d __attribute__((vector_size(64)));

/// C[m][n] (+)= sum_k A[m][k] * B[k][n].
///
/// Accumulates in double, strictly in ascending k for every output element,
/// and routes every element through the same fixed-size block code (ragged
/// edges are zero-padded). Dropping a k whose A column is all zero therefore
/// leaves every output bit-identical, which is what pruning equivalence relies on.
///
/// `row_init` (length M) seeds each row when `accumulate` is false.
template <typename TA, typename TB, typename TC>
void gemm(std::size_t M, std::size_t N, std::size_t K, const TA* A, std::size_t lda, const TB* B,
          std::size_t ldb, TC* C, std::size_t ldc, const double* row_init, bool accumulate,
          MacCounter* counter = nullptr) {
  constexpr std::size_t MB = 4;
  constexpr std::size_t NB = 16;
  if (M == 0 || N == 0) return;
  const std::size_t m_blocks = (M + MB - 1) / MB;

  // A packed as [block][k][i], zero rows past M.
  std::vector<double> ap(m_blocks * K * MB, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t blk = m / MB, i = m % MB;
    double* dst = ap.data() + blk * K * MB + i;
    const TA* src = A + m * lda;
    for (std::size_t k = 0; k < K; ++k) dst[k * MB] = static_cast<double>(src[k]);
  }

  std::vector<double> bp(K * NB);
  for (std::size_t n0 = 0; n0 < N; n0 += NB) {
    const std::size_t nb = std::min(NB, N - n0);
    for (std::size_t k = 0; k < K; ++k) {
      const TB* src = B + k * ldb + n0;
      double* dst = bp.data() + k * NB;
      std::size_t j = 0;
      for (; j < nb; ++j) dst[j] = static_cast<double>(src[j]);
      for (; j < NB; ++j) dst[j] = 0.0;
    }
    for (std::size_t blk = 0; blk < m_blocks; ++blk) {
      const std::size_t m0 = blk * MB;
      const std::size_t mb = std::min(MB, M - m0);
      alignas(64) double tile[MB][NB];
      for (std::size_t i = 0; i < MB; ++i) {
        for (std::size_t j = 0; j < NB; ++j) {
          double v = 0.0;
          if (i < mb && j < nb) {
            if (accumulate)
              v = static_cast<double>(C[(m0 + i) * ldc + n0 + j]);
            else if (row_init)
              v = row_init[m0 + i];
          }
          tile[i][j] = v;
        }
      }
      v8d acc[MB][2];
      for (std::size_t i = 0; i < MB; ++i) {
        std::memcpy(&acc[i][0], &tile[i][0], sizeof(v8d));
        std::memcpy(&acc[i][1], &tile[i][8], sizeof(v8d));
      }
      const double* a = ap.data() + blk * K * MB;
      for (std::size_t k = 0; k < K; ++k) {
        v8d b0, b1;
        std::memcpy(&b0, bp.data() + k * NB, sizeof(v8d));
        std::memcpy(&b1, bp.data() + k * NB + 8, sizeof(v8d));
#pragma GCC unroll 4
        for (std::size_t i = 0; i < MB; ++i) {
          const double av = a[k * MB + i];
          acc[i][0] += av * b0;
          acc[i][1] += av * b1;
        }
      }
      for (std::size_t i = 0; i < MB; ++i) {
        std::memcpy(&tile[i][0], &acc[i][0], sizeof(v8d));
        std::memcpy(&tile[i][8], &acc[i][1], sizeof(v8d));
      }
      if (counter) counter->macs += std::uint64_t(mb) * nb * K;
      for (std::size_t i = 0; i < mb; ++i)
        for (std::size_t j = 0; j < nb; ++j)
          C[(m0 + i) * ldc + n0 + j] = static_cast<TC>(tile[i][j]);
    }
  }
}

/// Lowers a (zero-padded) input into a [C*kh*kw][out_h*out_w] matrix whose
/// row order matches the filter weight layout.
template <typename T>
void im2col(const BasicFeatureMap<T>& in, std::size_t kh, std::size_t kw, std::size_t stride,
            const ConvGeometry& g, std::vector<T>& col) {
  const std::size_t P = g.out_h * g.out_w;
  col.assign(in.channels * kh * kw * P, T(0));
  std::size_t row = 0;
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        T* dst = col.data() + row * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(g.pad_top);
          if (y < 0 || y >= std::ptrdiff_t(in.height)) continue;
          const T* src = in.data.data() + (c * in.height + std::size_t(y)) * in.width;
          T* out_row = dst + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(g.pad_left);
            if (x >= 0 && x < std::ptrdiff_t(in.width)) out_row[ox] = src[x];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters column gradients back onto the input grid.
inline void col2im(const std::vector<double>& dcol, const Shape& in, std::size_t kh,
                   std::size_t kw, std::size_t stride, const ConvGeometry& g,
                   std::vector<double>& din) {
  const std::size_t P = g.out_h * g.out_w;
  din.assign(in.size(), 0.0);
  std::size_t row = 0;
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        const double* src = dcol.data() + row * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(g.pad_top);
          if (y < 0 || y >= std::ptrdiff_t(in.height)) continue;
          double* dst = din.data() + (c * in.height + std::size_t(y)) * in.width;
          const double* s_row = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(g.pad_left);
            if (x >= 0 && x < std::ptrdiff_t(in.width)) dst[x] += s_row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void pack_filters(const BasicConv<T>& conv, std::vector<T>& w, std::vector<double>& bias) {
  const std::size_t K = conv.depth() * conv.kernel_h() * conv.kernel_w();
  w.resize(conv.filters.size() * K);
  bias.resize(conv.filters.size());
  for (std::size_t f = 0; f < conv.filters.size(); ++f) {
    std::copy(conv.filters[f].weights.begin(), conv.filters[f].weights.end(), w.begin() + f * K);
    bias[f] = static_cast<double>(conv.filters[f].bias);
  }
}

}  // namespace detail

/// Convolution forward pass. With stride 1 and no padding each output entry is
/// bias + sum over (channel, ky, kx) of K(c, ky, kx) * F(c, y + ky, x + kx).
/// `col_out`, when given, receives the lowered input for reuse in backward.
template <typename T>
BasicFeatureMap<T> conv_forward(const BasicFeatureMap<T>& input, const BasicConv<T>& conv,
                                MacCounter* counter = nullptr, std::vector<T>* col_out = nullptr) {
  if (input.data.size() != input.shape().size()) throw ShapeError("feature map data length mismatch");
  const Shape out_shape = conv_output_shape(conv, input.shape());
  const auto g = conv_geometry(input.shape(), conv.kernel_h(), conv.kernel_w(), conv.stride, conv.padding);
  std::vector<T> local;
  std::vector<T>& col = col_out ? *col_out : local;
  detail::im2col(input, conv.kernel_h(), conv.kernel_w(), conv.stride, g, col);

  std::vector<T> w;
  std::vector<double> bias;
  detail::pack_filters(conv, w, bias);
  const std::size_t K = conv.depth() * conv.kernel_h() * conv.kernel_w();
  const std::size_t P = g.out_h * g.out_w;
  BasicFeatureMap<T> out(out_shape);
  detail::gemm(conv.filters.size(), P, K, w.data(), K, col.data(), P, out.data.data(), P, bias.data(),
               false, counter);
  return out;
}

template <typename T>
BasicFeatureMap<T> dense_forward(const BasicFeatureMap<T>& input, const BasicDense<T>& dense,
                                 MacCounter* counter = nullptr) {
  if (input.size() != dense.inputs)
    throw ShapeError("dense expects " + std::to_string(dense.inputs) + " inputs, got " +
                     std::to_string(input.size()));
  BasicFeatureMap<T> out(dense.outputs, 1, 1);
  for (std::size_t o = 0; o < dense.outputs; ++o) {
    double acc = static_cast<double>(dense.bias[o]);
    const T* w = dense.weights.data() + o * dense.inputs;
    for (std::size_t i = 0; i < dense.inputs; ++i) acc += static_cast<double>(w[i]) * static_cast<double>(input.data[i]);
    out.data[o] = static_cast<T>(acc);
  }
  if (counter) counter->macs += std::uint64_t(dense.inputs) * dense.outputs;
  return out;
}

template <typename T>
BasicFeatureMap<T> relu_forward(const BasicFeatureMap<T>& input) {
  BasicFeatureMap<T> out = input;
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

/// Max pooling; `argmax` (optional) receives the flat input index chosen for
/// each output element. Ties resolve to the first element in scan order.
template <typename T>
BasicFeatureMap<T> maxpool_forward(const BasicFeatureMap<T>& input, const MaxPool& pool,
                                   std::vector<std::uint32_t>* argmax = nullptr) {
  const Shape os = maxpool_output_shape(pool, input.shape());
  BasicFeatureMap<T> out(os);
  if (argmax) argmax->resize(os.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < os.channels; ++c) {
    for (std::size_t oy = 0; oy < os.height; ++oy) {
      for (std::size_t ox = 0; ox < os.width; ++ox, ++o) {
        std::size_t best = (c * input.height + oy * pool.stride) * input.width + ox * pool.stride;
        T best_v = input.data[best];
        for (std::size_t dy = 0; dy < pool.window; ++dy) {
          for (std::size_t dx = 0; dx < pool.window; ++dx) {
            const std::size_t idx =
                (c * input.height + oy * pool.stride + dy) * input.width + ox * pool.stride + dx;
            if (input.data[idx] > best_v) {
              best_v = input.data[idx];
              best = idx;
            }
          }
        }
        out.data[o] = best_v;
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

}  // namespace rfprune
