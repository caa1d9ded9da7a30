#include <algorithm>
#include <cstring>
#include <vector>

#include "knock/kernels.hpp"

namespace knock::kernels::omp {

namespace {

using idx = std::ptrdiff_t;

/// Zero-padded copy of one sample: either each channel, or (shared mode) the
/// channel sum, into `dst` rows of length in_length + 2 * padding.
void pad_sample(const ConvShape& s, ConvMode mode, const double* src, double* dst) {
  const std::size_t lp = s.in_length + 2 * s.padding;
  const std::size_t rows = mode == ConvMode::shared_kernel ? 1 : s.in_channels;
  std::fill(dst, dst + rows * lp, 0.0);
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    double* row = dst + (mode == ConvMode::shared_kernel ? 0 : c * lp) + s.padding;
    const double* in = src + c * s.in_length;
#pragma omp simd
    for (std::size_t i = 0; i < s.in_length; ++i) row[i] += in[i];
  }
}

std::size_t padded_rows(const ConvShape& s, ConvMode mode) {
  return mode == ConvMode::shared_kernel ? 1 : s.in_channels;
}

}  // namespace

void conv_forward(const ConvShape& s, ConvMode mode, std::size_t batch,
                  std::span<const double> in, std::span<const double> w, std::span<double> out) {
  const std::size_t lp = s.in_length + 2 * s.padding;
  const std::size_t lo = s.out_length();
  const std::size_t rows = padded_rows(s, mode);
#pragma omp parallel
  {
    std::vector<double> xp(rows * lp);
#pragma omp for schedule(static)
    for (idx b = 0; b < static_cast<idx>(batch); ++b) {
      pad_sample(s, mode, in.data() + b * s.in_channels * s.in_length, xp.data());
      for (std::size_t j = 0; j < s.out_channels; ++j) {
        double* y = out.data() + (b * s.out_channels + j) * lo;
        std::fill(y, y + lo, 0.0);
        for (std::size_t c = 0; c < rows; ++c) {
          const double* wk = w.data() + (mode == ConvMode::shared_kernel
                                             ? j * s.kernel
                                             : (j * s.in_channels + c) * s.kernel);
          const double* x = xp.data() + c * lp;
          for (std::size_t t = 0; t < s.kernel; ++t) {
            const double wt = wk[t];
#pragma omp simd
            for (std::size_t o = 0; o < lo; ++o) y[o] += wt * x[o + t];
          }
        }
      }
    }
  }
}

void conv_backward(const ConvShape& s, ConvMode mode, std::size_t batch,
                   std::span<const double> in, std::span<const double> w,
                   std::span<const double> grad_out, std::span<double> grad_w,
                   std::span<double> grad_in) {
  const std::size_t lp = s.in_length + 2 * s.padding;
  const std::size_t lo = s.out_length();
  const std::size_t rows = padded_rows(s, mode);
  std::vector<double> xp(batch * rows * lp);

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (idx b = 0; b < static_cast<idx>(batch); ++b)
      pad_sample(s, mode, in.data() + b * s.in_channels * s.in_length, xp.data() + b * rows * lp);

    // Weight gradient: each output channel's kernels are owned by one thread
    // and accumulated over the batch in sample order.
#pragma omp for schedule(static)
    for (idx j = 0; j < static_cast<idx>(s.out_channels); ++j) {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* g = grad_out.data() + (b * s.out_channels + j) * lo;
        for (std::size_t c = 0; c < rows; ++c) {
          double* gw = grad_w.data() + (mode == ConvMode::shared_kernel
                                            ? j * s.kernel
                                            : (j * s.in_channels + c) * s.kernel);
          const double* x = xp.data() + (b * rows + c) * lp;
          for (std::size_t t = 0; t < s.kernel; ++t) {
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (std::size_t o = 0; o < lo; ++o) acc += g[o] * x[o + t];
            gw[t] += acc;
          }
        }
      }
    }

    if (!grad_in.empty()) {
      std::vector<double> gp(rows * lp);
#pragma omp for schedule(static)
      for (idx b = 0; b < static_cast<idx>(batch); ++b) {
        std::fill(gp.begin(), gp.end(), 0.0);
        for (std::size_t j = 0; j < s.out_channels; ++j) {
          const double* g = grad_out.data() + (b * s.out_channels + j) * lo;
          for (std::size_t c = 0; c < rows; ++c) {
            const double* wk = w.data() + (mode == ConvMode::shared_kernel
                                               ? j * s.kernel
                                               : (j * s.in_channels + c) * s.kernel);
            double* dst = gp.data() + c * lp;
            for (std::size_t t = 0; t < s.kernel; ++t) {
              const double wt = wk[t];
#pragma omp simd
              for (std::size_t o = 0; o < lo; ++o) dst[o + t] += wt * g[o];
            }
          }
        }
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          const double* src = gp.data() + (mode == ConvMode::shared_kernel ? 0 : c * lp) + s.padding;
          std::copy(src, src + s.in_length,
                    grad_in.data() + (b * s.in_channels + c) * s.in_length);
        }
      }
    }
  }
}

void maxpool2_forward(std::size_t rows, std::size_t in_length, std::span<const double> in,
                      std::span<double> out, std::span<std::uint32_t> argmax) {
  const std::size_t lo = in_length / 2;
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const double* x = in.data() + r * in_length;
    double* y = out.data() + r * lo;
    std::uint32_t* a = argmax.data() + r * lo;
    for (std::size_t o = 0; o < lo; ++o) {
      const bool second = x[2 * o + 1] > x[2 * o];
      y[o] = second ? x[2 * o + 1] : x[2 * o];
      a[o] = static_cast<std::uint32_t>(2 * o + (second ? 1u : 0u));
    }
  }
}

void maxpool2_backward(std::size_t rows, std::size_t in_length, std::span<const double> grad_out,
                       std::span<const std::uint32_t> argmax, std::span<double> grad_in) {
  const std::size_t lo = in_length / 2;
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    double* gi = grad_in.data() + r * in_length;
    std::fill(gi, gi + in_length, 0.0);
    const double* go = grad_out.data() + r * lo;
    const std::uint32_t* a = argmax.data() + r * lo;
    for (std::size_t o = 0; o < lo; ++o) gi[a[o]] += go[o];
  }
}

void relu_forward(std::span<double> x) {
  double* p = x.data();
  const idx n = static_cast<idx>(x.size());
#pragma omp parallel for simd schedule(static)
  for (idx i = 0; i < n; ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
}

void relu_backward(std::span<const double> activation, std::span<double> grad) {
  const double* a = activation.data();
  double* g = grad.data();
  const idx n = static_cast<idx>(grad.size());
#pragma omp parallel for simd schedule(static)
  for (idx i = 0; i < n; ++i) g[i] = a[i] > 0.0 ? g[i] : 0.0;
}

namespace {

constexpr std::size_t kTile = 4;

// Four doubles; GCC and Clang lower arithmetic on this type to SIMD registers.
using vec = double __attribute__((vector_size(32)));
constexpr std::size_t kLanes = 4;
constexpr std::size_t kCols = 3 * kLanes;  // columns per register tile

inline vec load(const double* p) {
  vec v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

/// C[i][j] = (accumulate ? C[i][j] : 0) + sum_p A[i][p] * B[p][j], all
/// row-major: A is m x k (stride lda), B is k x n (stride n), C is m x n
/// (stride ldc). Tiles of 4 rows x 12 columns stay in registers across p, so
/// every C entry is one fixed-order sum regardless of thread count.
/// `strip_major` visits every row tile of one column strip before moving on,
/// which keeps a large B's strip cached.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* A, std::size_t lda,
             const double* B, double* C, std::size_t ldc, bool accumulate, bool strip_major) {
  const std::size_t mt = (m + kTile - 1) / kTile, nt = (n + kCols - 1) / kCols;
  auto finish = [accumulate](double* dst, vec v) {
    if (accumulate) v += load(dst);
    std::memcpy(dst, &v, sizeof v);
  };
#pragma omp for schedule(static)
  for (idx t = 0; t < static_cast<idx>(mt * nt); ++t) {
    const auto u = static_cast<std::size_t>(t);
    const std::size_t i = (strip_major ? u % mt : u / nt) * kTile;
    const std::size_t j = (strip_major ? u / mt : u % nt) * kCols;
    if (i + kTile <= m && j + kCols <= n) {
      vec c00 = {};
      vec c01 = {};
      vec c02 = {};
      vec c10 = {};
      vec c11 = {};
      vec c12 = {};
      vec c20 = {};
      vec c21 = {};
      vec c22 = {};
      vec c30 = {};
      vec c31 = {};
      vec c32 = {};
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = B + p * n + j;
        const vec b0 = load(bp + 0);
        const vec b1 = load(bp + 4);
        const vec b2 = load(bp + 8);
        const double s0 = A[i * lda + p], s1 = A[(i + 1) * lda + p];
        const double s2 = A[(i + 2) * lda + p], s3 = A[(i + 3) * lda + p];
        const vec a0 = {s0, s0, s0, s0}, a1 = {s1, s1, s1, s1};
        const vec a2 = {s2, s2, s2, s2}, a3 = {s3, s3, s3, s3};
        c00 += a0 * b0;
        c01 += a0 * b1;
        c02 += a0 * b2;
        c10 += a1 * b0;
        c11 += a1 * b1;
        c12 += a1 * b2;
        c20 += a2 * b0;
        c21 += a2 * b1;
        c22 += a2 * b2;
        c30 += a3 * b0;
        c31 += a3 * b1;
        c32 += a3 * b2;
      }
      finish(C + (i + 0) * ldc + j + 0, c00);
      finish(C + (i + 0) * ldc + j + 4, c01);
      finish(C + (i + 0) * ldc + j + 8, c02);
      finish(C + (i + 1) * ldc + j + 0, c10);
      finish(C + (i + 1) * ldc + j + 4, c11);
      finish(C + (i + 1) * ldc + j + 8, c12);
      finish(C + (i + 2) * ldc + j + 0, c20);
      finish(C + (i + 2) * ldc + j + 4, c21);
      finish(C + (i + 2) * ldc + j + 8, c22);
      finish(C + (i + 3) * ldc + j + 0, c30);
      finish(C + (i + 3) * ldc + j + 4, c31);
      finish(C + (i + 3) * ldc + j + 8, c32);
    } else {
      for (std::size_t ii = i; ii < std::min(i + kTile, m); ++ii) {
        for (std::size_t jj = j; jj < std::min(j + kCols, n); ++jj) {
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += A[ii * lda + p] * B[p * n + jj];
          C[ii * ldc + jj] = (accumulate ? C[ii * ldc + jj] : 0.0) + acc;
        }
      }
    }
  }
}

}  // namespace

void dense_forward(const DenseShape& s, std::size_t batch, std::span<const double> x,
                   std::span<const double> w, std::span<const double> bias, std::span<double> y) {
  const std::size_t n = s.in;
  const idx o_tiles = static_cast<idx>((s.out + kTile - 1) / kTile);
#pragma omp parallel for schedule(static)
  for (idx ot = 0; ot < o_tiles; ++ot) {
    const std::size_t o = static_cast<std::size_t>(ot) * kTile;
    const bool full_o = o + kTile <= s.out;
    std::size_t b = 0;
    if (full_o) {
      const double* w0 = w.data() + o * n;
      const double* w1 = w0 + n;
      const double* w2 = w1 + n;
      const double* w3 = w2 + n;
      for (; b + kTile <= batch; b += kTile) {
        const double* x0 = x.data() + b * n;
        const double* x1 = x0 + n;
        const double* x2 = x1 + n;
        const double* x3 = x2 + n;
        double a00 = 0.0, a01 = 0.0, a02 = 0.0, a03 = 0.0, a10 = 0.0, a11 = 0.0, a12 = 0.0, a13 = 0.0, a20 = 0.0, a21 = 0.0, a22 = 0.0, a23 = 0.0, a30 = 0.0, a31 = 0.0, a32 = 0.0, a33 = 0.0;
#pragma omp simd reduction(+ : a00, a01, a02, a03, a10, a11, a12, a13, a20, a21, a22, a23, a30, a31, a32, a33)
        for (std::size_t i = 0; i < n; ++i) {
        a00 += w0[i] * x0[i];
        a01 += w0[i] * x1[i];
        a02 += w0[i] * x2[i];
        a03 += w0[i] * x3[i];
        a10 += w1[i] * x0[i];
        a11 += w1[i] * x1[i];
        a12 += w1[i] * x2[i];
        a13 += w1[i] * x3[i];
        a20 += w2[i] * x0[i];
        a21 += w2[i] * x1[i];
        a22 += w2[i] * x2[i];
        a23 += w2[i] * x3[i];
        a30 += w3[i] * x0[i];
        a31 += w3[i] * x1[i];
        a32 += w3[i] * x2[i];
        a33 += w3[i] * x3[i];
        }
      y[(b + 0) * s.out + o + 0] = bias[o + 0] + a00;
      y[(b + 1) * s.out + o + 0] = bias[o + 0] + a01;
      y[(b + 2) * s.out + o + 0] = bias[o + 0] + a02;
      y[(b + 3) * s.out + o + 0] = bias[o + 0] + a03;
      y[(b + 0) * s.out + o + 1] = bias[o + 1] + a10;
      y[(b + 1) * s.out + o + 1] = bias[o + 1] + a11;
      y[(b + 2) * s.out + o + 1] = bias[o + 1] + a12;
      y[(b + 3) * s.out + o + 1] = bias[o + 1] + a13;
      y[(b + 0) * s.out + o + 2] = bias[o + 2] + a20;
      y[(b + 1) * s.out + o + 2] = bias[o + 2] + a21;
      y[(b + 2) * s.out + o + 2] = bias[o + 2] + a22;
      y[(b + 3) * s.out + o + 2] = bias[o + 2] + a23;
      y[(b + 0) * s.out + o + 3] = bias[o + 3] + a30;
      y[(b + 1) * s.out + o + 3] = bias[o + 3] + a31;
      y[(b + 2) * s.out + o + 3] = bias[o + 3] + a32;
      y[(b + 3) * s.out + o + 3] = bias[o + 3] + a33;
      }
    }
    for (std::size_t oo = o; oo < std::min(o + kTile, s.out); ++oo) {
      for (std::size_t bb = full_o ? b : 0; bb < batch; ++bb) {
        const double* wr = w.data() + oo * n;
        const double* xb = x.data() + bb * n;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t i = 0; i < n; ++i) acc += wr[i] * xb[i];
        y[bb * s.out + oo] = bias[oo] + acc;
      }
    }
  }
}

void dense_backward(const DenseShape& s, std::size_t batch, std::span<const double> x,
                    std::span<const double> w, std::span<const double> grad_y,
                    std::span<double> grad_w, std::span<double> grad_bias,
                    std::span<double> grad_x) {
  const std::size_t n = s.in, out = s.out;
  std::vector<double> gy_t(out * batch);  // [out][batch]
#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (idx o = 0; o < static_cast<idx>(out); ++o) {
      const auto oo = static_cast<std::size_t>(o);
      double gb = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        gy_t[oo * batch + b] = grad_y[b * out + oo];
        gb += grad_y[b * out + oo];
      }
      grad_bias[oo] += gb;
    }
    // grad_w += gy^T x ; grad_x = gy W
    gemm_nn(out, n, batch, gy_t.data(), batch, x.data(), grad_w.data(), n, true, false);
    if (!grad_x.empty())
      gemm_nn(batch, n, out, grad_y.data(), out, w.data(), grad_x.data(), n, false, true);
  }
}

}  // namespace knock::kernels::omp
