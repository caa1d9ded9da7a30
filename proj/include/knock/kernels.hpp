#pragma once

// Batched 1D convolution, max-pooling and dense kernels.
//
// Two implementations share one signature set:
//   kernels::reference  straight-line serial loops, kept as the test oracle
//   kernels::omp        OpenMP-parallel, cache-blocked, SIMD inner loops
//
// Layouts are row-major with the batch outermost: a conv activation is
// [batch][channel][position], a dense activation is [batch][feature].
// Every parallel loop partitions outputs, never a reduction, so results are
// bitwise independent of the thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace knock::kernels {

enum class ConvMode : std::uint8_t {
  /// Output channel j correlates kernel j with the sum of all input channels.
  shared_kernel = 0,
  /// Standard convolution: one kernel per (output, input) channel pair.
  cross_channel = 1,
};

struct ConvShape {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t in_length = 0;
  std::size_t padding = 0;

  std::size_t out_length() const { return in_length + 2 * padding + 1 - kernel; }
  std::size_t weight_count(ConvMode mode) const {
    return mode == ConvMode::shared_kernel ? kernel * out_channels
                                           : kernel * in_channels * out_channels;
  }
};

struct DenseShape {
  std::size_t in = 0;
  std::size_t out = 0;
};

#define KNOCK_KERNEL_DECLS                                                                       \
  /* out[b] = correlate(pad(in[b]), w); no bias. */                                            \
  void conv_forward(const ConvShape& s, ConvMode mode, std::size_t batch,                      \
                    std::span<const double> in, std::span<const double> w,                     \
                    std::span<double> out);                                                    \
  /* grad_w += dL/dw over the batch; grad_in (if non-empty) = dL/din. */                       \
  void conv_backward(const ConvShape& s, ConvMode mode, std::size_t batch,                     \
                     std::span<const double> in, std::span<const double> w,                    \
                     std::span<const double> grad_out, std::span<double> grad_w,               \
                     std::span<double> grad_in);                                               \
  /* Window 2, stride 2, output floor(length / 2); argmax keeps the first maximum. */          \
  void maxpool2_forward(std::size_t rows, std::size_t in_length, std::span<const double> in,   \
                        std::span<double> out, std::span<std::uint32_t> argmax);               \
  void maxpool2_backward(std::size_t rows, std::size_t in_length,                              \
                         std::span<const double> grad_out,                                     \
                         std::span<const std::uint32_t> argmax, std::span<double> grad_in);    \
  void relu_forward(std::span<double> x);                                                      \
  /* grad *= (activation > 0) */                                                               \
  void relu_backward(std::span<const double> activation, std::span<double> grad);              \
  /* y[b] = W x[b] + bias; W is [out][in]. */                                                  \
  void dense_forward(const DenseShape& s, std::size_t batch, std::span<const double> x,        \
                     std::span<const double> w, std::span<const double> bias,                  \
                     std::span<double> y);                                                     \
  /* grad_w += sum_b dy[b] x[b]^T; grad_bias += sum_b dy[b]; grad_x = W^T dy (if non-empty). */ \
  void dense_backward(const DenseShape& s, std::size_t batch, std::span<const double> x,       \
                      std::span<const double> w, std::span<const double> grad_y,               \
                      std::span<double> grad_w, std::span<double> grad_bias,                   \
                      std::span<double> grad_x);

namespace reference {
KNOCK_KERNEL_DECLS
}  // namespace reference

namespace omp {
KNOCK_KERNEL_DECLS
}  // namespace omp

#undef KNOCK_KERNEL_DECLS

}  // namespace knock::kernels
