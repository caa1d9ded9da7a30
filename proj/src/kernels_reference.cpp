// Serial reference kernels. Deliberately naive: index arithmetic mirrors the
// defining formulas so the OpenMP kernels can be checked against them.

#include "knock/kernels.hpp"

namespace knock::kernels::reference {

namespace {

/// Input value at padded position `p`, zero outside the signal.
double padded(std::span<const double> row, std::size_t padding, std::size_t p) {
  if (p < padding || p - padding >= row.size()) return 0.0;
  return row[p - padding];
}

}  // namespace

void conv_forward(const ConvShape& s, ConvMode mode, std::size_t batch,
                  std::span<const double> in, std::span<const double> w, std::span<double> out) {
  const std::size_t lo = s.out_length();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < s.out_channels; ++j) {
      for (std::size_t o = 0; o < lo; ++o) {
        double acc = 0.0;
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          const auto row = in.subspan((b * s.in_channels + c) * s.in_length, s.in_length);
          for (std::size_t t = 0; t < s.kernel; ++t) {
            const double wt = mode == ConvMode::shared_kernel
                                  ? w[j * s.kernel + t]
                                  : w[(j * s.in_channels + c) * s.kernel + t];
            acc += wt * padded(row, s.padding, o + t);
          }
        }
        out[(b * s.out_channels + j) * lo + o] = acc;
      }
    }
  }
}

void conv_backward(const ConvShape& s, ConvMode mode, std::size_t batch,
                   std::span<const double> in, std::span<const double> w,
                   std::span<const double> grad_out, std::span<double> grad_w,
                   std::span<double> grad_in) {
  const std::size_t lo = s.out_length();
  if (!grad_in.empty())
    for (auto& g : grad_in.first(batch * s.in_channels * s.in_length)) g = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < s.out_channels; ++j) {
      for (std::size_t o = 0; o < lo; ++o) {
        const double g = grad_out[(b * s.out_channels + j) * lo + o];
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          const auto row = in.subspan((b * s.in_channels + c) * s.in_length, s.in_length);
          for (std::size_t t = 0; t < s.kernel; ++t) {
            const std::size_t wi = mode == ConvMode::shared_kernel
                                       ? j * s.kernel + t
                                       : (j * s.in_channels + c) * s.kernel + t;
            grad_w[wi] += g * padded(row, s.padding, o + t);
            const std::size_t p = o + t;
            if (!grad_in.empty() && p >= s.padding && p - s.padding < s.in_length)
              grad_in[(b * s.in_channels + c) * s.in_length + p - s.padding] += g * w[wi];
          }
        }
      }
    }
  }
}

void maxpool2_forward(std::size_t rows, std::size_t in_length, std::span<const double> in,
                      std::span<double> out, std::span<std::uint32_t> argmax) {
  const std::size_t lo = in_length / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < lo; ++o) {
      const std::size_t i0 = r * in_length + 2 * o;
      const bool second = in[i0 + 1] > in[i0];
      out[r * lo + o] = second ? in[i0 + 1] : in[i0];
      argmax[r * lo + o] = static_cast<std::uint32_t>(2 * o + (second ? 1 : 0));
    }
  }
}

void maxpool2_backward(std::size_t rows, std::size_t in_length, std::span<const double> grad_out,
                       std::span<const std::uint32_t> argmax, std::span<double> grad_in) {
  const std::size_t lo = in_length / 2;
  for (std::size_t i = 0; i < rows * in_length; ++i) grad_in[i] = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < lo; ++o)
      grad_in[r * in_length + argmax[r * lo + o]] += grad_out[r * lo + o];
}

void relu_forward(std::span<double> x) {
  for (auto& v : x)
    if (v < 0.0) v = 0.0;
}

void relu_backward(std::span<const double> activation, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
}

void dense_forward(const DenseShape& s, std::size_t batch, std::span<const double> x,
                   std::span<const double> w, std::span<const double> bias, std::span<double> y) {
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < s.out; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < s.in; ++i) acc += w[o * s.in + i] * x[b * s.in + i];
      y[b * s.out + o] = acc;
    }
  }
}

void dense_backward(const DenseShape& s, std::size_t batch, std::span<const double> x,
                    std::span<const double> w, std::span<const double> grad_y,
                    std::span<double> grad_w, std::span<double> grad_bias,
                    std::span<double> grad_x) {
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < s.out; ++o) {
      const double g = grad_y[b * s.out + o];
      grad_bias[o] += g;
      for (std::size_t i = 0; i < s.in; ++i) grad_w[o * s.in + i] += g * x[b * s.in + i];
    }
  }
  if (grad_x.empty()) return;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < s.in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < s.out; ++o) acc += w[o * s.in + i] * grad_y[b * s.out + o];
      grad_x[b * s.in + i] = acc;
    }
  }
}

}  // namespace knock::kernels::reference
