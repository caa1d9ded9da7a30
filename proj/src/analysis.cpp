#include "knock/analysis.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "knock/error.hpp"

namespace knock {

void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n == 0 || !std::has_single_bit(n))
    throw ConfigurationError("FFT length " + std::to_string(n) + " is not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles from the angle directly keep the error independent of len.
        const std::complex<double> w(std::cos(ang * static_cast<double>(k)),
                                     std::sin(ang * static_cast<double>(k)));
        const auto u = x[i + k];
        const auto v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<double> KernelSpectrum::channel_average() const {
  std::vector<double> avg(frequencies_hz.size(), 0.0);
  if (magnitudes.empty()) return avg;
  for (const auto& m : magnitudes)
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += m[i];
  for (auto& v : avg) v /= static_cast<double>(magnitudes.size());
  return avg;
}

KernelSpectrum kernel_spectrum(std::span<const std::vector<double>> kernels,
                               std::size_t zero_pad_length, double sample_rate_hz,
                               bool remove_mean) {
  if (kernels.empty()) throw ConfigurationError("no kernels to transform");
  KernelSpectrum s;
  s.kernel_size = kernels[0].size();
  s.zero_pad_length = zero_pad_length;
  s.sample_rate_hz = sample_rate_hz;
  if (zero_pad_length < s.kernel_size)
    throw ConfigurationError("zero_pad_length " + std::to_string(zero_pad_length) +
                             " is shorter than the kernel (" + std::to_string(s.kernel_size) + ")");
  const std::size_t bins = zero_pad_length / 2 + 1;
  s.frequencies_hz.resize(bins);
  for (std::size_t i = 0; i < bins; ++i)
    s.frequencies_hz[i] = static_cast<double>(i) * sample_rate_hz / static_cast<double>(zero_pad_length);
  for (const auto& k : kernels) {
    if (k.size() != s.kernel_size) throw ShapeError("kernels differ in length");
    double mean = 0.0;
    if (remove_mean) {
      for (double v : k) mean += v;
      mean /= static_cast<double>(k.size());
    }
    std::vector<std::complex<double>> x(zero_pad_length);
    for (std::size_t i = 0; i < k.size(); ++i) x[i] = k[i] - mean;
    fft(x);
    std::vector<double> mag(bins);
    for (std::size_t i = 0; i < bins; ++i) mag[i] = std::abs(x[i]);
    s.magnitudes.push_back(std::move(mag));
  }
  return s;
}

KernelSpectrum first_layer_spectrum(const KnockNet& net, std::size_t zero_pad_length, double rpm,
                                    double resolution) {
  const auto& shape = net.topology().conv[0].shape;
  const auto w = net.block(KnockNet::kConv1);
  std::vector<std::vector<double>> kernels;
  const std::size_t per_channel = shape.kernel * shape.in_channels;
  for (std::size_t j = 0; j < shape.out_channels; ++j)
    kernels.emplace_back(w.begin() + static_cast<std::ptrdiff_t>(j * per_channel),
                         w.begin() + static_cast<std::ptrdiff_t>(j * per_channel + shape.kernel));
  return kernel_spectrum(kernels, zero_pad_length, crank_sample_rate(rpm, resolution));
}

SpectralPeak dominant_peak(std::span<const double> magnitudes, std::span<const double> frequencies_hz,
                           double min_hz) {
  SpectralPeak p;
  bool found = false;
  for (std::size_t i = 0; i < magnitudes.size(); ++i) {
    if (frequencies_hz[i] <= min_hz) continue;
    if (!found || magnitudes[i] > p.magnitude) {
      p = {frequencies_hz[i], magnitudes[i], i};
      found = true;
    }
  }
  if (!found) throw ConfigurationError("no spectrum bins above the near-DC cutoff");
  return p;
}

SpectralPeak dominant_peak(const KernelSpectrum& spectrum, std::size_t channel, double min_hz) {
  if (channel >= spectrum.channels())
    throw ConfigurationError("channel " + std::to_string(channel) + " out of range");
  return dominant_peak(spectrum.magnitudes[channel], spectrum.frequencies_hz, min_hz);
}

HypothesisReport hypothesis_check(const KnockNet& net, std::span<const EngineGeometry> geometries,
                                  double tolerance, const HypothesisOptions& options) {
  if (geometries.empty()) throw ConfigurationError("hypothesis check needs a geometry");
  HypothesisReport r;
  r.tolerance = tolerance;
  const auto spec = first_layer_spectrum(net, options.zero_pad_length, geometries[0].rpm,
                                         options.resolution);
  double wsum = 0.0, fsum = 0.0;
  for (std::size_t c = 0; c < spec.channels(); ++c) {
    const auto p = dominant_peak(spec, c, options.min_hz);
    r.channel_peaks.push_back(p);
    wsum += p.magnitude;
    fsum += p.magnitude * p.frequency_hz;
  }
  if (wsum > 0.0) {
    r.consensus_hz = fsum / wsum;
  } else {
    for (const auto& p : r.channel_peaks) r.consensus_hz += p.frequency_hz;
    r.consensus_hz /= static_cast<double>(r.channel_peaks.size());
  }
  bool first = true;
  for (const auto& g : geometries) {
    const auto modes = acoustic_mode_frequencies(g);
    for (std::size_t m = 0; m < modes.size() && m < options.n_modes; ++m) {
      const double f = modes[m].frequency_khz * 1000.0;
      const double err = std::abs(r.consensus_hz - f) / std::max(r.consensus_hz, f);
      if (first || err < r.nearest.relative_error) {
        r.nearest = {modes[m].name, g.bore_mm, f, err};
        first = false;
      }
    }
  }
  r.pass = !first && r.nearest.relative_error <= tolerance;
  return r;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string spectrum_csv(const KernelSpectrum& spectrum) {
  std::string out = "frequency_hz";
  for (std::size_t c = 0; c < spectrum.channels(); ++c) out += ",channel_" + std::to_string(c);
  out += ",mean\n";
  const auto avg = spectrum.channel_average();
  for (std::size_t i = 0; i < spectrum.frequencies_hz.size(); ++i) {
    out += fmt("%.6g", spectrum.frequencies_hz[i]);
    for (const auto& m : spectrum.magnitudes) out += "," + fmt("%.10g", m[i]);
    out += "," + fmt("%.10g", avg[i]) + "\n";
  }
  return out;
}

std::string format_peak_table(const KernelSpectrum& spectrum, double min_hz) {
  std::string out = "channel  peak_hz     magnitude\n";
  for (std::size_t c = 0; c < spectrum.channels(); ++c) {
    const auto p = dominant_peak(spectrum, c, min_hz);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-8zu %-11.1f %.6g\n", c, p.frequency_hz, p.magnitude);
    out += buf;
  }
  return out;
}

std::string format_hypothesis(const HypothesisReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "consensus peak %.1f Hz; nearest mode %s (bore %.0f mm) at %.1f Hz; "
                "relative error %.3f, tolerance %.3f: %s\n",
                r.consensus_hz, r.nearest.mode.c_str(), r.nearest.bore_mm, r.nearest.frequency_hz,
                r.nearest.relative_error, r.tolerance, r.pass ? "PASS" : "FAIL");
  return buf;
}

}  // namespace knock
