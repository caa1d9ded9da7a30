#pragma once

// Frequency content of learned first-layer kernels and the check that it
// lines up with the chamber resonance modes.

#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "knock/cnn.hpp"
#include "knock/signal.hpp"

namespace knock {

/// In-place iterative radix-2 DFT (forward, unnormalised). Throws
/// ConfigurationError unless the length is a power of two.
void fft(std::vector<std::complex<double>>& x);

struct KernelSpectrum {
  std::vector<double> frequencies_hz;            // zero_pad_length / 2 + 1 bins, 0..Nyquist
  std::vector<std::vector<double>> magnitudes;   // [channel][bin]
  std::size_t kernel_size = 0;
  std::size_t zero_pad_length = 0;
  double sample_rate_hz = 0.0;

  std::size_t channels() const { return magnitudes.size(); }
  /// Channel mean of the magnitudes.
  std::vector<double> channel_average() const;
};

/// Magnitude of the zero-padded kernels, mean-removed unless `remove_mean` is false.
KernelSpectrum kernel_spectrum(std::span<const std::vector<double>> kernels,
                               std::size_t zero_pad_length, double sample_rate_hz,
                               bool remove_mean = true);

/// First-layer kernels of `net` at the crank-angle sample rate implied by rpm
/// and resolution. Throws ConfigurationError if zero_pad_length < kernel size.
KernelSpectrum first_layer_spectrum(const KnockNet& net, std::size_t zero_pad_length = 1024,
                                    double rpm = kDefaultRpm, double resolution = kDefaultResolution);

inline constexpr double kNearDcCutoffHz = 500.0;

struct SpectralPeak {
  double frequency_hz = 0.0;
  double magnitude = 0.0;
  std::size_t bin = 0;
};

/// Largest bin above `min_hz`; the lowest such bin wins ties.
SpectralPeak dominant_peak(const KernelSpectrum& spectrum, std::size_t channel,
                           double min_hz = kNearDcCutoffHz);
SpectralPeak dominant_peak(std::span<const double> magnitudes,
                           std::span<const double> frequencies_hz, double min_hz = kNearDcCutoffHz);

struct ModeMatch {
  std::string mode;
  double bore_mm = 0.0;
  double frequency_hz = 0.0;
  double relative_error = 0.0;  // |consensus - f| / max(consensus, f)
};

struct HypothesisReport {
  std::vector<SpectralPeak> channel_peaks;
  double consensus_hz = 0.0;  // magnitude-weighted mean of channel peak frequencies
  ModeMatch nearest;
  double tolerance = 0.0;
  bool pass = false;
};

struct HypothesisOptions {
  std::size_t zero_pad_length = 1024;
  double min_hz = kNearDcCutoffHz;
  /// Only the lowest n modes of each geometry are candidates.
  std::size_t n_modes = 5;
  double resolution = kDefaultResolution;
};

/// Passes iff the consensus peak is within `tolerance` (relative to the larger
/// of the two frequencies) of a candidate mode of any listed geometry.
HypothesisReport hypothesis_check(const KnockNet& net, std::span<const EngineGeometry> geometries,
                                  double tolerance, const HypothesisOptions& options = {});
inline HypothesisReport hypothesis_check(const KnockNet& net, const EngineGeometry& geometry,
                                         double tolerance, const HypothesisOptions& options = {}) {
  return hypothesis_check(net, std::span(&geometry, 1), tolerance, options);
}

/// `frequency_hz,channel_0,...,channel_n,mean` rows.
std::string spectrum_csv(const KernelSpectrum& spectrum);
/// One row per channel: peak frequency and magnitude.
std::string format_peak_table(const KernelSpectrum& spectrum, double min_hz = kNearDcCutoffHz);
std::string format_hypothesis(const HypothesisReport& report);

}  // namespace knock
