#pragma once

// Crank-angle signal representation, combustion chamber resonance physics,
// windowing and band-pass filtering.

#include <array>
#include <span>
#include <string>
#include <vector>

namespace knock {

inline constexpr double kDefaultResolution = 0.1;     // °CA per sample
inline constexpr double kDefaultRpm = 1500.0;
inline constexpr double kDefaultSpeedOfSound = 966.0;  // m/s at ~2500 K
inline constexpr std::size_t kFullCycleSamples = 7200;
inline constexpr std::size_t kWindowSamples = 600;

/// One thermodynamic cycle of in-cylinder pressure (bar) over crank angle.
struct PressureCycle {
  std::vector<double> samples;
  double start_angle = -360.0;
  double resolution = kDefaultResolution;
  std::string cycle_id;
  std::string source_tag;

  double end_angle() const {
    return start_angle + (static_cast<double>(samples.size()) - 1.0) * resolution;
  }
  bool is_full_cycle() const;
  /// Throws DomainError on non-finite or negative samples.
  void validate() const;
};

/// The knock-relevant slice starting at TDC.
struct AnalysisWindow {
  std::vector<double> samples;
  double start_angle = 0.0;
  double resolution = kDefaultResolution;

  std::size_t size() const { return samples.size(); }
};

struct EngineGeometry {
  double bore_mm = 0.0;
  double rpm = kDefaultRpm;
  double speed_of_sound = kDefaultSpeedOfSound;

  /// Throws InvalidGeometry.
  void validate() const;
  /// Samples per second implied by rpm at the given crank-angle resolution.
  double sample_rate(double resolution = kDefaultResolution) const;
};

struct AcousticMode {
  std::string name;
  double bessel_factor = 0.0;
  double frequency_khz = 0.0;
};

inline constexpr std::array<const char*, 5> kModeNames = {
    "1st circ.", "2nd circ.", "1st rad.", "3rd circ.", "1st comb."};
inline constexpr std::array<double, 5> kBesselFactors = {1.841, 3.054, 3.831, 4.201, 5.318};

/// f[kHz] = a[m/s] * B / (pi * D_b[mm]) for the five tabulated modes, ascending.
std::vector<AcousticMode> acoustic_mode_frequencies(const EngineGeometry& geometry);

/// Crank-angle degrees per second at `rpm`.
constexpr double degrees_per_second(double rpm) { return rpm * 360.0 / 60.0; }
/// Sample rate in Hz for a crank-angle resolution at `rpm` (90 kHz at defaults).
constexpr double crank_sample_rate(double rpm, double resolution) {
  return degrees_per_second(rpm) / resolution;
}
inline constexpr double kDefaultSampleRate = crank_sample_rate(kDefaultRpm, kDefaultResolution);

/// Kernel length (samples) spanning one period of `f_target_hz`, rounded half up, >= 1.
/// Throws OutOfBand when the period is shorter than one sample.
int kernel_size_for_frequency(double f_target_hz, double rpm = kDefaultRpm,
                              double resolution = kDefaultResolution);

/// Frequencies whose kernel size rounds to `k`: (low_hz, high_hz].
struct FrequencyRange {
  double low_hz = 0.0;   // exclusive
  double high_hz = 0.0;  // inclusive
  bool contains(double f) const { return f > low_hz && f <= high_hz; }
};
FrequencyRange frequency_range_for_kernel(int k, double rpm = kDefaultRpm,
                                          double resolution = kDefaultResolution);

struct WindowSpec {
  double start_angle = 0.0;
  double span_degrees = 60.0;
};

/// Copies the samples at angles [start, start + span) without any scaling.
AnalysisWindow extract_window(const PressureCycle& cycle, const WindowSpec& spec = {});
AnalysisWindow extract_window(const AnalysisWindow& window, const WindowSpec& spec = {});

/// Pass band for knock-oscillation filters.
struct Band {
  double low_hz = 3000.0;
  double high_hz = 9000.0;
};

/// Second-order section, transposed direct form II, a0 normalised to 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 2> a{};  // a1, a2
};

/// Fourth-order Butterworth band-pass as two biquads (bilinear transform, prewarped).
class BandPassFilter {
 public:
  /// Throws OutOfBand unless 0 < low < high < sample_rate / 2.
  BandPassFilter(Band band, double sample_rate);

  /// Zero-phase forward-backward filtering with odd edge extension.
  std::vector<double> filtfilt(std::span<const double> x) const;
  /// Single forward pass with zero initial state.
  std::vector<double> filter(std::span<const double> x) const;

  const std::array<Biquad, 2>& sections() const { return sections_; }
  Band band() const { return band_; }
  double sample_rate() const { return sample_rate_; }

 private:
  void run(std::vector<double>& x, bool steady_state_init) const;

  Band band_;
  double sample_rate_;
  std::array<Biquad, 2> sections_;
};

/// Zero-phase 4th-order band-pass of a window; sample rate defaults to 90 kHz.
AnalysisWindow band_pass(const AnalysisWindow& window, double f_low_hz, double f_high_hz,
                         double sample_rate = kDefaultSampleRate);

}  // namespace knock
