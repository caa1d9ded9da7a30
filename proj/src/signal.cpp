#include "knock/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "knock/error.hpp"

namespace knock {

bool PressureCycle::is_full_cycle() const {
  const double expected = 720.0 / resolution;
  return std::abs(static_cast<double>(samples.size()) - expected) < 0.5 &&
         std::abs(start_angle + 360.0) < 0.5 * resolution;
}

void PressureCycle::validate() const {
  if (!(resolution > 0.0)) throw DomainError("pressure cycle resolution must be positive");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i]) || samples[i] < 0.0) {
      throw DomainError("pressure cycle '" + cycle_id + "' has invalid sample at index " +
                        std::to_string(i));
    }
  }
}

void EngineGeometry::validate() const {
  if (!(bore_mm > 0.0) || !std::isfinite(bore_mm))
    throw InvalidGeometry("bore must be positive, got " + std::to_string(bore_mm));
  if (!(rpm > 0.0) || !std::isfinite(rpm))
    throw InvalidGeometry("rpm must be positive, got " + std::to_string(rpm));
  if (!(speed_of_sound > 0.0) || !std::isfinite(speed_of_sound))
    throw InvalidGeometry("speed of sound must be positive, got " +
                          std::to_string(speed_of_sound));
}

double EngineGeometry::sample_rate(double resolution) const {
  return crank_sample_rate(rpm, resolution);
}

std::vector<AcousticMode> acoustic_mode_frequencies(const EngineGeometry& geometry) {
  geometry.validate();
  std::vector<AcousticMode> modes;
  modes.reserve(kBesselFactors.size());
  for (std::size_t i = 0; i < kBesselFactors.size(); ++i) {
    // m/s divided by mm is 1e3 / s, so the quotient is already in kHz.
    const double f = geometry.speed_of_sound * kBesselFactors[i] /
                     (std::numbers::pi * geometry.bore_mm);
    modes.push_back({kModeNames[i], kBesselFactors[i], f});
  }
  return modes;
}

int kernel_size_for_frequency(double f_target_hz, double rpm, double resolution) {
  if (!(f_target_hz > 0.0) || !(rpm > 0.0) || !(resolution > 0.0))
    throw DomainError("kernel_size_for_frequency: inputs must be positive");
  const double fs = crank_sample_rate(rpm, resolution);
  if (f_target_hz > fs) {
    throw OutOfBand("target frequency " + std::to_string(f_target_hz) +
                    " Hz has a period shorter than one sample at " + std::to_string(fs) + " Hz");
  }
  const double samples_per_period = degrees_per_second(rpm) / f_target_hz / resolution;
  return std::max(1, static_cast<int>(std::floor(samples_per_period + 0.5)));
}

FrequencyRange frequency_range_for_kernel(int k, double rpm, double resolution) {
  if (k < 1) throw DomainError("kernel size must be >= 1");
  if (!(rpm > 0.0) || !(resolution > 0.0))
    throw DomainError("frequency_range_for_kernel: rpm and resolution must be positive");
  const double fs = crank_sample_rate(rpm, resolution);
  // round(fs / f) == k  <=>  k - 0.5 <= fs / f < k + 0.5
  FrequencyRange r;
  r.low_hz = fs / (static_cast<double>(k) + 0.5);
  r.high_hz = std::min(fs, fs / (static_cast<double>(k) - 0.5));
  // Pull the endpoints onto the exact rounding boundary seen by kernel_size_for_frequency.
  while (r.high_hz > r.low_hz && kernel_size_for_frequency(r.high_hz, rpm, resolution) != k)
    r.high_hz = std::nextafter(r.high_hz, 0.0);
  while (kernel_size_for_frequency(std::nextafter(r.low_hz, fs), rpm, resolution) != k)
    r.low_hz = std::nextafter(r.low_hz, fs);
  return r;
}

namespace {

AnalysisWindow slice(std::span<const double> samples, double start_angle, double resolution,
                     const WindowSpec& spec) {
  if (!(resolution > 0.0)) throw DomainError("resolution must be positive");
  const double offset = (spec.start_angle - start_angle) / resolution;
  const double first = std::round(offset);
  const auto count = static_cast<std::size_t>(std::llround(spec.span_degrees / resolution));
  if (std::abs(offset - first) > 1e-6 || first < 0.0 ||
      static_cast<std::size_t>(first) + count > samples.size()) {
    throw CoverageError("signal covering [" + std::to_string(start_angle) + ", " +
                        std::to_string(start_angle + resolution * (double(samples.size()) - 1)) +
                        "] °CA does not contain the window starting at " +
                        std::to_string(spec.start_angle) + " °CA");
  }
  const auto begin = samples.begin() + static_cast<std::ptrdiff_t>(first);
  AnalysisWindow w;
  w.samples.assign(begin, begin + static_cast<std::ptrdiff_t>(count));
  w.start_angle = spec.start_angle;
  w.resolution = resolution;
  return w;
}

}  // namespace

AnalysisWindow extract_window(const PressureCycle& cycle, const WindowSpec& spec) {
  return slice(cycle.samples, cycle.start_angle, cycle.resolution, spec);
}

AnalysisWindow extract_window(const AnalysisWindow& window, const WindowSpec& spec) {
  return slice(window.samples, window.start_angle, window.resolution, spec);
}

// ---------------------------------------------------------------------------
// Butterworth band-pass

BandPassFilter::BandPassFilter(Band band, double sample_rate)
    : band_(band), sample_rate_(sample_rate) {
  const double nyquist = 0.5 * sample_rate;
  if (!(sample_rate > 0.0) || !(band.low_hz > 0.0) || !(band.low_hz < band.high_hz) ||
      !(band.high_hz < nyquist)) {
    throw OutOfBand("band [" + std::to_string(band.low_hz) + ", " + std::to_string(band.high_hz) +
                    "] Hz must satisfy 0 < low < high < Nyquist (" + std::to_string(nyquist) +
                    " Hz)");
  }
  using cd = std::complex<double>;
  const double fs2 = 2.0 * sample_rate;
  const double wl = fs2 * std::tan(std::numbers::pi * band.low_hz / sample_rate);
  const double wh = fs2 * std::tan(std::numbers::pi * band.high_hz / sample_rate);
  const double w0 = std::sqrt(wl * wh);
  const double bw = wh - wl;
  const double center = 2.0 * std::atan(w0 / fs2);
  const cd zc = std::polar(1.0, center);

  // Upper-half-plane pole of the 2nd-order low-pass prototype; its conjugate
  // yields the conjugate band-pass poles, so one root pair suffices.
  const cd proto = std::polar(1.0, 0.75 * std::numbers::pi);
  const cd pb = proto * bw;
  const cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
  const std::array<cd, 2> analog = {(pb + disc) * 0.5, (pb - disc) * 0.5};

  for (std::size_t i = 0; i < 2; ++i) {
    const cd z = (fs2 + analog[i]) / (fs2 - analog[i]);
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {-2.0 * z.real(), std::norm(z)};
    const cd zi = 1.0 / zc;
    const cd h = (s.b[0] + s.b[1] * zi + s.b[2] * zi * zi) / (1.0 + s.a[0] * zi + s.a[1] * zi * zi);
    const double g = 1.0 / std::abs(h);
    for (auto& c : s.b) c *= g;
    sections_[i] = s;
  }
}

void BandPassFilter::run(std::vector<double>& x, bool steady_state_init) const {
  if (x.empty()) return;
  double level = steady_state_init ? x.front() : 0.0;
  for (const auto& s : sections_) {
    const double gain = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
    double z1 = (s.b[2] - s.a[1] * gain) * level;
    double z0 = (s.b[1] - s.a[0] * gain) * level + z1;
    for (double& v : x) {
      const double in = v;
      const double y = s.b[0] * in + z0;
      z0 = s.b[1] * in - s.a[0] * y + z1;
      z1 = s.b[2] * in - s.a[1] * y;
      v = y;
    }
    level *= gain;
  }
}

std::vector<double> BandPassFilter::filter(std::span<const double> x) const {
  std::vector<double> y(x.begin(), x.end());
  run(y, false);
  return y;
}

std::vector<double> BandPassFilter::filtfilt(std::span<const double> x) const {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (n == 1) return {0.0};
  const std::size_t pad = std::min<std::size_t>(n - 1, 60);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run(ext, true);
  std::reverse(ext.begin(), ext.end());
  run(ext, true);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

AnalysisWindow band_pass(const AnalysisWindow& window, double f_low_hz, double f_high_hz,
                         double sample_rate) {
  const BandPassFilter filter({f_low_hz, f_high_hz}, sample_rate);
  AnalysisWindow out;
  out.samples = filter.filtfilt(window.samples);
  out.start_angle = window.start_angle;
  out.resolution = window.resolution;
  return out;
}

}  // namespace knock
