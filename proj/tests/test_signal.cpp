#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "knock/error.hpp"
#include "knock/signal.hpp"
#include "oracles.hpp"

using namespace knock;

namespace {

EngineGeometry bore(double mm) {
  EngineGeometry g;
  g.bore_mm = mm;
  return g;
}

std::vector<double> tone(double freq, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * std::numbers::pi * freq * double(i) / fs);
  return x;
}

}  // namespace

TEST_CASE("mode frequencies for the tabulated bores") {
  CHECK(std::abs(acoustic_mode_frequencies(bore(145))[0].frequency_khz - 3.9) <= 0.05);
  CHECK(std::abs(acoustic_mode_frequencies(bore(190))[0].frequency_khz - 3.0) <= 0.05);
  CHECK(std::abs(acoustic_mode_frequencies(bore(65))[4].frequency_khz - 25.2) <= 0.1);

  const auto m = acoustic_mode_frequencies(bore(145));
  REQUIRE(m.size() == 5);
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m[i].name == kModeNames[i]);
    CHECK(m[i].bessel_factor == kBesselFactors[i]);
    if (i) CHECK(m[i].frequency_khz > m[i - 1].frequency_khz);
  }
}

TEST_CASE("mode frequencies scale with a and inversely with bore") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(20.0, 400.0);
  for (int t = 0; t < 50; ++t) {
    EngineGeometry g = bore(u(rng));
    g.speed_of_sound = 3.0 * u(rng);
    EngineGeometry g2 = g;
    g2.bore_mm *= 2.0;
    EngineGeometry g3 = g;
    g3.speed_of_sound *= 1.5;
    const auto f = acoustic_mode_frequencies(g);
    const auto f2 = acoustic_mode_frequencies(g2);
    const auto f3 = acoustic_mode_frequencies(g3);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(f2[i].frequency_khz == doctest::Approx(f[i].frequency_khz / 2).epsilon(1e-12));
      CHECK(f3[i].frequency_khz == doctest::Approx(f[i].frequency_khz * 1.5).epsilon(1e-12));
    }
  }
}

TEST_CASE("invalid geometry") {
  CHECK_THROWS_AS(acoustic_mode_frequencies(bore(0)), InvalidGeometry);
  CHECK_THROWS_AS(acoustic_mode_frequencies(bore(-3)), InvalidGeometry);
  EngineGeometry g = bore(145);
  g.speed_of_sound = 0;
  CHECK_THROWS_AS(acoustic_mode_frequencies(g), InvalidGeometry);
  g = bore(145);
  g.rpm = 0;
  CHECK_THROWS_AS(g.validate(), InvalidGeometry);
}

TEST_CASE("sample rate at default speed") {
  CHECK(kDefaultSampleRate == 90000.0);
  CHECK(bore(145).sample_rate() == 90000.0);
}

TEST_CASE("kernel size for frequency") {
  CHECK(kernel_size_for_frequency(3000, 1500, 0.1) == 30);
  for (double f = 8100; f <= 8550; f += 50) CHECK(kernel_size_for_frequency(f, 1500, 0.1) == 11);
  // 90000 / 8700 = 10.34: the upper part of an 8.1-8.7 kHz band already rounds to 10.
  CHECK(kernel_size_for_frequency(8700, 1500, 0.1) == 10);
  CHECK(kernel_size_for_frequency(9000, 1500, 1.0) == 1);
  CHECK_THROWS_AS(kernel_size_for_frequency(9001, 1500, 1.0), OutOfBand);
  CHECK_THROWS_AS(kernel_size_for_frequency(0, 1500, 0.1), DomainError);
  CHECK_THROWS_AS(kernel_size_for_frequency(1000, -1, 0.1), DomainError);
  CHECK_THROWS_AS(kernel_size_for_frequency(1000, 1500, 0), DomainError);
}

TEST_CASE("kernel size rounds half up") {
  // fs / f = 10.5 exactly
  CHECK(kernel_size_for_frequency(90000.0 / 10.5) == 11);
  CHECK(kernel_size_for_frequency(90000.0 / 10.4999) == 10);
}

TEST_CASE("kernel size is non-increasing in frequency") {
  int prev = kernel_size_for_frequency(100.0);
  for (double f = 100.0; f <= 90000.0; f *= 1.01) {
    const int k = kernel_size_for_frequency(f);
    CHECK(k <= prev);
    prev = k;
  }
}

TEST_CASE("frequency range for kernel inverts kernel size") {
  const auto r23 = frequency_range_for_kernel(23);
  CHECK(r23.contains(3900));
  CHECK(r23.contains(4000));
  CHECK_FALSE(r23.contains(3800));  // 90000 / 3800 = 23.7 rounds to 24
  const auto r18 = frequency_range_for_kernel(18);
  CHECK(r18.contains(4900));
  CHECK(r18.contains(5000));
  for (int k = 1; k <= 60; ++k) {
    const auto r = frequency_range_for_kernel(k);
    CHECK(r.low_hz < r.high_hz);
    for (int i = 1; i < 50; ++i) {
      const double f = r.low_hz + (r.high_hz - r.low_hz) * i / 50.0;
      CHECK(kernel_size_for_frequency(f) == k);
    }
    CHECK(kernel_size_for_frequency(r.high_hz) == k);
  }
  CHECK_THROWS_AS(frequency_range_for_kernel(0), DomainError);
}

TEST_CASE("window extraction matches a brute-force angle search") {
  PressureCycle c;
  c.samples.resize(kFullCycleSamples);
  for (std::size_t i = 0; i < c.samples.size(); ++i) c.samples[i] = 1.0 + 0.001 * double(i);
  REQUIRE(c.is_full_cycle());
  const auto w = extract_window(c);
  REQUIRE(w.size() == 600);
  CHECK(w.start_angle == 0.0);
  std::size_t first = 0;
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    if (std::abs(c.start_angle + double(i) * c.resolution) < 1e-9) {
      first = i;
      break;
    }
  }
  CHECK(first == 3600);
  for (std::size_t i = 0; i < 600; ++i) CHECK(w.samples[i] == c.samples[first + i]);
}

TEST_CASE("window extraction is idempotent and checks coverage") {
  PressureCycle c;
  c.samples.assign(kFullCycleSamples, 2.0);
  const auto w = extract_window(c);
  const auto w2 = extract_window(w);
  CHECK(w2.samples == w.samples);

  PressureCycle half;
  half.samples.assign(3601, 1.0);  // -360 .. 0
  CHECK_THROWS_AS(extract_window(half), CoverageError);
}

TEST_CASE("band-pass rejects DC") {
  AnalysisWindow w;
  w.samples.assign(600, 100.0);
  const auto y = band_pass(w, 3000, 9000);
  REQUIRE(y.size() == 600);
  for (double v : y.samples) CHECK(std::abs(v) < 1e-6 * 100.0);
}

TEST_CASE("band-pass passes 6 kHz and blocks 100 Hz") {
  const double fs = kDefaultSampleRate;
  AnalysisWindow w;
  // 6 kHz: 40 whole periods in 600 samples.
  w.samples = tone(6000, fs, 600);
  auto y = band_pass(w, 3000, 9000);
  // Edge transients: measure over the central 480 samples (32 periods).
  std::span<const double> mid(y.samples.data() + 60, 480);
  CHECK(oracle::tone_amplitude(mid, 6000, fs) == doctest::Approx(1.0).epsilon(0.05));

  // 100 Hz over 900 samples (one period).
  w.samples = tone(100, fs, 900);
  y = band_pass(w, 3000, 9000);
  CHECK(oracle::tone_amplitude(y.samples, 100, fs) < 0.1);
}

TEST_CASE("band-pass is linear") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  AnalysisWindow x, y, z;
  x.samples.resize(600);
  y.samples.resize(600);
  for (auto& v : x.samples) v = n01(rng);
  for (auto& v : y.samples) v = 50 + n01(rng);
  const double a = 1.7, b = -0.3;
  z.samples.resize(600);
  for (std::size_t i = 0; i < 600; ++i) z.samples[i] = a * x.samples[i] + b * y.samples[i];
  const auto fx = band_pass(x, 3000, 9000), fy = band_pass(y, 3000, 9000), fz = band_pass(z, 3000, 9000);
  double scale = 0.0;
  for (double v : fz.samples) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < 600; ++i)
    CHECK(std::abs(fz.samples[i] - (a * fx.samples[i] + b * fy.samples[i])) <= 1e-9 * scale);
}

TEST_CASE("band-pass validates the band") {
  AnalysisWindow w;
  w.samples.assign(600, 1.0);
  CHECK_THROWS_AS(band_pass(w, 3000, 46000), OutOfBand);
  CHECK_THROWS_AS(band_pass(w, 0, 9000), OutOfBand);
  CHECK_THROWS_AS(band_pass(w, 9000, 3000), OutOfBand);
}

TEST_CASE("pressure cycle validation") {
  PressureCycle c;
  c.samples = {1.0, -0.5};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.samples = {1.0, NAN};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.samples.assign(kFullCycleSamples, 1.0);
  CHECK_NOTHROW(c.validate());
  CHECK(c.end_angle() == doctest::Approx(359.9));
}
