#include "knock/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "knock/error.hpp"

namespace knock {

namespace {

constexpr double kCompressionRatio = 12.0;
constexpr double kRodRatio = 4.0;  // connecting rod / crank radius
constexpr double kPolytropic = 1.35;
constexpr double kDeg = std::numbers::pi / 180.0;

double angle_at(std::size_t i) { return -360.0 + kDefaultResolution * static_cast<double>(i); }

/// Cylinder volume over clearance volume (slider-crank kinematics).
double volume_ratio(double theta_deg) {
  const double t = theta_deg * kDeg;
  const double s = std::sin(t);
  return 1.0 + 0.5 * (kCompressionRatio - 1.0) *
                   (kRodRatio + 1.0 - std::cos(t) - std::sqrt(kRodRatio * kRodRatio - s * s));
}

double vibe_fraction(double theta, double start, double duration) {
  if (theta <= start) return 0.0;
  const double x = std::min(1.0, (theta - start) / duration);
  return 1.0 - std::exp(-6.908 * std::pow(x, 3.0));
}

/// Window-band MAPO divided by amplitude, averaged over random knock shapes.
double judge_calibration(const SyntheticConfig& cfg, std::span<const double> freqs) {
  std::mt19937_64 rng(0x6b6e6f636bull ^ cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const BandPassFilter filter(cfg.judge_band, kDefaultSampleRate);
  constexpr int kDraws = 256;
  double total = 0.0;
  for (int d = 0; d < kDraws; ++d) {
    std::array<double, 3> w{}, ph{};
    for (std::size_t m = 0; m < 3; ++m) {
      w[m] = std::array{1.0, 0.5, 0.35}[m] * (0.8 + 0.4 * u01(rng));
      ph[m] = 2.0 * std::numbers::pi * u01(rng);
    }
    const double onset = cfg.knock_onset_min + (cfg.knock_onset_max - cfg.knock_onset_min) * u01(rng);
    const double decay = cfg.knock_decay * (0.7 + 0.6 * u01(rng));
    const auto osc = synth::damped_modes(freqs, w, ph, 1.0, onset, decay, cfg.geometry.rpm);
    const std::span<const double> win(osc.data() + 3600, kWindowSamples);
    const auto f = filter.filtfilt(win);
    double mx = 0.0;
    for (double v : f) mx = std::max(mx, std::abs(v));
    total += mx;
  }
  return total / kDraws;
}

}  // namespace

void SyntheticConfig::validate() const {
  geometry.validate();
  double wsum = 0.0;
  for (double w : class_weights) {
    if (!(w >= 0.0)) throw ConfigurationError("class weights must be non-negative");
    wsum += w;
  }
  if (!(wsum > 0.0)) throw ConfigurationError("class weights must not all be zero");
  if (n_cycles == 0) throw ConfigurationError("n_cycles must be positive");
  if (!(noise_level >= 0.0)) throw ConfigurationError("noise_level must be >= 0");
  if (!(knock_onset_min >= 0.0 && knock_onset_min <= knock_onset_max && knock_onset_max < 60.0))
    throw ConfigurationError("knock onset range must lie within [0, 60) °CA");
  if (!(peak_pressure_min > 0.0 && peak_pressure_min <= peak_pressure_max))
    throw ConfigurationError("peak pressure range invalid");
  if (!(knock_amplitude > 0.0) || !(knock_decay > 0.0))
    throw ConfigurationError("knock amplitude and decay must be positive");
  if (!(intensity_spread >= 0.0) || !(judge_noise >= 0.0) || !(ringing_amplitude >= 0.0) ||
      !(prechamber_amplitude >= 0.0))
    throw ConfigurationError("spreads and disturbance amplitudes must be >= 0");
  const double nyquist = 0.5 * geometry.sample_rate();
  for (const auto& m : acoustic_mode_frequencies(geometry)) {
    if (m.frequency_khz * 1e3 >= nyquist)
      throw OutOfBand("mode " + m.name + " above Nyquist for this geometry");
  }
  if (prechamber_amplitude > 0.0 && !(prechamber_frequency_hz > 0.0 && prechamber_frequency_hz < nyquist))
    throw OutOfBand("pre-chamber frequency outside (0, Nyquist)");
  // Validates the judge band against Nyquist.
  BandPassFilter(judge_band, geometry.sample_rate());
}

namespace synth {

std::vector<double> base_pressure(double intake_bar, double burn_start, double burn_duration,
                                  double combustion_scale) {
  std::vector<double> p(kFullCycleSamples);
  const double v_bdc = volume_ratio(180.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double th = angle_at(i);
    if (th < -180.0) {
      p[i] = intake_bar;
      continue;
    }
    const double motored = intake_bar * std::pow(v_bdc / volume_ratio(std::min(th, 180.0)), kPolytropic);
    double burn = vibe_fraction(th, burn_start, burn_duration);
    // Exhaust valve opening: combustion overpressure blows down by BDC.
    if (th > 130.0) {
      const double r = std::min(1.0, (th - 130.0) / 50.0);
      burn *= std::pow(std::cos(0.5 * std::numbers::pi * r), 2.0);
    }
    p[i] = th > 180.0 ? intake_bar * (1.0 + 0.1 * std::exp(-(th - 180.0) / 20.0))
                      : motored * (1.0 + combustion_scale * burn);
  }
  return p;
}

std::vector<double> damped_modes(std::span<const double> freqs_hz, std::span<const double> weights,
                                 std::span<const double> phases, double amplitude, double onset,
                                 double decay_deg, double rpm) {
  std::vector<double> out(kFullCycleSamples, 0.0);
  const double dps = degrees_per_second(rpm);
  const auto first = static_cast<std::size_t>(std::ceil((onset + 360.0) / kDefaultResolution));
  for (std::size_t i = first; i < out.size(); ++i) {
    const double dth = angle_at(i) - onset;
    const double env = amplitude * std::exp(-dth / decay_deg) * (1.0 - std::exp(-dth / 0.2));
    if (env < 1e-12 * amplitude) break;
    const double t = dth / dps;
    double s = 0.0;
    for (std::size_t m = 0; m < freqs_hz.size(); ++m)
      s += weights[m] * std::sin(2.0 * std::numbers::pi * freqs_hz[m] * t + phases[m]);
    out[i] = env * s;
  }
  return out;
}

}  // namespace synth

SyntheticDataset synthesize(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto modes = acoustic_mode_frequencies(cfg.geometry);
  const std::array<double, 3> freqs = {modes[0].frequency_khz * 1e3, modes[1].frequency_khz * 1e3,
                                       modes[2].frequency_khz * 1e3};
  const double calibration = judge_calibration(cfg, freqs);
  const BandPassFilter judge_filter(cfg.judge_band, cfg.geometry.sample_rate());

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::discrete_distribution<int> pick_class(cfg.class_weights.begin(), cfg.class_weights.end());
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  SyntheticDataset out;
  out.cycles.reserve(cfg.n_cycles);
  out.labeled.reserve(cfg.n_cycles);
  out.truth.reserve(cfg.n_cycles);

  for (std::size_t n = 0; n < cfg.n_cycles; ++n) {
    SyntheticTruth truth;
    truth.target_class = pick_class(rng);

    // Base trace scaled so its maximum hits the drawn peak pressure.
    const double intake = uniform(1.3, 1.7);
    const double burn_start = uniform(-14.0, -6.0);
    const double burn_duration = uniform(45.0, 60.0);
    truth.peak_pressure = uniform(cfg.peak_pressure_min, cfg.peak_pressure_max);
    auto peak_of = [&](double scale) {
      double mx = 0.0;
      const double v_bdc = volume_ratio(180.0);
      for (double th = -30.0; th <= 90.0; th += 0.5) {
        const double motored = intake * std::pow(v_bdc / volume_ratio(th), kPolytropic);
        mx = std::max(mx, motored * (1.0 + scale * vibe_fraction(th, burn_start, burn_duration)));
      }
      return mx;
    };
    double lo = 0.0, hi = 20.0;
    if (peak_of(0.0) >= truth.peak_pressure) hi = 0.0;
    for (int it = 0; it < 50 && hi > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      (peak_of(mid) < truth.peak_pressure ? lo : hi) = mid;
    }
    auto signal = synth::base_pressure(intake, burn_start, burn_duration, hi);

    // Non-knock disturbances: early and fast-decaying.
    if (cfg.ringing_amplitude > 0.0) {
      const std::array<double, 3> w = {1.0, 0.6, 0.4};
      const std::array<double, 3> ph = {uniform(0, 2 * std::numbers::pi),
                                        uniform(0, 2 * std::numbers::pi),
                                        uniform(0, 2 * std::numbers::pi)};
      const double amp = cfg.ringing_amplitude * u01(rng);
      const auto r = synth::damped_modes(freqs, w, ph, amp, uniform(0.0, 5.0), uniform(2.0, 4.0),
                                         cfg.geometry.rpm);
      for (std::size_t i = 0; i < signal.size(); ++i) signal[i] += r[i];
    }
    if (cfg.prechamber_amplitude > 0.0) {
      const std::array<double, 1> f = {cfg.prechamber_frequency_hz * uniform(0.9, 1.1)};
      const std::array<double, 1> w = {1.0};
      const std::array<double, 1> ph = {uniform(0, 2 * std::numbers::pi)};
      const double amp = cfg.prechamber_amplitude * u01(rng);
      const auto r = synth::damped_modes(f, w, ph, amp, uniform(-2.0, 3.0), uniform(1.5, 3.0),
                                         cfg.geometry.rpm);
      for (std::size_t i = 0; i < signal.size(); ++i) signal[i] += r[i];
    }

    // Knock oscillation for target class >= 1.
    std::vector<double> knock_part;
    if (truth.target_class >= 1) {
      truth.intensity = std::max(0.15, truth.target_class + cfg.intensity_spread * gauss(rng));
      std::array<double, 3> w{}, ph{};
      for (std::size_t m = 0; m < 3; ++m) {
        w[m] = std::array{1.0, 0.5, 0.35}[m] * uniform(0.8, 1.2);
        ph[m] = uniform(0.0, 2.0 * std::numbers::pi);
      }
      truth.knock_onset = uniform(cfg.knock_onset_min, cfg.knock_onset_max);
      const double decay = cfg.knock_decay * uniform(0.7, 1.3);
      knock_part = synth::damped_modes(freqs, w, ph, cfg.knock_amplitude * truth.intensity,
                                       truth.knock_onset, decay, cfg.geometry.rpm);
      for (std::size_t i = 0; i < signal.size(); ++i) signal[i] += knock_part[i];
    }

    for (double& v : signal) v = std::max(0.0, v + cfg.noise_level * gauss(rng));

    // Judges rate the band-passed amplitude of the knock oscillation alone.
    if (!knock_part.empty()) {
      const std::span<const double> win(knock_part.data() + 3600, kWindowSamples);
      double mx = 0.0;
      for (double v : judge_filter.filtfilt(win)) mx = std::max(mx, std::abs(v));
      truth.judged_intensity = mx / (cfg.knock_amplitude * calibration);
    }
    std::array<int, 5> votes{};
    for (int j = 0; j < 5; ++j) {
      const double threshold = std::max(0.05, j + 0.5 + cfg.judge_noise * gauss(rng));
      votes[static_cast<std::size_t>(j)] = truth.judged_intensity > threshold ? 1 : 0;
    }

    PressureCycle cycle;
    cycle.samples = std::move(signal);
    cycle.cycle_id = cfg.subset_tag + "-" + std::to_string(n);
    cycle.source_tag = cfg.subset_tag;
    auto labeled = LabeledCycle::from_votes(extract_window(cycle), ExpertVotes(votes),
                                            cfg.subset_tag, cycle.cycle_id);
    out.cycles.push_back(std::move(cycle));
    out.labeled.push_back(std::move(labeled));
    out.truth.push_back(truth);
  }
  return out;
}

CycleSet synthesize_dataset(const SyntheticConfig& config) {
  return std::move(synthesize(config).labeled);
}

std::vector<SyntheticConfig> three_engine_study(std::uint64_t seed) {
  // Relative-label histogram of the reference campaign, split into its
  // normal (0..2) and knocking (3..5) shapes and rescaled per engine.
  constexpr std::array<double, 3> normal_shape = {803, 250, 232};
  constexpr std::array<double, 3> knock_shape = {137, 325, 1123};
  auto weights = [&](double n_normal, double n_knock) {
    const double sn = normal_shape[0] + normal_shape[1] + normal_shape[2];
    const double sk = knock_shape[0] + knock_shape[1] + knock_shape[2];
    std::array<double, 6> w{};
    for (std::size_t i = 0; i < 3; ++i) {
      w[i] = n_normal * normal_shape[i] / sn;
      w[i + 3] = n_knock * knock_shape[i] / sk;
    }
    return w;
  };

  SyntheticConfig a;
  a.geometry.bore_mm = 145.0;
  a.subset_tag = "A";
  a.n_cycles = 840;
  a.class_weights = weights(534, 306);
  a.peak_pressure_min = 80.0;
  a.peak_pressure_max = 110.0;
  a.ringing_amplitude = 0.8;
  a.seed = seed * 3 + 0;

  SyntheticConfig b = a;
  b.subset_tag = "B";
  b.n_cycles = 1500;
  b.class_weights = weights(423, 1077);
  b.peak_pressure_min = 100.0;
  b.peak_pressure_max = 140.0;
  b.prechamber_amplitude = 3.0;
  b.seed = seed * 3 + 1;

  SyntheticConfig c = a;
  c.geometry.bore_mm = 190.0;
  c.subset_tag = "C";
  c.n_cycles = 540;
  c.class_weights = weights(338, 202);
  c.peak_pressure_min = 120.0;
  c.peak_pressure_max = 150.0;
  c.knock_amplitude = 2.0;
  c.ringing_amplitude = 4.0;
  c.seed = seed * 3 + 2;

  return {a, b, c};
}

CycleSet synthesize_study(const std::vector<SyntheticConfig>& configs) {
  CycleSet all;
  for (const auto& cfg : configs) {
    auto part = synthesize_dataset(cfg);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

}  // namespace knock
