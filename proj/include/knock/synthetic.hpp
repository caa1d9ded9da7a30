#pragma once

// Physics-grounded synthetic pressure cycles with simulated expert votes.
//
// Each cycle is a polytropic compression/expansion trace with a Vibe-shaped
// combustion pressure rise, Gaussian sensor noise, and, for target class
// L >= 1, exponentially damped oscillations at the first three chamber
// resonance modes of the engine geometry. Optional non-knock disturbances
// (early combustion ringing, pre-chamber jet ringing) are added to the signal
// but are invisible to the simulated judges, who rate only the knock
// oscillation.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "knock/dataset.hpp"
#include "knock/signal.hpp"

namespace knock {

struct SyntheticConfig {
  EngineGeometry geometry;
  std::string subset_tag = "A";
  std::size_t n_cycles = 1000;
  /// Weights over target relative classes 0..5.
  std::array<double, 6> class_weights = {803, 250, 232, 137, 325, 1123};
  double noise_level = 0.05;  // bar, std-dev
  double knock_onset_min = 8.0;   // °CA aTDC
  double knock_onset_max = 25.0;
  std::uint64_t seed = 0;

  double peak_pressure_min = 90.0;  // bar
  double peak_pressure_max = 130.0;
  double knock_amplitude = 1.0;     // bar of oscillation per unit knock intensity
  double knock_decay = 8.0;         // °CA envelope time constant
  double intensity_spread = 0.3;    // within-class std-dev of knock intensity
  double judge_noise = 0.25;        // std-dev of each judge's threshold
  double ringing_amplitude = 0.0;   // bar, upper bound of early non-knock mode ringing
  double prechamber_amplitude = 0.0;  // bar, upper bound of pre-chamber jet ringing
  double prechamber_frequency_hz = 14000.0;
  Band judge_band{};

  /// Throws ConfigurationError / InvalidGeometry.
  void validate() const;
};

/// Ground truth behind one generated cycle.
struct SyntheticTruth {
  int target_class = 0;
  double intensity = 0.0;          // latent knock intensity (0 for class 0)
  double judged_intensity = 0.0;   // what the judges measured
  double knock_onset = 0.0;        // °CA, NaN-free; 0 when no knock
  double peak_pressure = 0.0;
};

struct SyntheticDataset {
  std::vector<PressureCycle> cycles;  // full 7200-sample cycles
  CycleSet labeled;                   // analysis windows + simulated votes
  std::vector<SyntheticTruth> truth;
};

/// Full generation with ground truth; deterministic given `config.seed`.
SyntheticDataset synthesize(const SyntheticConfig& config);

/// Labeled windows only.
CycleSet synthesize_dataset(const SyntheticConfig& config);

/// Three engines shaped like the reference study (bores 145/145/190 mm,
/// 840/1500/540 cycles, per-engine knock ratios); tags A, B, C.
std::vector<SyntheticConfig> three_engine_study(std::uint64_t seed);

/// Concatenation of several configurations, each seeded from its own config.
CycleSet synthesize_study(const std::vector<SyntheticConfig>& configs);

/// Deterministic single-cycle pieces, exposed for tests.
namespace synth {
/// Motored plus Vibe combustion pressure over the full cycle.
std::vector<double> base_pressure(double intake_bar, double burn_start, double burn_duration,
                                  double combustion_scale);
/// Damped multi-mode oscillation starting at `onset` (°CA) over the full cycle.
std::vector<double> damped_modes(std::span<const double> freqs_hz, std::span<const double> weights,
                                 std::span<const double> phases, double amplitude, double onset,
                                 double decay_deg, double rpm);
}  // namespace synth

}  // namespace knock
