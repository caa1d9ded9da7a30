#pragma once

// Accuracy and six-class confusion metrics, repeated stratified validation
// over shared splits, cross-engine scenarios, and latency measurement.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "knock/dataset.hpp"
#include "knock/detectors.hpp"
#include "knock/error.hpp"

namespace knock {

/// Throws DomainError on empty or unequal inputs.
double binary_accuracy(std::span<const BinaryLabel> predicted, std::span<const BinaryLabel> truth);

struct ConfusionMatrix6 {
  std::array<std::array<std::size_t, 6>, 6> counts{};  // [true][predicted]

  /// Throws DomainError for a class outside 0..5.
  void add(int true_class, int predicted_class);
  std::size_t total() const;
  std::array<std::size_t, 6> column_sums() const;
  /// Row-normalised fractions; all-zero rows stay zero.
  std::array<std::array<double, 6>, 6> row_normalized() const;
  /// Binary accuracy implied by collapsing {0,1,2} vs {3,4,5}.
  double binary_accuracy() const;

  friend bool operator==(const ConfusionMatrix6&, const ConfusionMatrix6&) = default;
};

ConfusionMatrix6 confusion_matrix(std::span<const int> predicted, std::span<const int> truth);

struct DiagonalMetrics {
  double main = 0.0;
  double main_plus_secondary = 0.0;
  /// Secondary credit except the (2, 3) and (3, 2) cells, which flip the binary label.
  double main_plus_secondary_modified = 0.0;

  friend bool operator==(const DiagonalMetrics&, const DiagonalMetrics&) = default;
};

/// Throws DomainError on an empty matrix.
DiagonalMetrics diagonal_metrics(const ConfusionMatrix6& cm);

struct Stats {
  double mean = 0.0, median = 0.0, max = 0.0, min = 0.0, stddev = 0.0;  // stddev: n - 1

  friend bool operator==(const Stats&, const Stats&) = default;
};

/// Throws DomainError on empty input; stddev is 0 for a single value.
Stats compute_stats(std::span<const double> values);

struct SplitResult {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<ConfusionMatrix6> test_confusion;

  friend bool operator==(const SplitResult&, const SplitResult&) = default;
};

struct CVReport {
  std::string detector;
  std::vector<SplitResult> splits;
  Stats train;
  Stats test;

  /// Recomputes the aggregates from `splits`.
  void recompute();
  friend bool operator==(const CVReport&, const CVReport&) = default;
};

/// A fit failure inside validation, annotated with the split.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::size_t repeat)
      : Error("split " + std::to_string(repeat) + ": " + what), repeat_(repeat) {}
  std::size_t repeat() const noexcept { return repeat_; }

 private:
  std::size_t repeat_;
};

/// Called after each detector is fitted and scored on a split.
using SplitObserver = std::function<void(const std::string& detector, std::size_t repeat,
                                         const Detector& fitted, const TrainTestSets& sets)>;

struct NamedFactory {
  std::string name;
  DetectorFactory make;
};

/// Repeat r uses split seed spec.seed + r. The CNN's holdout is the split's
/// test set, which is also what it is scored on.
CVReport cross_validate(const NamedFactory& detector, std::span<const LabeledCycle> dataset,
                        const SplitSpec& spec, std::size_t n_repeats = 10,
                        const SplitObserver& observer = {});

/// Every detector sees the identical split in each repeat.
std::vector<CVReport> compare_detectors(std::span<const LabeledCycle> dataset,
                                        const SplitSpec& spec,
                                        std::span<const NamedFactory> detectors,
                                        std::size_t n_repeats = 10,
                                        const SplitObserver& observer = {});

// ---------------------------------------------------------------------------
// Cross-engine protocols

struct FitScore {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Fit on `train` (early-stopping holdout `holdout`, or `test` when empty) and score.
FitScore fit_and_score(const DetectorFactory& make, std::span<const LabeledCycle> train,
                       std::span<const LabeledCycle> holdout, std::span<const LabeledCycle> test,
                       std::uint64_t seed);

struct Scenario {
  std::string name;
  std::set<std::string> train_tags;
  std::set<std::string> test_tags;
};

/// The six leave-groups-out combinations of three tags: A|BC, B|AC, C|AB, AB|C, AC|B, BC|A.
std::vector<Scenario> leave_out_scenarios(const std::string& a = "A", const std::string& b = "B",
                                          const std::string& c = "C");

struct ScenarioResult {
  std::string scenario;
  std::string detector;
  FitScore score;
};

/// Trains on whole train-tag subsets and tests on whole test-tag subsets.
/// Throws ConfigurationError for an unknown tag or an empty side.
std::vector<ScenarioResult> generalization_matrix(std::span<const LabeledCycle> dataset,
                                                  std::span<const Scenario> scenarios,
                                                  std::span<const NamedFactory> detectors,
                                                  std::uint64_t seed = 0);

/// Per-tag training fractions; tags listed in `nonknock_only` contribute only a
/// seeded fraction of their normal cycles to training.
struct FractionPlan {
  std::map<std::string, double> fraction;
  std::set<std::string> nonknock_only;
};

struct FractionResult {
  std::map<std::string, std::size_t> train_counts;
  double train_accuracy = 0.0;
  std::map<std::string, double> test_accuracy;  // per tag
};

/// One small-data run; the holdout is the union of all test cycles.
FractionResult fraction_run(const DetectorFactory& make, std::span<const LabeledCycle> dataset,
                            const FractionPlan& plan, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Latency

struct LatencyReport {
  double mean_us = 0.0;
  double p99_us = 0.0;
  double min_us = 0.0;
  double max_us = 0.0;
  std::size_t n_warmup = 0;
  std::size_t n_measured = 0;
};

/// Times single-window calls with one OpenMP thread on a monotonic clock,
/// cycling through `windows`. Throws ConfigurationError if n_measured < 100.
LatencyReport latency_benchmark(const std::function<void(const AnalysisWindow&)>& classify,
                                std::span<const AnalysisWindow> windows, std::size_t n_warmup,
                                std::size_t n_measured);
LatencyReport latency_benchmark(const Detector& detector, std::span<const AnalysisWindow> windows,
                                std::size_t n_warmup, std::size_t n_measured);

// ---------------------------------------------------------------------------
// Reports

/// Per-split rows then Mean/Median/Max/Min/Std rows, train and test per detector.
std::string format_cv_table(std::span<const CVReport> reports);
std::string cv_csv(std::span<const CVReport> reports);
/// Counts, then row-normalised fractions.
std::string format_confusion(const ConfusionMatrix6& cm);
std::string confusion_csv(const ConfusionMatrix6& cm);
/// Three rows: main, main + secondary, main + secondary (modified).
std::string format_diagonal_metrics(std::span<const std::pair<std::string, DiagonalMetrics>> columns);
std::string format_scenarios(std::span<const ScenarioResult> results);
std::string scenarios_csv(std::span<const ScenarioResult> results);

}  // namespace knock
