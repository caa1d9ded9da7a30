#pragma once

// Expert-vote label model, probability/class conversion, the per-subset
// label-stratified split, and cycle/label file ingestion.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "knock/signal.hpp"

namespace knock {

enum class BinaryLabel : std::uint8_t { normal = 0, knocking = 1 };

const char* to_string(BinaryLabel label);

/// Five independent 0/1 judgments.
class ExpertVotes {
 public:
  ExpertVotes() = default;
  /// Throws DomainError unless every entry is 0 or 1.
  explicit ExpertVotes(std::array<int, 5> votes);

  const std::array<std::uint8_t, 5>& values() const { return votes_; }
  int sum() const;

  friend bool operator==(const ExpertVotes&, const ExpertVotes&) = default;

 private:
  std::array<std::uint8_t, 5> votes_{};
};

struct Labels {
  int relative = 0;       // 0..5
  double scaled = 0.0;    // relative / 5
  BinaryLabel binary = BinaryLabel::normal;
};

/// Majority rule: knocking iff at least three votes.
Labels labels_from_votes(const ExpertVotes& votes);

/// Relative class of a model probability; half-open bins with inclusive lower bound.
int probability_to_class(double p);

inline BinaryLabel binary_from_relative(int relative) {
  return relative >= 3 ? BinaryLabel::knocking : BinaryLabel::normal;
}

struct LabeledCycle {
  AnalysisWindow window;
  ExpertVotes votes;
  int relative_label = 0;
  double scaled_label = 0.0;
  BinaryLabel binary_label = BinaryLabel::normal;
  std::string subset_tag;
  std::string cycle_id;

  /// Builds a cycle whose labels are derived from `votes`.
  static LabeledCycle from_votes(AnalysisWindow window, const ExpertVotes& votes,
                                 std::string subset_tag, std::string cycle_id = {});
  /// Throws DomainError if the stored labels disagree with the votes.
  void check_consistency() const;
};

using CycleSet = std::vector<LabeledCycle>;

/// Fraction of each subset (by tag) that goes to training.
struct SplitSpec {
  std::map<std::string, double> train_fraction;
  std::uint64_t seed = 0;

  /// Same fraction for every tag present in `cycles`.
  static SplitSpec uniform(std::span<const LabeledCycle> cycles, double fraction,
                           std::uint64_t seed = 0);
  /// Parses "70/50/45" against tags in sorted order.
  static SplitSpec parse(const std::string& text, std::span<const std::string> sorted_tags,
                         std::uint64_t seed = 0);
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  /// FNV-1a over both index lists; equal iff the partitions are identical.
  std::uint64_t fingerprint() const;
};

/// Per-tag, per-binary-label shuffled pools; the first floor(fraction * pool)
/// of each pool train, the remainder test.
SplitIndices stratified_split_indices(std::span<const LabeledCycle> cycles, const SplitSpec& spec);

struct TrainTestSets {
  CycleSet train;
  CycleSet test;
};
TrainTestSets stratified_split(std::span<const LabeledCycle> cycles, const SplitSpec& spec);

CycleSet select(std::span<const LabeledCycle> cycles, std::span<const std::size_t> indices);

/// Seeded sample of `fraction` of the normal cycles carrying `subset_tag`.
CycleSet filter_nonknock(std::span<const LabeledCycle> cycles, const std::string& subset_tag,
                         double fraction, std::uint64_t seed);

std::vector<std::string> subset_tags(std::span<const LabeledCycle> cycles);

// ---------------------------------------------------------------------------
// File formats

/// Comma-separated, one cycle per row: `cycle_id,source_tag,s0,...`.
/// An optional header names the sample columns; without one a row must carry
/// 7200 (full cycle from -360 °CA) or 600 (window from TDC) samples.
std::vector<PressureCycle> read_cycles_csv(const std::filesystem::path& path);
void write_cycles_csv(const std::filesystem::path& path, std::span<const PressureCycle> cycles);

/// `angle,pressure` rows for a single cycle; optional header.
PressureCycle read_angle_pressure_csv(const std::filesystem::path& path);

/// `cycle_id,v1,v2,v3,v4,v5`; optional header.
std::map<std::string, ExpertVotes> read_labels_csv(const std::filesystem::path& path);

/// Joins cycles and labels by id, extracting the analysis window.
CycleSet load_cycles(const std::filesystem::path& cycles_path,
                     const std::filesystem::path& labels_path, const WindowSpec& window = {});

/// Writes windows (600-sample rows with header) and their votes.
void save_cycles(const std::filesystem::path& cycles_path,
                 const std::filesystem::path& labels_path, std::span<const LabeledCycle> cycles);

/// Writes `contents` to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace knock
