#include "knock/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "knock/error.hpp"

namespace knock {

const char* to_string(BinaryLabel label) {
  return label == BinaryLabel::knocking ? "knocking" : "normal";
}

ExpertVotes::ExpertVotes(std::array<int, 5> votes) {
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (votes[i] != 0 && votes[i] != 1)
      throw DomainError("expert vote must be 0 or 1, got " + std::to_string(votes[i]));
    votes_[i] = static_cast<std::uint8_t>(votes[i]);
  }
}

int ExpertVotes::sum() const {
  int s = 0;
  for (auto v : votes_) s += v;
  return s;
}

Labels labels_from_votes(const ExpertVotes& votes) {
  Labels l;
  l.relative = votes.sum();
  l.scaled = static_cast<double>(l.relative) / 5.0;
  l.binary = binary_from_relative(l.relative);
  return l;
}

int probability_to_class(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DomainError("probability must lie in [0, 1], got " + std::to_string(p));
  static constexpr std::array<double, 5> lower_bounds = {0.1, 0.3, 0.5, 0.7, 0.9};
  int cls = 0;
  for (double b : lower_bounds)
    if (p >= b) ++cls;
  return cls;
}

LabeledCycle LabeledCycle::from_votes(AnalysisWindow window, const ExpertVotes& votes,
                                      std::string subset_tag, std::string cycle_id) {
  const Labels l = labels_from_votes(votes);
  LabeledCycle c;
  c.window = std::move(window);
  c.votes = votes;
  c.relative_label = l.relative;
  c.scaled_label = l.scaled;
  c.binary_label = l.binary;
  c.subset_tag = std::move(subset_tag);
  c.cycle_id = std::move(cycle_id);
  return c;
}

void LabeledCycle::check_consistency() const {
  const Labels l = labels_from_votes(votes);
  if (l.relative != relative_label || l.scaled != scaled_label || l.binary != binary_label)
    throw DomainError("labels of cycle '" + cycle_id + "' disagree with its votes");
}

// ---------------------------------------------------------------------------
// Splitting

SplitSpec SplitSpec::uniform(std::span<const LabeledCycle> cycles, double fraction,
                             std::uint64_t seed) {
  SplitSpec spec;
  spec.seed = seed;
  for (const auto& tag : subset_tags(cycles)) spec.train_fraction[tag] = fraction;
  return spec;
}

SplitSpec SplitSpec::parse(const std::string& text, std::span<const std::string> sorted_tags,
                           std::uint64_t seed) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '/')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      parts.push_back(v);
    } catch (const std::exception&) {
      throw ConfigurationError("split '" + text + "' is not of the form 70/70/70");
    }
  }
  if (parts.size() == 1) parts.resize(sorted_tags.size(), parts.front());
  if (parts.size() != sorted_tags.size()) {
    throw ConfigurationError("split '" + text + "' names " + std::to_string(parts.size()) +
                             " subsets but the data has " + std::to_string(sorted_tags.size()));
  }
  SplitSpec spec;
  spec.seed = seed;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double f = parts[i] / 100.0;
    if (!(f >= 0.0 && f <= 1.0))
      throw ConfigurationError("split percentage out of range: " + std::to_string(parts[i]));
    spec.train_fraction[sorted_tags[i]] = f;
  }
  return spec;
}

std::uint64_t SplitIndices::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(train.size());
  for (auto i : train) mix(i);
  mix(test.size());
  for (auto i : test) mix(i);
  return h;
}

namespace {

std::size_t train_count(double fraction, std::size_t pool) {
  // Floor; the epsilon absorbs representation error such as 0.7 * 10 = 7.000000000000001.
  const double n = std::floor(fraction * static_cast<double>(pool) + 1e-9);
  return std::min(pool, static_cast<std::size_t>(std::max(0.0, n)));
}

}  // namespace

SplitIndices stratified_split_indices(std::span<const LabeledCycle> cycles,
                                      const SplitSpec& spec) {
  for (const auto& [tag, f] : spec.train_fraction) {
    if (!(f >= 0.0 && f <= 1.0))
      throw ConfigurationError("train fraction for subset '" + tag + "' outside [0, 1]");
  }
  std::map<std::string, std::array<std::vector<std::size_t>, 2>> pools;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    const auto& c = cycles[i];
    if (!spec.train_fraction.contains(c.subset_tag))
      throw ConfigurationError("subset tag '" + c.subset_tag + "' is not named in the split");
    pools[c.subset_tag][static_cast<std::size_t>(c.binary_label)].push_back(i);
  }
  std::mt19937_64 rng(spec.seed);
  SplitIndices out;
  for (auto& [tag, by_label] : pools) {
    const double fraction = spec.train_fraction.at(tag);
    for (auto& pool : by_label) {
      std::shuffle(pool.begin(), pool.end(), rng);
      const std::size_t n_train = train_count(fraction, pool.size());
      out.train.insert(out.train.end(), pool.begin(),
                       pool.begin() + static_cast<std::ptrdiff_t>(n_train));
      out.test.insert(out.test.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_train),
                      pool.end());
    }
  }
  return out;
}

CycleSet select(std::span<const LabeledCycle> cycles, std::span<const std::size_t> indices) {
  CycleSet out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(cycles[i]);
  return out;
}

TrainTestSets stratified_split(std::span<const LabeledCycle> cycles, const SplitSpec& spec) {
  const SplitIndices idx = stratified_split_indices(cycles, spec);
  return {select(cycles, idx.train), select(cycles, idx.test)};
}

CycleSet filter_nonknock(std::span<const LabeledCycle> cycles, const std::string& subset_tag,
                         double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ConfigurationError("fraction must lie in [0, 1]");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    if (cycles[i].subset_tag == subset_tag && cycles[i].binary_label == BinaryLabel::normal)
      pool.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(train_count(fraction, pool.size()));
  return select(cycles, pool);
}

std::vector<std::string> subset_tags(std::span<const LabeledCycle> cycles) {
  std::set<std::string> tags;
  for (const auto& c : cycles) tags.insert(c.subset_tag);
  return {tags.begin(), tags.end()};
}

}  // namespace knock
