#pragma once

// Uniform fit/classify interface over the CNN and the reference detectors.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knock/cnn.hpp"
#include "knock/config.hpp"
#include "knock/reference.hpp"
#include "knock/train.hpp"

namespace knock {

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;

  /// `holdout` is what the CNN monitors for early stopping; reference
  /// detectors ignore it. `seed` varies per validation repeat.
  virtual void fit(std::span<const LabeledCycle> train, std::span<const LabeledCycle> holdout,
                   std::uint64_t seed) = 0;
  virtual BinaryLabel classify(const AnalysisWindow& window) const = 0;

  /// Batch classification; the default loops over classify().
  virtual std::vector<BinaryLabel> classify_all(std::span<const LabeledCycle> cycles) const;
  /// Relative classes 0..5 for detectors with a graded output.
  virtual std::optional<std::vector<int>> relative_classes(
      std::span<const LabeledCycle> cycles) const {
    (void)cycles;
    return std::nullopt;
  }

  /// Fitted state as key-value text; binary side files use `path` as a prefix.
  virtual void save(const std::filesystem::path& path) const = 0;
};

using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

struct CnnOptions {
  int base_kernel = 11;
  ConvMode mode = ConvMode::shared_kernel;
  InitScheme init = InitScheme::centered_first_layer;
  TrainConfig train{};
};

class CnnDetector : public Detector {
 public:
  explicit CnnDetector(CnnOptions options = {}) : options_(std::move(options)) {}
  std::string name() const override { return "cnn"; }
  /// Builds and trains a fresh network; init and shuffle seeds derive from `seed`.
  void fit(std::span<const LabeledCycle> train, std::span<const LabeledCycle> holdout,
           std::uint64_t seed) override;
  BinaryLabel classify(const AnalysisWindow& window) const override;
  std::vector<BinaryLabel> classify_all(std::span<const LabeledCycle> cycles) const override;
  std::optional<std::vector<int>> relative_classes(
      std::span<const LabeledCycle> cycles) const override;
  void save(const std::filesystem::path& path) const override;

  const KnockNet& net() const { return net_; }
  void set_net(KnockNet net) { net_ = std::move(net); }
  /// The network as initialised by the last fit(), before any training step.
  const KnockNet& initial_net() const { return initial_; }
  const TrainReport& report() const { return report_; }
  const CnnOptions& options() const { return options_; }

 private:
  CnnOptions options_;
  KnockNet net_;
  KnockNet initial_;
  TrainReport report_;
};

class MapoDetector : public Detector {
 public:
  explicit MapoDetector(Band band = {}) : band_(band) {}
  std::string name() const override { return "mapo"; }
  void fit(std::span<const LabeledCycle> train, std::span<const LabeledCycle> holdout,
           std::uint64_t seed) override;
  BinaryLabel classify(const AnalysisWindow& window) const override;
  void save(const std::filesystem::path& path) const override;
  static MapoDetector load(const std::filesystem::path& path);

  const MapoModel& model() const { return model_; }

 private:
  Band band_;
  MapoModel model_;
};

class PcaDdDetector : public Detector {
 public:
  explicit PcaDdDetector(std::size_t n_components = kDefaultPcaComponents)
      : n_components_(n_components) {}
  std::string name() const override { return "pca-dd"; }
  void fit(std::span<const LabeledCycle> train, std::span<const LabeledCycle> holdout,
           std::uint64_t seed) override;
  BinaryLabel classify(const AnalysisWindow& window) const override;
  void save(const std::filesystem::path& path) const override;
  static PcaDdDetector load(const std::filesystem::path& path);

  const PcaBasis& basis() const { return basis_; }
  const LogisticModel& logistic() const { return logistic_; }

 private:
  std::size_t n_components_;
  PcaBasis basis_;
  LogisticModel logistic_;
};

class PcaEigenDetector : public Detector {
 public:
  explicit PcaEigenDetector(std::size_t n_components = kDefaultPcaComponents,
                            PcaEigenOptions options = {})
      : n_components_(n_components), options_(options) {}
  std::string name() const override { return "pca-eigen"; }
  void fit(std::span<const LabeledCycle> train, std::span<const LabeledCycle> holdout,
           std::uint64_t seed) override;
  BinaryLabel classify(const AnalysisWindow& window) const override;
  void save(const std::filesystem::path& path) const override;
  static PcaEigenDetector load(const std::filesystem::path& path);

  const PcaBasis& basis() const { return basis_; }
  const LogisticModel& logistic() const { return logistic_; }

 private:
  std::size_t n_components_;
  PcaEigenOptions options_;
  PcaBasis basis_;
  LogisticModel logistic_;
};

struct DetectorOptions {
  CnnOptions cnn{};
  Band mapo_band{};
  std::size_t pca_components = kDefaultPcaComponents;
  PcaEigenOptions pca_eigen{};
};

/// "cnn", "mapo", "pca-dd", "pca-eigen".
const std::vector<std::string>& detector_names();
/// Throws ConfigurationError listing the valid names.
DetectorFactory detector_factory(const std::string& name, const DetectorOptions& options = {});

/// Logistic coefficients under `prefix.` keys.
void put_logistic(KeyValues& kv, const std::string& prefix, const LogisticModel& m);
LogisticModel get_logistic(const KeyValues& kv, const std::string& prefix);

}  // namespace knock
