#pragma once

// Reference detectors' building blocks: band-passed peak amplitude (MAPO)
// with a logistic threshold, PCA of raw windows, and an L2-regularised
// logistic regression shared by all of them.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knock/dataset.hpp"
#include "knock/signal.hpp"

namespace knock {

/// max |band_pass(window)|.
double mapo(const AnalysisWindow& window, const Band& band = {},
            double sample_rate_hz = kDefaultSampleRate);

/// Knocking iff value > threshold (strict).
inline BinaryLabel mapo_classify(double value, double threshold) {
  return value > threshold ? BinaryLabel::knocking : BinaryLabel::normal;
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticConfig {
  double l2_penalty = 1e-4;     // on standardised coefficients
  double gradient_tolerance = 1e-6;
  std::size_t max_iterations = 5000;
};

struct LogisticModel {
  std::vector<double> weights;  // raw feature scale
  double intercept = 0.0;
  std::vector<std::string> feature_names;
  std::size_t iterations = 0;
  bool converged = false;

  double logit(std::span<const double> x) const;
};

/// Maximises (1/n) log-likelihood - (l2/2) |w~|^2 over z-scored features w~
/// by accelerated gradient ascent, then maps coefficients back to raw scale.
/// Throws DegenerateFit on a single-class set, DomainError on non-finite input.
LogisticModel logreg_fit(std::span<const std::vector<double>> features,
                         std::span<const BinaryLabel> labels, const LogisticConfig& config = {},
                         std::vector<std::string> feature_names = {});

/// sigma(w . x + b).
double logreg_predict(const LogisticModel& model, std::span<const double> x);

// ---------------------------------------------------------------------------
// MAPO threshold

struct MapoModel {
  Band band{};
  double threshold = 0.0;
  LogisticModel logistic;
};

/// One-feature logistic fit on MAPO values; threshold = -intercept / weight.
/// Throws DegenerateFit if the set has one class or MAPO does not rise with knock.
MapoModel fit_mapo_model(std::span<const double> values, std::span<const BinaryLabel> labels,
                         const Band& band = {}, const LogisticConfig& config = {});
MapoModel fit_mapo_model(std::span<const LabeledCycle> train, const Band& band = {},
                         const LogisticConfig& config = {});
inline double fit_mapo_threshold(std::span<const LabeledCycle> train, const Band& band = {}) {
  return fit_mapo_model(train, band).threshold;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaBasis {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // unit rows, descending variance
  std::vector<double> explained_variance;

  std::size_t dim() const { return mean.size(); }
  std::size_t n_components() const { return components.size(); }
};

inline constexpr std::size_t kDefaultPcaComponents = 8;

/// Eigen-decomposition of the sample covariance (n - 1 denominator). Each
/// component's first coefficient with magnitude above 1e-9 is made positive.
/// Throws RankError if fewer than n_components directions carry variance.
PcaBasis pca_fit(std::span<const std::vector<double>> rows, std::size_t n_components);
PcaBasis pca_fit(std::span<const LabeledCycle> cycles,
                 std::size_t n_components = kDefaultPcaComponents);

/// <window - mean, component_i> for every component.
std::vector<double> pca_dd_features(std::span<const double> window, const PcaBasis& basis);

/// mean + sum_i feature_i * component_i.
std::vector<double> pca_reconstruct(std::span<const double> window, const PcaBasis& basis);

struct PcaEigenOptions {
  /// Band-pass the residual before taking its peak; off by default.
  std::optional<Band> residual_band;
  double sample_rate_hz = kDefaultSampleRate;
};

/// (rmse of the residual, max |residual|).
std::array<double, 2> pca_eigen_features(std::span<const double> window, const PcaBasis& basis,
                                         const PcaEigenOptions& options = {});

/// Binary container, kind PcaBasis: header (dim, n_components), payload
/// mean, components row by row, explained variances.
void save_pca_basis(const PcaBasis& basis, const std::filesystem::path& path);
PcaBasis load_pca_basis(const std::filesystem::path& path);

}  // namespace knock
