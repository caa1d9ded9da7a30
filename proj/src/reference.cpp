#include "knock/reference.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "knock/container.hpp"
#include "knock/error.hpp"

namespace knock {

double mapo(const AnalysisWindow& window, const Band& band, double sample_rate_hz) {
  const BandPassFilter filter(band, sample_rate_hz);
  const auto y = filter.filtfilt(window.samples);
  double m = 0.0;
  for (double v : y) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// Logistic regression

double LogisticModel::logit(std::span<const double> x) const {
  if (x.size() != weights.size())
    throw ShapeError("logistic model has " + std::to_string(weights.size()) +
                     " features, got " + std::to_string(x.size()));
  double z = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
  return z;
}

double logreg_predict(const LogisticModel& model, std::span<const double> x) {
  const double z = model.logit(x);
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

namespace {

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

LogisticModel logreg_fit(std::span<const std::vector<double>> features,
                         std::span<const BinaryLabel> labels, const LogisticConfig& config,
                         std::vector<std::string> feature_names) {
  const std::size_t n = features.size();
  if (n == 0 || n != labels.size())
    throw ShapeError("logistic fit needs one label per feature row");
  const std::size_t d = features[0].size();
  if (d == 0) throw ShapeError("logistic fit needs at least one feature");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw ShapeError("ragged feature rows");
    for (double v : features[i])
      if (!std::isfinite(v)) throw DomainError("non-finite feature value in row " + std::to_string(i));
    positives += labels[i] == BinaryLabel::knocking;
  }
  if (positives == 0 || positives == n)
    throw DegenerateFit("logistic fit needs both classes in the training set");

  std::vector<double> mu(d, 0.0), sigma(d, 0.0);
  for (const auto& row : features)
    for (std::size_t j = 0; j < d; ++j) mu[j] += row[j];
  for (auto& m : mu) m /= static_cast<double>(n);
  for (const auto& row : features)
    for (std::size_t j = 0; j < d; ++j) sigma[j] += (row[j] - mu[j]) * (row[j] - mu[j]);
  for (auto& s : sigma) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 0.0)) s = 1.0;
  }
  std::vector<double> z(n * d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z[i * d + j] = (features[i][j] - mu[j]) / sigma[j];
    y[i] = labels[i] == BinaryLabel::knocking ? 1.0 : 0.0;
  }

  const double lambda = config.l2_penalty;
  // theta[0] is the intercept.
  auto gradient = [&](const std::vector<double>& theta, std::vector<double>& g) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* zi = &z[i * d];
      double s = theta[0];
      for (std::size_t j = 0; j < d; ++j) s += theta[j + 1] * zi[j];
      const double r = y[i] - sigmoid(s);
      g[0] += r;
      for (std::size_t j = 0; j < d; ++j) g[j + 1] += r * zi[j];
    }
    double norm2 = 0.0;
    for (std::size_t j = 0; j <= d; ++j) {
      g[j] /= static_cast<double>(n);
      if (j > 0) g[j] -= lambda * theta[j];
      norm2 += g[j] * g[j];
    }
    return std::sqrt(norm2);
  };

  // Step 1/L with L bounding the Hessian of the standardised objective.
  const double step = 1.0 / (0.25 * static_cast<double>(d + 1) + lambda);
  std::vector<double> theta(d + 1, 0.0), prev = theta, look(d + 1), g(d + 1), g_new(d + 1);
  LogisticModel model;
  double gnorm = gradient(theta, g);
  std::size_t momentum_k = 0;
  std::size_t it = 0;
  while (gnorm > config.gradient_tolerance && it < config.max_iterations) {
    ++it;
    const double beta = static_cast<double>(momentum_k) / static_cast<double>(momentum_k + 3);
    for (std::size_t j = 0; j <= d; ++j) look[j] = theta[j] + beta * (theta[j] - prev[j]);
    gradient(look, g_new);
    prev = theta;
    for (std::size_t j = 0; j <= d; ++j) theta[j] = look[j] + step * g_new[j];
    gnorm = gradient(theta, g);
    // Restart the momentum when the step points against the ascent direction.
    double dir = 0.0;
    for (std::size_t j = 0; j <= d; ++j) dir += g[j] * (theta[j] - prev[j]);
    momentum_k = dir < 0.0 ? 0 : momentum_k + 1;
  }
  model.iterations = it;
  model.converged = gnorm <= config.gradient_tolerance;

  model.weights.resize(d);
  model.intercept = theta[0];
  for (std::size_t j = 0; j < d; ++j) {
    model.weights[j] = theta[j + 1] / sigma[j];
    model.intercept -= theta[j + 1] * mu[j] / sigma[j];
  }
  if (feature_names.empty())
    for (std::size_t j = 0; j < d; ++j) feature_names.push_back("x" + std::to_string(j));
  model.feature_names = std::move(feature_names);
  return model;
}

// ---------------------------------------------------------------------------
// MAPO threshold

MapoModel fit_mapo_model(std::span<const double> values, std::span<const BinaryLabel> labels,
                         const Band& band, const LogisticConfig& config) {
  std::vector<std::vector<double>> rows;
  rows.reserve(values.size());
  for (double v : values) rows.push_back({v});
  MapoModel m;
  m.band = band;
  m.logistic = logreg_fit(rows, labels, config, {"mapo"});
  const double w = m.logistic.weights[0];
  if (!(w > 0.0))
    throw DegenerateFit("MAPO does not increase with knock on this training set (weight " +
                        std::to_string(w) + ")");
  m.threshold = -m.logistic.intercept / w;
  return m;
}

MapoModel fit_mapo_model(std::span<const LabeledCycle> train, const Band& band,
                         const LogisticConfig& config) {
  std::vector<double> values(train.size());
  std::vector<BinaryLabel> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    values[i] = mapo(train[i].window, band);
    labels[i] = train[i].binary_label;
  }
  return fit_mapo_model(values, labels, band, config);
}

// ---------------------------------------------------------------------------
// PCA

PcaBasis pca_fit(std::span<const std::vector<double>> rows, std::size_t n_components) {
  const std::size_t n = rows.size();
  if (n_components == 0) throw ConfigurationError("n_components must be >= 1");
  if (n < 2) throw RankError("PCA needs at least two windows");
  const std::size_t dim = rows[0].size();
  if (n_components > dim)
    throw RankError("n_components " + std::to_string(n_components) + " exceeds dimension " +
                    std::to_string(dim));

  Eigen::MatrixXd x(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != dim) throw ShapeError("PCA input windows differ in length");
    for (std::size_t j = 0; j < dim; ++j) x(i, j) = rows[i][j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / static_cast<double>(n - 1));
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw RankError("covariance eigen-decomposition failed");
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vectors = solver.eigenvectors();
  const double top = std::max(values(dim - 1), 0.0);
  std::size_t rank = 0;
  for (std::size_t i = 0; i < dim; ++i)
    if (values(i) > 1e-12 * top && values(i) > 0.0) ++rank;
  if (rank < n_components)
    throw RankError("data span only " + std::to_string(rank) + " directions, " +
                    std::to_string(n_components) + " components requested");

  PcaBasis basis;
  basis.mean.assign(mean.data(), mean.data() + dim);
  for (std::size_t c = 0; c < n_components; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(dim - 1 - c);
    std::vector<double> v(vectors.col(col).data(), vectors.col(col).data() + dim);
    for (double coef : v) {
      if (std::abs(coef) > 1e-9) {
        if (coef < 0.0)
          for (double& e : v) e = -e;
        break;
      }
    }
    basis.components.push_back(std::move(v));
    basis.explained_variance.push_back(values(col));
  }
  return basis;
}

PcaBasis pca_fit(std::span<const LabeledCycle> cycles, std::size_t n_components) {
  std::vector<std::vector<double>> rows;
  rows.reserve(cycles.size());
  for (const auto& c : cycles) rows.push_back(c.window.samples);
  return pca_fit(rows, n_components);
}

namespace {

void check_dim(std::span<const double> window, const PcaBasis& basis) {
  if (window.size() != basis.dim())
    throw ShapeError("window length " + std::to_string(window.size()) +
                     " does not match PCA dimension " + std::to_string(basis.dim()));
}

}  // namespace

std::vector<double> pca_dd_features(std::span<const double> window, const PcaBasis& basis) {
  check_dim(window, basis);
  std::vector<double> f(basis.n_components(), 0.0);
  for (std::size_t c = 0; c < f.size(); ++c) {
    const auto& v = basis.components[c];
    double s = 0.0;
    for (std::size_t j = 0; j < window.size(); ++j) s += (window[j] - basis.mean[j]) * v[j];
    f[c] = s;
  }
  return f;
}

std::vector<double> pca_reconstruct(std::span<const double> window, const PcaBasis& basis) {
  const auto f = pca_dd_features(window, basis);
  std::vector<double> r = basis.mean;
  for (std::size_t c = 0; c < f.size(); ++c)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += f[c] * basis.components[c][j];
  return r;
}

std::array<double, 2> pca_eigen_features(std::span<const double> window, const PcaBasis& basis,
                                         const PcaEigenOptions& options) {
  const auto rec = pca_reconstruct(window, basis);
  std::vector<double> residual(window.size());
  double ss = 0.0;
  for (std::size_t j = 0; j < window.size(); ++j) {
    residual[j] = window[j] - rec[j];
    ss += residual[j] * residual[j];
  }
  const double rmse = std::sqrt(ss / static_cast<double>(window.size()));
  if (options.residual_band) {
    const BandPassFilter filter(*options.residual_band, options.sample_rate_hz);
    residual = filter.filtfilt(residual);
  }
  double peak = 0.0;
  for (double v : residual) peak = std::max(peak, std::abs(v));
  return {rmse, peak};
}

void save_pca_basis(const PcaBasis& basis, const std::filesystem::path& path) {
  Container c;
  c.kind = ContainerKind::pca_basis;
  c.header = {static_cast<std::uint32_t>(basis.dim()),
              static_cast<std::uint32_t>(basis.n_components())};
  c.payload = basis.mean;
  for (const auto& v : basis.components) c.payload.insert(c.payload.end(), v.begin(), v.end());
  c.payload.insert(c.payload.end(), basis.explained_variance.begin(),
                   basis.explained_variance.end());
  write_container(path, c);
}

PcaBasis load_pca_basis(const std::filesystem::path& path) {
  const auto c = read_container(path, ContainerKind::pca_basis);
  if (c.header.size() != 2) throw LoadError(path.string() + ": malformed PCA header");
  const std::size_t dim = c.header[0], k = c.header[1];
  if (c.payload.size() != dim + k * dim + k)
    throw LoadError(path.string() + ": PCA payload size does not match header");
  PcaBasis b;
  auto it = c.payload.begin();
  b.mean.assign(it, it + static_cast<std::ptrdiff_t>(dim));
  it += static_cast<std::ptrdiff_t>(dim);
  for (std::size_t i = 0; i < k; ++i) {
    b.components.emplace_back(it, it + static_cast<std::ptrdiff_t>(dim));
    it += static_cast<std::ptrdiff_t>(dim);
  }
  b.explained_variance.assign(it, c.payload.end());
  return b;
}

}  // namespace knock
