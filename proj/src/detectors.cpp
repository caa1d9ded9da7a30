#include "knock/detectors.hpp"

#include "knock/error.hpp"

namespace knock {

std::vector<BinaryLabel> Detector::classify_all(std::span<const LabeledCycle> cycles) const {
  std::vector<BinaryLabel> out;
  out.reserve(cycles.size());
  for (const auto& c : cycles) out.push_back(classify(c.window));
  return out;
}

void put_logistic(KeyValues& kv, const std::string& prefix, const LogisticModel& m) {
  kv[prefix + ".n_features"] = std::to_string(m.weights.size());
  kv[prefix + ".intercept"] = format_double(m.intercept);
  for (std::size_t j = 0; j < m.weights.size(); ++j) {
    kv[prefix + ".weight." + std::to_string(j)] = format_double(m.weights[j]);
    if (j < m.feature_names.size())
      kv[prefix + ".feature." + std::to_string(j)] = m.feature_names[j];
  }
}

LogisticModel get_logistic(const KeyValues& kv, const std::string& prefix) {
  LogisticModel m;
  const auto key = prefix + ".n_features";
  if (!kv.count(key)) throw LoadError("missing key '" + key + "'");
  const auto n = kv_uint(kv, key, 0);
  m.intercept = kv_double(kv, prefix + ".intercept", 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto wk = prefix + ".weight." + std::to_string(j);
    if (!kv.count(wk)) throw LoadError("missing key '" + wk + "'");
    m.weights.push_back(kv_double(kv, wk, 0.0));
    m.feature_names.push_back(kv_string(kv, prefix + ".feature." + std::to_string(j), ""));
  }
  m.converged = true;
  return m;
}

namespace {

KeyValues load_kv_of(const std::filesystem::path& path, const std::string& expected) {
  auto kv = read_key_values(path);
  const auto d = kv_string(kv, "detector", "");
  if (d != expected)
    throw LoadError(path.string() + ": holds detector '" + d + "', expected '" + expected + "'");
  return kv;
}

std::filesystem::path basis_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".basis";
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// CNN

void CnnDetector::fit(std::span<const LabeledCycle> train_set,
                      std::span<const LabeledCycle> holdout, std::uint64_t seed) {
  if (train_set.empty()) throw ConfigurationError("cnn: empty training set");
  TrainConfig cfg = options_.train;
  cfg.seed = options_.train.seed + seed;
  net_ = KnockNet(Topology::make(options_.base_kernel, train_set.front().window.size(),
                                 options_.mode));
  initialize_live(net_, train_set, cfg.seed ^ 0x9e3779b97f4a7c15ull, options_.init);
  initial_ = net_;
  report_ = train(net_, train_set, holdout.empty() ? train_set : holdout, cfg);
}

BinaryLabel CnnDetector::classify(const AnalysisWindow& window) const {
  return forward(net_, window) >= 0.5 ? BinaryLabel::knocking : BinaryLabel::normal;
}

std::vector<BinaryLabel> CnnDetector::classify_all(std::span<const LabeledCycle> cycles) const {
  const auto p = predict(net_, cycles);
  std::vector<BinaryLabel> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = p[i] >= 0.5 ? BinaryLabel::knocking : BinaryLabel::normal;
  return out;
}

std::optional<std::vector<int>> CnnDetector::relative_classes(
    std::span<const LabeledCycle> cycles) const {
  const auto p = predict(net_, cycles);
  std::vector<int> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = probability_to_class(p[i]);
  return out;
}

void CnnDetector::save(const std::filesystem::path& path) const { save_model(net_, path); }

// ---------------------------------------------------------------------------
// MAPO

void MapoDetector::fit(std::span<const LabeledCycle> train_set, std::span<const LabeledCycle>,
                       std::uint64_t) {
  model_ = fit_mapo_model(train_set, band_);
}

BinaryLabel MapoDetector::classify(const AnalysisWindow& window) const {
  return mapo_classify(mapo(window, band_), model_.threshold);
}

void MapoDetector::save(const std::filesystem::path& path) const {
  KeyValues kv{{"detector", "mapo"},
               {"threshold", format_double(model_.threshold)},
               {"band.low_hz", format_double(band_.low_hz)},
               {"band.high_hz", format_double(band_.high_hz)}};
  put_logistic(kv, "logistic", model_.logistic);
  write_key_values(path, kv);
}

MapoDetector MapoDetector::load(const std::filesystem::path& path) {
  const auto kv = load_kv_of(path, "mapo");
  Band band{kv_double(kv, "band.low_hz", Band{}.low_hz), kv_double(kv, "band.high_hz", Band{}.high_hz)};
  MapoDetector d(band);
  d.model_.band = band;
  if (!kv.count("threshold")) throw LoadError(path.string() + ": missing 'threshold'");
  d.model_.threshold = kv_double(kv, "threshold", 0.0);
  d.model_.logistic = get_logistic(kv, "logistic");
  return d;
}

// ---------------------------------------------------------------------------
// PCA DD

void PcaDdDetector::fit(std::span<const LabeledCycle> train_set, std::span<const LabeledCycle>,
                        std::uint64_t) {
  basis_ = pca_fit(train_set, n_components_);
  std::vector<std::vector<double>> x;
  std::vector<BinaryLabel> y;
  x.reserve(train_set.size());
  for (const auto& c : train_set) {
    x.push_back(pca_dd_features(c.window.samples, basis_));
    y.push_back(c.binary_label);
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_components_; ++i) names.push_back("pc" + std::to_string(i + 1));
  logistic_ = logreg_fit(x, y, {}, names);
}

BinaryLabel PcaDdDetector::classify(const AnalysisWindow& window) const {
  return logreg_predict(logistic_, pca_dd_features(window.samples, basis_)) >= 0.5
             ? BinaryLabel::knocking
             : BinaryLabel::normal;
}

void PcaDdDetector::save(const std::filesystem::path& path) const {
  KeyValues kv{{"detector", "pca-dd"}, {"n_components", std::to_string(n_components_)}};
  put_logistic(kv, "logistic", logistic_);
  save_pca_basis(basis_, basis_path(path));
  write_key_values(path, kv);
}

PcaDdDetector PcaDdDetector::load(const std::filesystem::path& path) {
  const auto kv = load_kv_of(path, "pca-dd");
  PcaDdDetector d(kv_uint(kv, "n_components", kDefaultPcaComponents));
  d.logistic_ = get_logistic(kv, "logistic");
  d.basis_ = load_pca_basis(basis_path(path));
  return d;
}

// ---------------------------------------------------------------------------
// PCA Eigen

void PcaEigenDetector::fit(std::span<const LabeledCycle> train_set, std::span<const LabeledCycle>,
                           std::uint64_t) {
  basis_ = pca_fit(train_set, n_components_);
  std::vector<std::vector<double>> x;
  std::vector<BinaryLabel> y;
  x.reserve(train_set.size());
  for (const auto& c : train_set) {
    const auto f = pca_eigen_features(c.window.samples, basis_, options_);
    x.push_back({f[0], f[1]});
    y.push_back(c.binary_label);
  }
  logistic_ = logreg_fit(x, y, {}, {"rmse", "residual_mapo"});
}

BinaryLabel PcaEigenDetector::classify(const AnalysisWindow& window) const {
  const auto f = pca_eigen_features(window.samples, basis_, options_);
  const double x[2] = {f[0], f[1]};
  return logreg_predict(logistic_, x) >= 0.5 ? BinaryLabel::knocking : BinaryLabel::normal;
}

void PcaEigenDetector::save(const std::filesystem::path& path) const {
  KeyValues kv{{"detector", "pca-eigen"}, {"n_components", std::to_string(n_components_)}};
  if (options_.residual_band) {
    kv["residual_band.low_hz"] = format_double(options_.residual_band->low_hz);
    kv["residual_band.high_hz"] = format_double(options_.residual_band->high_hz);
  }
  put_logistic(kv, "logistic", logistic_);
  save_pca_basis(basis_, basis_path(path));
  write_key_values(path, kv);
}

PcaEigenDetector PcaEigenDetector::load(const std::filesystem::path& path) {
  const auto kv = load_kv_of(path, "pca-eigen");
  PcaEigenOptions opt;
  if (kv.count("residual_band.low_hz"))
    opt.residual_band = Band{kv_double(kv, "residual_band.low_hz", 0.0),
                             kv_double(kv, "residual_band.high_hz", 0.0)};
  PcaEigenDetector d(kv_uint(kv, "n_components", kDefaultPcaComponents), opt);
  d.logistic_ = get_logistic(kv, "logistic");
  d.basis_ = load_pca_basis(basis_path(path));
  return d;
}

// ---------------------------------------------------------------------------
// Registry

const std::vector<std::string>& detector_names() {
  static const std::vector<std::string> names = {"cnn", "mapo", "pca-dd", "pca-eigen"};
  return names;
}

DetectorFactory detector_factory(const std::string& name, const DetectorOptions& o) {
  if (name == "cnn") return [o] { return std::make_unique<CnnDetector>(o.cnn); };
  if (name == "mapo") return [o] { return std::make_unique<MapoDetector>(o.mapo_band); };
  if (name == "pca-dd") return [o] { return std::make_unique<PcaDdDetector>(o.pca_components); };
  if (name == "pca-eigen")
    return [o] { return std::make_unique<PcaEigenDetector>(o.pca_components, o.pca_eigen); };
  std::string valid;
  for (const auto& n : detector_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigurationError("unknown detector '" + name + "' (valid: " + valid + ")");
}

}  // namespace knock
