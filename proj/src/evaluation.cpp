#include "knock/evaluation.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace knock {

double binary_accuracy(std::span<const BinaryLabel> predicted, std::span<const BinaryLabel> truth) {
  if (predicted.empty()) throw DomainError("binary accuracy of an empty set");
  if (predicted.size() != truth.size())
    throw DomainError("binary accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                      std::to_string(truth.size()) + " labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Confusion matrix

void ConfusionMatrix6::add(int true_class, int predicted_class) {
  if (true_class < 0 || true_class > 5 || predicted_class < 0 || predicted_class > 5)
    throw DomainError("class outside 0..5 (true " + std::to_string(true_class) + ", predicted " +
                      std::to_string(predicted_class) + ")");
  ++counts[true_class][predicted_class];
}

std::size_t ConfusionMatrix6::total() const {
  std::size_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

std::array<std::size_t, 6> ConfusionMatrix6::column_sums() const {
  std::array<std::size_t, 6> s{};
  for (const auto& row : counts)
    for (std::size_t j = 0; j < 6; ++j) s[j] += row[j];
  return s;
}

std::array<std::array<double, 6>, 6> ConfusionMatrix6::row_normalized() const {
  std::array<std::array<double, 6>, 6> out{};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto n = std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0});
    if (n == 0) continue;
    for (std::size_t j = 0; j < 6; ++j)
      out[i][j] = static_cast<double>(counts[i][j]) / static_cast<double>(n);
  }
  return out;
}

double ConfusionMatrix6::binary_accuracy() const {
  const auto n = total();
  if (n == 0) throw DomainError("binary accuracy of an empty confusion matrix");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) correct += (i >= 3) == (j >= 3) ? counts[i][j] : 0;
  return static_cast<double>(correct) / static_cast<double>(n);
}

ConfusionMatrix6 confusion_matrix(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DomainError("confusion matrix: length mismatch");
  ConfusionMatrix6 cm;
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

DiagonalMetrics diagonal_metrics(const ConfusionMatrix6& cm) {
  const auto n = cm.total();
  if (n == 0) throw DomainError("diagonal metrics of an empty confusion matrix");
  std::size_t main = 0, secondary = 0, excluded = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const auto c = cm.counts[i][j];
      if (i == j) main += c;
      else if (i + 1 == j || j + 1 == i) {
        secondary += c;
        if ((i == 2 && j == 3) || (i == 3 && j == 2)) excluded += c;
      }
    }
  }
  const double dn = static_cast<double>(n);
  return {static_cast<double>(main) / dn, static_cast<double>(main + secondary) / dn,
          static_cast<double>(main + secondary - excluded) / dn};
}

Stats compute_stats(std::span<const double> values) {
  if (values.empty()) throw DomainError("statistics of an empty sequence");
  Stats s;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.min = v.front();
  s.max = v.back();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  double sum = 0.0;
  for (double x : values) sum += x;
  s.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double x : values) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

void CVReport::recompute() {
  std::vector<double> tr, te;
  for (const auto& s : splits) {
    tr.push_back(s.train_accuracy);
    te.push_back(s.test_accuracy);
  }
  train = compute_stats(tr);
  test = compute_stats(te);
}

// ---------------------------------------------------------------------------
// Repeated validation

namespace {

std::vector<BinaryLabel> truth_of(std::span<const LabeledCycle> cycles) {
  std::vector<BinaryLabel> y;
  y.reserve(cycles.size());
  for (const auto& c : cycles) y.push_back(c.binary_label);
  return y;
}

SplitResult score_split(const NamedFactory& f, std::size_t repeat, std::uint64_t seed,
                        const SplitIndices& idx, const TrainTestSets& sets,
                        const SplitObserver& observer) {
  SplitResult r;
  r.repeat = repeat;
  r.seed = seed;
  r.fingerprint = idx.fingerprint();
  try {
    auto det = f.make();
    det->fit(sets.train, sets.test, seed);
    r.train_accuracy = binary_accuracy(det->classify_all(sets.train), truth_of(sets.train));
    r.test_accuracy = binary_accuracy(det->classify_all(sets.test), truth_of(sets.test));
    if (auto cls = det->relative_classes(sets.test)) {
      std::vector<int> truth;
      for (const auto& c : sets.test) truth.push_back(c.relative_label);
      r.test_confusion = confusion_matrix(*cls, truth);
    }
    if (observer) observer(f.name, repeat, *det, sets);
  } catch (const EvaluationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError(f.name + ": " + e.what(), repeat);
  }
  return r;
}

}  // namespace

std::vector<CVReport> compare_detectors(std::span<const LabeledCycle> dataset,
                                        const SplitSpec& spec,
                                        std::span<const NamedFactory> detectors,
                                        std::size_t n_repeats, const SplitObserver& observer) {
  if (detectors.empty()) throw ConfigurationError("no detectors to compare");
  if (n_repeats == 0) throw ConfigurationError("n_repeats must be >= 1");
  std::vector<CVReport> reports(detectors.size());
  for (std::size_t d = 0; d < detectors.size(); ++d) reports[d].detector = detectors[d].name;
  for (std::size_t r = 0; r < n_repeats; ++r) {
    SplitSpec s = spec;
    s.seed = spec.seed + r;
    const auto idx = stratified_split_indices(dataset, s);
    if (idx.train.empty() || idx.test.empty())
      throw EvaluationError("split leaves the train or test side empty", r);
    const TrainTestSets sets{select(dataset, idx.train), select(dataset, idx.test)};
    for (std::size_t d = 0; d < detectors.size(); ++d)
      reports[d].splits.push_back(score_split(detectors[d], r, s.seed, idx, sets, observer));
  }
  for (auto& rep : reports) rep.recompute();
  return reports;
}

CVReport cross_validate(const NamedFactory& detector, std::span<const LabeledCycle> dataset,
                        const SplitSpec& spec, std::size_t n_repeats, const SplitObserver& observer) {
  return compare_detectors(dataset, spec, std::span(&detector, 1), n_repeats, observer).front();
}

// ---------------------------------------------------------------------------
// Cross-engine protocols

FitScore fit_and_score(const DetectorFactory& make, std::span<const LabeledCycle> train,
                       std::span<const LabeledCycle> holdout, std::span<const LabeledCycle> test,
                       std::uint64_t seed) {
  if (train.empty()) throw ConfigurationError("scenario has an empty training set");
  if (test.empty()) throw ConfigurationError("scenario has an empty test set");
  auto det = make();
  det->fit(train, holdout.empty() ? test : holdout, seed);
  FitScore s;
  s.n_train = train.size();
  s.n_test = test.size();
  s.train_accuracy = binary_accuracy(det->classify_all(train), truth_of(train));
  s.test_accuracy = binary_accuracy(det->classify_all(test), truth_of(test));
  return s;
}

std::vector<Scenario> leave_out_scenarios(const std::string& a, const std::string& b,
                                          const std::string& c) {
  return {{"1", {a}, {b, c}},    {"2", {b}, {a, c}},    {"3", {c}, {a, b}},
          {"4", {a, b}, {c}},    {"5", {a, c}, {b}},    {"6", {b, c}, {a}}};
}

namespace {

std::string join_tags(const std::set<std::string>& tags) {
  std::string s;
  for (const auto& t : tags) s += t;
  return s;
}

CycleSet with_tags(std::span<const LabeledCycle> dataset, const std::set<std::string>& tags) {
  CycleSet out;
  for (const auto& c : dataset)
    if (tags.count(c.subset_tag)) out.push_back(c);
  return out;
}

}  // namespace

std::vector<ScenarioResult> generalization_matrix(std::span<const LabeledCycle> dataset,
                                                  std::span<const Scenario> scenarios,
                                                  std::span<const NamedFactory> detectors,
                                                  std::uint64_t seed) {
  const auto tags = subset_tags(dataset);
  const std::set<std::string> known(tags.begin(), tags.end());
  std::vector<ScenarioResult> out;
  for (const auto& sc : scenarios) {
    if (sc.train_tags.empty()) throw ConfigurationError("scenario " + sc.name + ": no training tags");
    if (sc.test_tags.empty()) throw ConfigurationError("scenario " + sc.name + ": no test tags");
    for (const auto* side : {&sc.train_tags, &sc.test_tags})
      for (const auto& t : *side)
        if (!known.count(t))
          throw ConfigurationError("scenario " + sc.name + ": unknown subset tag '" + t + "'");
    const auto train = with_tags(dataset, sc.train_tags);
    const auto test = with_tags(dataset, sc.test_tags);
    for (const auto& d : detectors) {
      ScenarioResult r;
      r.scenario = sc.name.empty() ? join_tags(sc.train_tags) + "|" + join_tags(sc.test_tags) : sc.name;
      r.detector = d.name;
      r.score = fit_and_score(d.make, train, test, test, seed);
      out.push_back(r);
    }
  }
  return out;
}

FractionResult fraction_run(const DetectorFactory& make, std::span<const LabeledCycle> dataset,
                            const FractionPlan& plan, std::uint64_t seed) {
  const auto tags = subset_tags(dataset);
  for (const auto& [t, f] : plan.fraction)
    if (std::find(tags.begin(), tags.end(), t) == tags.end())
      throw ConfigurationError("fraction plan names unknown subset tag '" + t + "'");
  CycleSet train, test;
  for (const auto& tag : tags) {
    const auto it = plan.fraction.find(tag);
    const double f = it == plan.fraction.end() ? 0.0 : it->second;
    CycleSet subset = with_tags(dataset, {tag});
    if (plan.nonknock_only.count(tag)) {
      const auto aug = filter_nonknock(subset, tag, f, seed);
      std::set<std::string> ids;
      for (const auto& c : aug) ids.insert(c.cycle_id);
      train.insert(train.end(), aug.begin(), aug.end());
      for (const auto& c : subset)
        if (!ids.count(c.cycle_id)) test.push_back(c);
    } else {
      SplitSpec s;
      s.train_fraction[tag] = f;
      s.seed = seed;
      auto sets = stratified_split(subset, s);
      train.insert(train.end(), sets.train.begin(), sets.train.end());
      test.insert(test.end(), sets.test.begin(), sets.test.end());
    }
  }
  if (train.empty() || test.empty()) throw ConfigurationError("fraction plan leaves a side empty");
  auto det = make();
  det->fit(train, test, seed);
  FractionResult r;
  for (const auto& c : train) ++r.train_counts[c.subset_tag];
  r.train_accuracy = binary_accuracy(det->classify_all(train), truth_of(train));
  for (const auto& tag : tags) {
    const auto part = with_tags(test, {tag});
    if (!part.empty()) r.test_accuracy[tag] = binary_accuracy(det->classify_all(part), truth_of(part));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Latency

LatencyReport latency_benchmark(const std::function<void(const AnalysisWindow&)>& classify,
                                std::span<const AnalysisWindow> windows, std::size_t n_warmup,
                                std::size_t n_measured) {
  if (n_measured < 100) throw ConfigurationError("latency benchmark needs at least 100 measured calls");
  if (windows.empty()) throw ConfigurationError("latency benchmark needs at least one window");
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < n_warmup; ++i) classify(windows[i % windows.size()]);
  std::vector<double> us(n_measured);
  for (std::size_t i = 0; i < n_measured; ++i) {
    const auto& w = windows[i % windows.size()];
    const auto t0 = clock::now();
    classify(w);
    const auto t1 = clock::now();
    us[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }
  omp_set_num_threads(threads);
  LatencyReport r;
  r.n_warmup = n_warmup;
  r.n_measured = n_measured;
  r.mean_us = std::accumulate(us.begin(), us.end(), 0.0) / static_cast<double>(n_measured);
  std::sort(us.begin(), us.end());
  r.min_us = us.front();
  r.max_us = us.back();
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n_measured)));
  r.p99_us = us[std::max<std::size_t>(rank, 1) - 1];
  return r;
}

LatencyReport latency_benchmark(const Detector& detector, std::span<const AnalysisWindow> windows,
                                std::size_t n_warmup, std::size_t n_measured) {
  volatile int sink = 0;
  return latency_benchmark(
      [&](const AnalysisWindow& w) { sink = sink + static_cast<int>(detector.classify(w)); },
      windows, n_warmup, n_measured);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_cv_table(std::span<const CVReport> reports) {
  std::string out = pad("Split", 8);
  for (const auto& r : reports) out += pad(r.detector + " train", 18) + pad(r.detector + " test", 18);
  out += "\n";
  const std::size_t n = reports.empty() ? 0 : reports.front().splits.size();
  for (std::size_t i = 0; i < n; ++i) {
    out += pad(std::to_string(i + 1), 8);
    for (const auto& r : reports)
      out += pad(fmt("%.4f", r.splits[i].train_accuracy), 18) +
             pad(fmt("%.4f", r.splits[i].test_accuracy), 18);
    out += "\n";
  }
  const std::pair<const char*, double Stats::*> rows[] = {{"Mean", &Stats::mean},
                                                          {"Median", &Stats::median},
                                                          {"Max", &Stats::max},
                                                          {"Min", &Stats::min},
                                                          {"Std", &Stats::stddev}};
  for (const auto& [label, member] : rows) {
    out += pad(label, 8);
    for (const auto& r : reports)
      out += pad(fmt("%.4f", r.train.*member), 18) + pad(fmt("%.4f", r.test.*member), 18);
    out += "\n";
  }
  return out;
}

std::string cv_csv(std::span<const CVReport> reports) {
  std::string out = "detector,row,seed,split_fingerprint,train_accuracy,test_accuracy\n";
  for (const auto& r : reports) {
    for (const auto& s : r.splits) {
      char fp[32];
      std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(s.fingerprint));
      out += r.detector + "," + std::to_string(s.repeat + 1) + "," + std::to_string(s.seed) + "," +
             fp + "," + fmt("%.17g", s.train_accuracy) + "," + fmt("%.17g", s.test_accuracy) + "\n";
    }
    const std::pair<const char*, double Stats::*> rows[] = {{"mean", &Stats::mean},
                                                            {"median", &Stats::median},
                                                            {"max", &Stats::max},
                                                            {"min", &Stats::min},
                                                            {"std", &Stats::stddev}};
    for (const auto& [label, member] : rows)
      out += r.detector + "," + label + ",,," + fmt("%.17g", r.train.*member) + "," +
             fmt("%.17g", r.test.*member) + "\n";
  }
  return out;
}

std::string format_confusion(const ConfusionMatrix6& cm) {
  std::string out = "counts (rows: true class, columns: predicted class)\n" + pad("", 6);
  for (int j = 0; j < 6; ++j) out += pad(std::to_string(j), 8);
  out += "\n";
  for (int i = 0; i < 6; ++i) {
    out += pad(std::to_string(i), 6);
    for (int j = 0; j < 6; ++j) out += pad(std::to_string(cm.counts[i][j]), 8);
    out += "\n";
  }
  const auto norm = cm.row_normalized();
  out += "row-normalised\n" + pad("", 6);
  for (int j = 0; j < 6; ++j) out += pad(std::to_string(j), 8);
  out += "\n";
  for (int i = 0; i < 6; ++i) {
    out += pad(std::to_string(i), 6);
    for (int j = 0; j < 6; ++j) out += pad(fmt("%.3f", norm[i][j]), 8);
    out += "\n";
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix6& cm) {
  std::string out = "true_class,pred_0,pred_1,pred_2,pred_3,pred_4,pred_5\n";
  for (int i = 0; i < 6; ++i) {
    out += std::to_string(i);
    for (int j = 0; j < 6; ++j) out += "," + std::to_string(cm.counts[i][j]);
    out += "\n";
  }
  return out;
}

std::string format_diagonal_metrics(
    std::span<const std::pair<std::string, DiagonalMetrics>> columns) {
  std::string out = pad("", 34);
  for (const auto& [name, m] : columns) out += pad(name, 12);
  out += "\n";
  const std::pair<const char*, double DiagonalMetrics::*> rows[] = {
      {"Main diagonal", &DiagonalMetrics::main},
      {"Main + secondary diagonal", &DiagonalMetrics::main_plus_secondary},
      {"Main + secondary (modified)", &DiagonalMetrics::main_plus_secondary_modified}};
  for (const auto& [label, member] : rows) {
    std::string l = label;
    l.resize(34, ' ');
    out += l;
    for (const auto& [name, m] : columns) out += pad(fmt("%.4f", m.*member), 12);
    out += "\n";
  }
  return out;
}

std::string format_scenarios(std::span<const ScenarioResult> results) {
  std::string out = pad("Scenario", 10) + pad("Detector", 12) + pad("Train acc.", 12) +
                    pad("Test acc.", 12) + pad("n train", 9) + pad("n test", 9) + "\n";
  for (const auto& r : results)
    out += pad(r.scenario, 10) + pad(r.detector, 12) + pad(fmt("%.4f", r.score.train_accuracy), 12) +
           pad(fmt("%.4f", r.score.test_accuracy), 12) + pad(std::to_string(r.score.n_train), 9) +
           pad(std::to_string(r.score.n_test), 9) + "\n";
  return out;
}

std::string scenarios_csv(std::span<const ScenarioResult> results) {
  std::string out = "scenario,detector,train_accuracy,test_accuracy,n_train,n_test\n";
  for (const auto& r : results)
    out += r.scenario + "," + r.detector + "," + fmt("%.17g", r.score.train_accuracy) + "," +
           fmt("%.17g", r.score.test_accuracy) + "," + std::to_string(r.score.n_train) + "," +
           std::to_string(r.score.n_test) + "\n";
  return out;
}

}  // namespace knock
