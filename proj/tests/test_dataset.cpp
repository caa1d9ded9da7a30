#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "knock/dataset.hpp"
#include "knock/error.hpp"
#include "knock/reference.hpp"
#include "knock/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace knock;

TEST_CASE("labels from votes") {
  auto l = labels_from_votes(ExpertVotes({1, 1, 1, 1, 1}));
  CHECK(l.relative == 5);
  CHECK(l.scaled == 1.0);
  CHECK(l.binary == BinaryLabel::knocking);
  l = labels_from_votes(ExpertVotes({1, 0, 1, 0, 0}));
  CHECK(l.relative == 2);
  CHECK(l.binary == BinaryLabel::normal);
  l = labels_from_votes(ExpertVotes({0, 1, 1, 0, 1}));
  CHECK(l.relative == 3);
  CHECK(l.scaled == doctest::Approx(0.6));
  CHECK(l.binary == BinaryLabel::knocking);
  CHECK_THROWS_AS(ExpertVotes({0, 1, 2, 0, 1}), DomainError);
}

TEST_CASE("probability to class uses lower-inclusive bins") {
  CHECK(probability_to_class(0.0) == 0);
  CHECK(probability_to_class(0.0999) == 0);
  CHECK(probability_to_class(0.1) == 1);
  CHECK(probability_to_class(0.3) == 2);
  CHECK(probability_to_class(0.5) == 3);
  CHECK(probability_to_class(0.7) == 4);
  CHECK(probability_to_class(0.9) == 5);
  CHECK(probability_to_class(1.0) == 5);
  CHECK_THROWS_AS(probability_to_class(-0.01), DomainError);
  CHECK_THROWS_AS(probability_to_class(1.01), DomainError);
  int prev = 0;
  for (int i = 0; i <= 10000; ++i) {
    const int c = probability_to_class(i / 10000.0);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("labeled cycle consistency") {
  auto c = LabeledCycle::from_votes({}, ExpertVotes({1, 1, 0, 0, 0}), "A", "x");
  CHECK_NOTHROW(c.check_consistency());
  c.binary_label = BinaryLabel::knocking;
  CHECK_THROWS_AS(c.check_consistency(), DomainError);
}

TEST_CASE("split preserves per-subset knock ratios") {
  const auto data = test_util::toy_cycles(300, 0.35, {"A", "B", "C"}, 5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitSpec spec{{{"A", 0.7}, {"B", 0.5}, {"C", 0.45}}, seed};
    const auto idx = stratified_split_indices(data, spec);
    CHECK(idx.train.size() + idx.test.size() == data.size());
    for (const auto& tag : {"A", "B", "C"}) {
      std::size_t pool = 0, knock = 0, tr = 0, tr_knock = 0;
      for (const auto& c : data) {
        if (c.subset_tag != tag) continue;
        ++pool;
        knock += c.binary_label == BinaryLabel::knocking;
      }
      for (auto i : idx.train) {
        if (data[i].subset_tag != tag) continue;
        ++tr;
        tr_knock += data[i].binary_label == BinaryLabel::knocking;
      }
      const double f_subset = double(knock) / double(pool);
      const double f_train = double(tr_knock) / double(tr);
      CHECK(std::abs(f_train - f_subset) <= 1.0 / double(tr) + 1e-12);
    }
  }
}

TEST_CASE("split floors the training side and is deterministic") {
  const auto data = test_util::toy_cycles(10, 0.5, {"A"}, 1);  // 5 knock, 5 normal
  SplitSpec spec{{{"A", 0.7}}, 4};
  const auto a = stratified_split_indices(data, spec);
  const auto b = stratified_split_indices(data, spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.train.size() == 6);  // floor(3.5) per pool
  spec.seed = 5;
  CHECK(stratified_split_indices(data, spec).fingerprint() != a.fingerprint());
}

TEST_CASE("split spec parsing and validation") {
  const std::vector<std::string> tags = {"A", "B", "C"};
  const auto s = SplitSpec::parse("70/50/45", tags, 3);
  CHECK(s.train_fraction.at("A") == doctest::Approx(0.7));
  CHECK(s.train_fraction.at("C") == doctest::Approx(0.45));
  CHECK(s.seed == 3);
  CHECK_THROWS_AS(SplitSpec::parse("70/50", tags), ConfigurationError);
  CHECK_THROWS_AS(SplitSpec::parse("70/x/45", tags), ConfigurationError);
  CHECK_THROWS_AS(SplitSpec::parse("70/150/45", tags), ConfigurationError);

  const auto data = test_util::toy_cycles(20, 0.5, {"A", "D"}, 1);
  CHECK_THROWS_AS(stratified_split_indices(data, SplitSpec{{{"A", 0.7}}, 0}), ConfigurationError);
}

TEST_CASE("filter_nonknock samples normal cycles of one subset") {
  const auto data = test_util::toy_cycles(200, 0.4, {"A", "C"}, 2);
  const auto f = filter_nonknock(data, "C", 0.5, 9);
  std::size_t normal_c = 0;
  for (const auto& c : data) normal_c += c.subset_tag == "C" && c.binary_label == BinaryLabel::normal;
  CHECK(f.size() == normal_c / 2);
  for (const auto& c : f) {
    CHECK(c.subset_tag == "C");
    CHECK(c.binary_label == BinaryLabel::normal);
  }
  CHECK_THROWS_AS(filter_nonknock(data, "C", 1.5, 0), ConfigurationError);
}

TEST_CASE("cycles and labels round-trip through files") {
  test_util::TempDir dir;
  SyntheticConfig cfg;
  cfg.geometry.bore_mm = 145;
  cfg.n_cycles = 12;
  cfg.seed = 1;
  const auto data = synthesize_dataset(cfg);
  save_cycles(dir / "c.csv", dir / "l.csv", data);
  const auto back = load_cycles(dir / "c.csv", dir / "l.csv");
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].cycle_id == data[i].cycle_id);
    CHECK(back[i].votes == data[i].votes);
    CHECK(back[i].relative_label == data[i].relative_label);
    REQUIRE(back[i].window.size() == 600);
    for (std::size_t j = 0; j < 600; ++j)
      CHECK(std::abs(back[i].window.samples[j] - data[i].window.samples[j]) <= 1e-9);
  }
}

TEST_CASE("label rows parse to relative labels") {
  test_util::TempDir dir;
  test_util::write_text(dir / "l.csv", "c1,1,1,1,1,1\nc2,0,0,1,0,0\n");
  const auto l = read_labels_csv(dir / "l.csv");
  CHECK(labels_from_votes(l.at("c1")).relative == 5);
  CHECK(labels_from_votes(l.at("c2")).relative == 1);
}

TEST_CASE("malformed files name the row") {
  test_util::TempDir dir;
  test_util::write_text(dir / "l.csv", "c1,1,1,1,1,1\nc2,0,0,1,0\n");
  try {
    read_labels_csv(dir / "l.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
  }

  std::string row = "c1,A";
  for (int i = 0; i < 7199; ++i) row += ",1.0";
  test_util::write_text(dir / "c.csv", row + "\n");
  try {
    read_cycles_csv(dir / "c.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 1);
    CHECK(std::string(e.what()).find("7199") != std::string::npos);
  }

  test_util::write_text(dir / "v.csv", "c1,1,1,2,1,1\n");
  CHECK_THROWS_AS(read_labels_csv(dir / "v.csv"), ParseError);
  CHECK_THROWS_AS(load_cycles(dir / "c.csv", dir / "missing.csv"), ParseError);
}

TEST_CASE("angle,pressure layout") {
  test_util::TempDir dir;
  std::string text = "angle,pressure\n";
  for (std::size_t i = 0; i < kFullCycleSamples; ++i)
    text += std::to_string(-360.0 + 0.1 * double(i)) + "," + std::to_string(1.0 + double(i) * 0.01) + "\n";
  test_util::write_text(dir / "ap.csv", text);
  const auto c = read_angle_pressure_csv(dir / "ap.csv");
  CHECK(c.samples.size() == kFullCycleSamples);
  CHECK(c.start_angle == doctest::Approx(-360.0));
  CHECK(c.resolution == doctest::Approx(0.1));
  CHECK(extract_window(c).samples[0] == doctest::Approx(1.0 + 3600 * 0.01));
}

// ---------------------------------------------------------------------------
// Synthetic generator

TEST_CASE("synthetic: all mass on class 0 gives quiet normal cycles") {
  SyntheticConfig cfg;
  cfg.geometry.bore_mm = 145;
  cfg.n_cycles = 50;
  cfg.class_weights = {1, 0, 0, 0, 0, 0};
  const auto d = synthesize(cfg);
  for (std::size_t i = 0; i < d.labeled.size(); ++i) {
    CHECK(d.labeled[i].binary_label == BinaryLabel::normal);
    CHECK(d.truth[i].intensity == 0.0);
    // Band-passed amplitude stays at the noise floor.
    CHECK(mapo(d.labeled[i].window) < 6 * cfg.noise_level);
  }
}

TEST_CASE("synthetic: deterministic and label-consistent") {
  SyntheticConfig cfg;
  cfg.geometry.bore_mm = 190;
  cfg.n_cycles = 40;
  cfg.seed = 8;
  const auto a = synthesize(cfg), b = synthesize(cfg);
  for (std::size_t i = 0; i < a.labeled.size(); ++i) {
    CHECK(a.cycles[i].samples == b.cycles[i].samples);
    CHECK(a.labeled[i].votes == b.labeled[i].votes);
    CHECK_NOTHROW(a.labeled[i].check_consistency());
    CHECK_NOTHROW(a.cycles[i].validate());
    CHECK(a.cycles[i].is_full_cycle());
  }
}

TEST_CASE("synthetic: class frequencies converge to the weights") {
  SyntheticConfig cfg;
  cfg.geometry.bore_mm = 145;
  cfg.n_cycles = 2000;
  cfg.seed = 4;
  const auto d = synthesize(cfg);
  double wsum = 0;
  for (double w : cfg.class_weights) wsum += w;
  std::array<double, 6> count{};
  for (const auto& t : d.truth) count[std::size_t(t.target_class)] += 1;
  const double n = double(cfg.n_cycles);
  for (std::size_t c = 0; c < 6; ++c) {
    const double p = cfg.class_weights[c] / wsum;
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(count[c] / n - p) <= 3 * se);
  }
}

TEST_CASE("synthetic: severe knock has larger band-passed MAPO than none") {
  SyntheticConfig cfg;
  cfg.geometry.bore_mm = 145;
  cfg.n_cycles = 2000;
  cfg.seed = 6;
  cfg.class_weights = {1, 0, 0, 0, 0, 1};
  const auto d = synthesize(cfg);
  double m0 = 0, m5 = 0;
  std::size_t n0 = 0, n5 = 0;
  for (std::size_t i = 0; i < d.labeled.size(); ++i) {
    const double m = mapo(d.labeled[i].window);
    if (d.truth[i].target_class == 0) { m0 += m; ++n0; }
    else { m5 += m; ++n5; }
  }
  REQUIRE(n0 > 0);
  REQUIRE(n5 > 0);
  CHECK(m5 / double(n5) > m0 / double(n0));
}

TEST_CASE("synthetic: knock spectrum peaks at the first circumferential mode") {
  SyntheticConfig cfg;
  cfg.geometry.bore_mm = 145;
  cfg.n_cycles = 400;
  cfg.seed = 2;
  cfg.class_weights = {1, 0, 0, 0, 0, 1};
  const auto d = synthesize(cfg);
  std::vector<double> mean_normal(600, 0.0);
  std::size_t nn = 0;
  for (const auto& c : d.labeled) {
    if (c.relative_label != 0) continue;
    for (std::size_t j = 0; j < 600; ++j) mean_normal[j] += c.window.samples[j];
    ++nn;
  }
  for (auto& v : mean_normal) v /= double(nn);
  const std::size_t n = 1024;
  std::vector<double> power(n / 2 + 1, 0.0);
  for (std::size_t i = 0; i < d.labeled.size(); ++i) {
    if (d.truth[i].target_class != 5) continue;
    std::vector<double> diff(600);
    for (std::size_t j = 0; j < 600; ++j) diff[j] = d.labeled[i].window.samples[j] - mean_normal[j];
    const auto X = oracle::dft(diff, n);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] += std::norm(X[k]);
  }
  const double fs = kDefaultSampleRate;
  std::size_t best = 0;
  for (std::size_t k = 1; k < power.size(); ++k) {
    if (double(k) * fs / double(n) <= 1000.0) continue;  // skip the slow baseline spread
    if (best == 0 || power[k] > power[best]) best = k;
  }
  const double peak = double(best) * fs / double(n);
  const double f1 = acoustic_mode_frequencies(cfg.geometry)[0].frequency_khz * 1000.0;
  CHECK(std::abs(peak - f1) <= 0.1 * f1);
}

TEST_CASE("synthetic: configuration errors") {
  SyntheticConfig cfg;
  CHECK_THROWS_AS(synthesize(cfg), InvalidGeometry);  // bore unset
  cfg.geometry.bore_mm = 145;
  cfg.class_weights = {0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(synthesize(cfg), ConfigurationError);
  cfg.class_weights = {1, 1, 1, 1, 1, 1};
  cfg.n_cycles = 0;
  CHECK_THROWS_AS(synthesize(cfg), ConfigurationError);
  cfg.n_cycles = 10;
  cfg.geometry.bore_mm = 20;  // modes above Nyquist
  CHECK_THROWS_AS(synthesize(cfg), OutOfBand);
}

TEST_CASE("three-engine study shape") {
  const auto cfgs = three_engine_study(0);
  REQUIRE(cfgs.size() == 3);
  CHECK(cfgs[0].geometry.bore_mm == 145);
  CHECK(cfgs[1].geometry.bore_mm == 145);
  CHECK(cfgs[2].geometry.bore_mm == 190);
  std::size_t total = 0;
  for (const auto& c : cfgs) total += c.n_cycles;
  CHECK(total == 2880);
}
