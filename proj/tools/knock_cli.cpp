// knock_cli: synthesize data, train and evaluate detectors, inspect kernels,
// and time classification. Every run writes manifest.txt with the resolved
// options, the seed and a hash of both next to its outputs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "knock/analysis.hpp"
#include "knock/cnn.hpp"
#include "knock/config.hpp"
#include "knock/dataset.hpp"
#include "knock/detectors.hpp"
#include "knock/error.hpp"
#include "knock/evaluation.hpp"
#include "knock/synthetic.hpp"
#include "knock/train.hpp"

using namespace knock;
namespace fs = std::filesystem;

namespace {

/// A FAIL verdict (bench budget, hypothesis check): the run completed but a check did not hold.
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitError = 3;

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string cycles;
  std::string labels;
  std::uint64_t data_seed = 0;
};

void add_data_options(CLI::App& cmd, DataOptions& d) {
  cmd.add_option("--cycles", d.cycles, "Cycle file (comma-separated rows)");
  cmd.add_option("--labels", d.labels, "Labels file (cycle_id,v1..v5)");
  cmd.add_option("--data-seed", d.data_seed,
                 "Seed of the built-in three-engine synthetic study used without --cycles");
}

CycleSet load_data(const DataOptions& d, KeyValues& manifest) {
  if (d.cycles.empty() != d.labels.empty())
    throw UsageError("--cycles and --labels go together");
  if (!d.cycles.empty()) {
    manifest["data.cycles"] = d.cycles;
    manifest["data.labels"] = d.labels;
    return load_cycles(d.cycles, d.labels);
  }
  manifest["data.synthetic_study_seed"] = std::to_string(d.data_seed);
  return synthesize_study(three_engine_study(d.data_seed));
}

void write_manifest(const fs::path& dir, KeyValues kv, std::uint64_t seed) {
  kv["seed"] = std::to_string(seed);
  kv["config_hash"] = std::to_string(config_hash(kv));
  write_key_values(dir / "manifest.txt", kv);
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw ConfigurationError("cannot create output directory " + dir);
  return p;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

int resolve_kernel(const std::string& variant, int kernel) {
  if (!variant.empty() && kernel != 0) {
    if (variant.size() != 1 || variant_kernel(variant[0]) != kernel)
      throw UsageError("--variant " + variant + " and --kernel " + std::to_string(kernel) +
                       " disagree");
    return kernel;
  }
  if (!variant.empty()) {
    if (variant.size() != 1) throw UsageError("--variant is one of a, b, c, d");
    return variant_kernel(variant[0]);
  }
  return kernel != 0 ? kernel : variant_kernel('d');
}

SplitSpec parse_split(const std::string& text, std::span<const LabeledCycle> data,
                      std::uint64_t seed) {
  const auto tags = subset_tags(data);
  if (text.find('/') == std::string::npos) {
    const double pct = std::stod(text);
    return SplitSpec::uniform(data, pct / 100.0, seed);
  }
  return SplitSpec::parse(text, tags, seed);
}

struct ModelOptions {
  std::string variant;
  int kernel = 0;
  std::string mode = "shared_kernel";
  std::string init = "centered";
  TrainConfig train{};
};

void add_model_options(CLI::App& cmd, ModelOptions& m) {
  cmd.add_option("--variant", m.variant, "Model variant a|b|c|d (k = 30/23/18/11)");
  cmd.add_option("--kernel", m.kernel, "Explicit base kernel size")->check(CLI::PositiveNumber);
  cmd.add_option("--mode", m.mode, "Convolution mode: shared_kernel | cross_channel");
  cmd.add_option("--init", m.init, "Initialisation: centered | glorot");
  cmd.add_option("--epochs", m.train.max_epochs, "Maximum epochs");
  cmd.add_option("--lr", m.train.learning_rate, "Adam learning rate");
  cmd.add_option("--batch", m.train.batch_size, "Minibatch size");
  cmd.add_option("--patience", m.train.patience, "Epochs without test improvement before stopping");
  cmd.add_option("--l2", m.train.l2_penalty, "L2 penalty on weights");
}

DetectorOptions detector_options(const ModelOptions& m, KeyValues& manifest) {
  DetectorOptions o;
  o.cnn.base_kernel = resolve_kernel(m.variant, m.kernel);
  o.cnn.mode = parse_conv_mode(m.mode);
  o.cnn.init = parse_init_scheme(m.init);
  o.cnn.train = m.train;
  o.cnn.train.validate();
  manifest["cnn.base_kernel"] = std::to_string(o.cnn.base_kernel);
  manifest["cnn.mode"] = to_string(o.cnn.mode);
  manifest["cnn.init"] = to_string(o.cnn.init);
  for (const auto& [k, v] : to_key_values(o.cnn.train)) manifest["train." + k] = v;
  return o;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::optional<double> bore_mm;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string tag = "A";
  std::string config;
};

int cmd_synth(const SynthArgs& a) {
  std::vector<SyntheticConfig> configs;
  KeyValues manifest{{"command", "synth"}};
  std::uint64_t seed = a.seed;
  if (!a.config.empty()) {
    // The file is authoritative; only the cycle count may be overridden.
    configs.push_back(synthetic_config_from(read_key_values(a.config)));
    seed = configs[0].seed;
  } else if (a.bore_mm) {
    SyntheticConfig c;
    c.geometry.bore_mm = *a.bore_mm;
    c.subset_tag = a.tag;
    c.seed = a.seed;
    configs.push_back(c);
  } else {
    if (a.n) throw UsageError("--n needs --bore-mm or --config");
    configs = three_engine_study(a.seed);
  }
  if (a.n) configs[0].n_cycles = a.n;
  for (auto& c : configs) {
    c.validate();
    c.geometry.validate();
  }
  const auto dir = prepare_dir(a.out);
  CycleSet all;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (const auto& [k, v] : to_key_values(configs[i]))
      manifest["engine" + std::to_string(i) + "." + k] = v;
    auto part = synthesize_dataset(configs[i]);
    all.insert(all.end(), part.begin(), part.end());
  }
  save_cycles(dir / "cycles.csv", dir / "labels.csv", all);
  manifest["n_cycles"] = std::to_string(all.size());
  write_manifest(dir, manifest, seed);
  std::printf("wrote %zu cycles to %s\n", all.size(), (dir / "cycles.csv").c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  DataOptions data;
  ModelOptions model;
  std::string split = "70";
  std::uint64_t seed = 0;
  std::string out;
};

std::string epochs_csv(const TrainReport& r) {
  std::ostringstream out;
  out << "epoch,train_loss,train_accuracy,test_accuracy\n";
  for (const auto& e : r.epochs)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_accuracy)
        << ',' << format_double(e.test_accuracy) << '\n';
  return out.str();
}

int cmd_train(const TrainArgs& a) {
  KeyValues manifest{{"command", "train"}, {"split", a.split}};
  const auto opts = detector_options(a.model, manifest);
  const auto data = load_data(a.data, manifest);
  const auto sets = stratified_split(data, parse_split(a.split, data, a.seed));
  const auto dir = prepare_dir(a.out);

  CnnDetector det(opts.cnn);
  det.fit(sets.train, sets.test, a.seed);
  const auto& r = det.report();
  save_model(det.net(), dir / "model.knm");

  std::ostringstream txt;
  txt << "base kernel " << opts.cnn.base_kernel << ", " << to_string(opts.cnn.mode) << ", "
      << count_parameters(det.net()).total << " parameters\n"
      << "train cycles " << sets.train.size() << ", test cycles " << sets.test.size() << '\n'
      << "stopped after epoch " << r.stop_epoch << " (" << to_string(r.stop_reason) << ")\n"
      << "kept epoch " << r.best_epoch << ", test accuracy " << format_double(r.best_test_accuracy)
      << '\n';
  write_text(dir / "train_report.txt", txt.str());
  write_text(dir / "train_epochs.csv", epochs_csv(r));
  manifest["n_train"] = std::to_string(sets.train.size());
  manifest["n_test"] = std::to_string(sets.test.size());
  write_manifest(dir, manifest, a.seed);
  std::cout << txt.str();
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  DataOptions data;
  std::string model;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  KeyValues manifest{{"command", "eval"}, {"model", a.model}};
  CnnDetector det;
  det.set_net(load_model(a.model));
  const auto data = load_data(a.data, manifest);
  const auto dir = prepare_dir(a.out);

  const auto predicted = det.classify_all(data);
  std::vector<BinaryLabel> truth;
  std::vector<int> rel_truth;
  for (const auto& c : data) {
    truth.push_back(c.binary_label);
    rel_truth.push_back(c.relative_label);
  }
  const auto cm = confusion_matrix(*det.relative_classes(data), rel_truth);
  const std::vector<std::pair<std::string, DiagonalMetrics>> dm = {{"cnn", diagonal_metrics(cm)}};

  std::ostringstream txt;
  txt << "binary accuracy " << format_double(binary_accuracy(predicted, truth)) << " on "
      << data.size() << " cycles\n\n"
      << format_confusion(cm) << '\n'
      << format_diagonal_metrics(dm);
  write_text(dir / "eval_report.txt", txt.str());
  write_text(dir / "confusion.csv", confusion_csv(cm));
  write_manifest(dir, manifest, 0);
  std::cout << txt.str();
  return 0;
}

// ---------------------------------------------------------------------------

struct CvArgs {
  DataOptions data;
  ModelOptions model;
  std::string detectors = "cnn";
  std::size_t repeats = 10;
  std::string split = "70";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_crossval(const CvArgs& a, const std::string& command) {
  KeyValues manifest{{"command", command},
                     {"detectors", a.detectors},
                     {"repeats", std::to_string(a.repeats)},
                     {"split", a.split}};
  const auto opts = detector_options(a.model, manifest);
  std::vector<NamedFactory> dets;
  for (const auto& name : split_list(a.detectors)) {
    try {
      dets.push_back({name, detector_factory(name, opts)});
    } catch (const ConfigurationError& e) {
      throw UsageError(e.what());
    }
  }
  if (dets.empty()) throw UsageError("no detectors given");
  const auto data = load_data(a.data, manifest);
  const auto spec = parse_split(a.split, data, a.seed);
  const auto dir = prepare_dir(a.out);

  auto progress = [](const std::string& name, std::size_t r, const Detector&,
                     const TrainTestSets&) {
    std::fprintf(stderr, "repeat %zu: %s done\n", r, name.c_str());
  };
  const auto reports = compare_detectors(data, spec, dets, a.repeats, progress);

  std::ostringstream txt;
  txt << format_cv_table(reports);
  std::vector<std::pair<std::string, DiagonalMetrics>> dm;
  for (const auto& rep : reports) {
    ConfusionMatrix6 pooled;
    bool any = false;
    for (const auto& sp : rep.splits) {
      if (!sp.test_confusion) continue;
      any = true;
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) pooled.counts[i][j] += sp.test_confusion->counts[i][j];
    }
    if (!any) continue;
    txt << "\n" << rep.detector << " test confusion, all repeats pooled\n" << format_confusion(pooled);
    write_text(dir / (rep.detector + "_confusion.csv"), confusion_csv(pooled));
    dm.emplace_back(rep.detector, diagonal_metrics(pooled));
  }
  if (!dm.empty()) txt << '\n' << format_diagonal_metrics(dm);
  write_text(dir / "cv_report.txt", txt.str());
  write_text(dir / "cv.csv", cv_csv(reports));
  write_manifest(dir, manifest, a.seed);
  std::cout << txt.str();
  return 0;
}

// ---------------------------------------------------------------------------

struct SpectrumArgs {
  std::string model;
  std::string out;
  std::vector<double> bores;
  double tolerance = 0.15;
  std::size_t n_modes = 5;
  std::size_t pad = 1024;
};

int cmd_spectrum(const SpectrumArgs& a) {
  KeyValues manifest{{"command", "spectrum"}, {"model", a.model}, {"pad", std::to_string(a.pad)}};
  const auto net = load_model(a.model);
  const auto spec = first_layer_spectrum(net, a.pad);
  const auto dir = prepare_dir(a.out);
  write_text(dir / "spectrum.csv", spectrum_csv(spec));

  std::ostringstream txt;
  txt << format_peak_table(spec);
  int code = 0;
  if (!a.bores.empty()) {
    std::vector<EngineGeometry> geometries;
    std::string bores;
    for (double b : a.bores) {
      EngineGeometry g;
      g.bore_mm = b;
      g.validate();
      geometries.push_back(g);
      bores += (bores.empty() ? "" : ",") + format_double(b);
    }
    HypothesisOptions opt;
    opt.zero_pad_length = a.pad;
    opt.n_modes = a.n_modes;
    const auto h = hypothesis_check(net, geometries, a.tolerance, opt);
    txt << format_hypothesis(h);
    manifest["geometry_bores"] = bores;
    manifest["tolerance"] = format_double(a.tolerance);
    manifest["n_modes"] = std::to_string(a.n_modes);
    if (!h.pass) code = kExitCheckFailed;
  }
  write_text(dir / "spectrum_report.txt", txt.str());
  write_manifest(dir, manifest, 0);
  std::cout << txt.str();
  return code;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  DataOptions data;
  std::string model;
  std::string variant;
  int kernel = 0;
  std::size_t warmup = 200;
  std::size_t n = 2000;
  double budget_us = 1000.0;
  std::string out;
};

int cmd_bench(const BenchArgs& a) {
  KeyValues manifest{{"command", "bench"}, {"budget_us", format_double(a.budget_us)}};
  CnnDetector det;
  if (!a.model.empty()) {
    if (!a.variant.empty() || a.kernel != 0) throw UsageError("--model excludes --variant/--kernel");
    det.set_net(load_model(a.model));
    manifest["model"] = a.model;
  } else {
    const int k = resolve_kernel(a.variant, a.kernel);
    det.set_net(build_model(k, kWindowSamples, ConvMode::shared_kernel, 1));
    manifest["base_kernel"] = std::to_string(k);
  }
  const auto data = load_data(a.data, manifest);
  std::vector<AnalysisWindow> windows;
  for (const auto& c : data) windows.push_back(c.window);
  const auto r = latency_benchmark(det, windows, a.warmup, a.n);
  const bool pass = r.mean_us < a.budget_us;

  char line[256];
  std::snprintf(line, sizeof line,
                "%s: mean %.1f us, p99 %.1f us, min %.1f us, max %.1f us "
                "(%zu warmup, %zu measured, budget %.1f us)\n",
                pass ? "PASS" : "FAIL", r.mean_us, r.p99_us, r.min_us, r.max_us, r.n_warmup,
                r.n_measured, a.budget_us);
  if (!a.out.empty()) {
    const auto dir = prepare_dir(a.out);
    write_text(dir / "bench_report.txt", line);
    write_manifest(dir, manifest, 0);
  }
  std::cout << line;
  return pass ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knock detection toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic labelled dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--bore-mm", synth.bore_mm, "One engine of this bore (default: three-engine study)");
  s->add_option("--n", synth.n, "Cycles for a single engine");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--tag", synth.tag, "Subset tag for a single engine");
  s->add_option("--config", synth.config, "Key-value generator configuration");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network on a stratified split");
  add_data_options(*t, tr.data);
  add_model_options(*t, tr.model);
  t->add_option("--split", tr.split, "Training percentage, or per-tag list like 70/50/45");
  t->add_option("--seed", tr.seed, "Split and initialisation seed");
  t->add_option("--out", tr.out, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a saved network");
  add_data_options(*e, ev.data);
  e->add_option("--model", ev.model, "Model file")->required();
  e->add_option("--out", ev.out, "Output directory")->required();

  CvArgs cv, cmp;
  cmp.detectors = "cnn,mapo,pca-dd,pca-eigen";
  auto* c = app.add_subcommand("crossval", "Repeated stratified validation of one detector");
  auto* m = app.add_subcommand("compare", "Several detectors on shared splits");
  for (auto [cmd, args] : {std::pair{c, &cv}, std::pair{m, &cmp}}) {
    add_data_options(*cmd, args->data);
    add_model_options(*cmd, args->model);
    cmd->add_option("--repeats", args->repeats, "Number of repeated splits")->check(CLI::PositiveNumber);
    cmd->add_option("--split", args->split, "Training percentage, or per-tag list like 70/50/45");
    cmd->add_option("--seed", args->seed, "Seed of the first split");
    cmd->add_option("--out", args->out, "Output directory")->required();
  }
  c->add_option("--detector", cv.detectors, "cnn | mapo | pca-dd | pca-eigen");
  m->add_option("--detectors", cmp.detectors, "Comma-separated detector names");

  SpectrumArgs sp;
  auto* p = app.add_subcommand("spectrum", "First-layer kernel spectra and the mode check");
  p->add_option("--model", sp.model, "Model file")->required();
  p->add_option("--out", sp.out, "Output directory")->required();
  p->add_option("--geometry-bore", sp.bores, "Bore in mm whose modes are candidates (repeatable)");
  p->add_option("--tolerance", sp.tolerance, "Relative tolerance of the mode check");
  p->add_option("--n-modes", sp.n_modes, "Lowest modes per bore considered")->check(CLI::Range(1, 5));
  p->add_option("--pad", sp.pad, "Zero-padded transform length (power of two)");

  BenchArgs b;
  auto* bn = app.add_subcommand("bench", "Single-window classification latency");
  add_data_options(*bn, b.data);
  bn->add_option("--model", b.model, "Model file");
  bn->add_option("--variant", b.variant, "Untrained variant a|b|c|d instead of a model file");
  bn->add_option("--kernel", b.kernel, "Untrained network of this base kernel");
  bn->add_option("--warmup", b.warmup, "Untimed calls");
  bn->add_option("--n", b.n, "Timed calls (>= 100)");
  bn->add_option("--budget-us", b.budget_us, "Mean latency budget in microseconds");
  bn->add_option("--out", b.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*c) {
      if (split_list(cv.detectors).size() != 1) throw UsageError("crossval takes one detector");
      return cmd_crossval(cv, "crossval");
    }
    if (*m) return cmd_crossval(cmp, "compare");
    if (*p) return cmd_spectrum(sp);
    if (*bn) return cmd_bench(b);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const ConfigurationError& err) {
    std::cerr << "configuration error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitError;
  }
  return 0;
}
