#include "knock/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "knock/error.hpp"

namespace knock {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigurationError("batch_size must be positive");
  if (!(l2_penalty >= 0.0)) throw ConfigurationError("l2_penalty must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigurationError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigurationError("epsilon must be positive");
  if (patience < 1) throw ConfigurationError("patience must be >= 1");
  if (!(plateau_tolerance >= 0.0)) throw ConfigurationError("plateau_tolerance must be >= 0");
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::plateau: return "plateau";
    case StopReason::divergence: return "divergence";
    case StopReason::max_epochs: return "max_epochs";
  }
  return "?";
}

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const double step = lr_ / c1;
  const double inv_c2 = 1.0 / c2;
  const std::size_t n = params.size();
  double* p = params.data();
  const double* g = grad.data();
  double* m = m_.data();
  double* v = v_.data();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
    v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
    p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps_);
  }
}

double network_accuracy(const KnockNet& net, std::span<const LabeledCycle> cycles) {
  if (cycles.empty()) throw DomainError("accuracy of an empty set");
  const auto p = predict(net, cycles);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < cycles.size(); ++i)
    correct += (p[i] >= 0.5) == (cycles[i].binary_label == BinaryLabel::knocking);
  return static_cast<double>(correct) / static_cast<double>(cycles.size());
}

TrainReport train(KnockNet& net, std::span<const LabeledCycle> train_set,
                  std::span<const LabeledCycle> test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ConfigurationError("training set is empty");
  if (test_set.empty()) throw ConfigurationError("test set is empty");
  const std::size_t len = net.input_length();
  for (const auto& c : train_set)
    if (c.window.size() != len)
      throw ShapeError("training cycle '" + c.cycle_id + "' has window length " +
                       std::to_string(c.window.size()) + ", network expects " +
                       std::to_string(len));

  TrainReport report;
  if (config.max_epochs == 0) return report;

  std::mt19937_64 rng(config.seed);
  Adam adam(net.parameters().size(), config.learning_rate, config.beta1, config.beta2,
            config.epsilon);
  const std::size_t bs = std::min(config.batch_size, train_set.size());
  Workspace ws(net.topology(), bs);
  std::vector<double> grad(net.parameters().size());
  std::vector<double> inputs(bs * len), labels(bs);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> best(net.parameters().begin(), net.parameters().end());
  double best_acc = -1.0;
  double plateau_ref = -1.0;
  std::size_t since_improvement = 0;
  std::size_t diverging = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& c = train_set[order[start + i]];
        std::copy(c.window.samples.begin(), c.window.samples.end(),
                  inputs.begin() + static_cast<std::ptrdiff_t>(i * len));
        labels[i] = c.scaled_label;
      }
      const auto p = forward_batch(net, std::span(inputs.data(), n * len), n, ws);
      const std::span<const double> y(labels.data(), n);
      loss_sum += loss(p, y, net, config.l2_penalty) * static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        correct += (p[i] >= 0.5) ==
                   (train_set[order[start + i]].binary_label == BinaryLabel::knocking);
      backward(net, ws, y, config.l2_penalty, grad);
      adam.step(net.parameters(), grad);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.test_accuracy = network_accuracy(net, test_set);
    if (on_epoch) on_epoch(rec);

    if (rec.test_accuracy > best_acc) {
      best_acc = rec.test_accuracy;
      report.best_epoch = epoch;
      std::copy(net.parameters().begin(), net.parameters().end(), best.begin());
    }
    if (!report.epochs.empty()) {
      const auto& prev = report.epochs.back();
      const bool gap_grows = rec.train_accuracy - rec.test_accuracy >
                             prev.train_accuracy - prev.test_accuracy;
      diverging = gap_grows && rec.test_accuracy < prev.test_accuracy ? diverging + 1 : 0;
    }
    if (rec.test_accuracy > plateau_ref + config.plateau_tolerance) {
      plateau_ref = rec.test_accuracy;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    report.epochs.push_back(rec);
    report.stop_epoch = epoch;

    // A diverging run is also a plateaued one, so divergence is tested first.
    if (diverging >= config.patience) {
      report.stop_reason = StopReason::divergence;
      break;
    }
    if (since_improvement >= config.patience) {
      report.stop_reason = StopReason::plateau;
      break;
    }
  }

  std::copy(best.begin(), best.end(), net.parameters().begin());
  report.best_test_accuracy = best_acc;
  return report;
}

}  // namespace knock
