#pragma once

// Minibatch Adam training with binary cross-entropy on scaled labels, L2
// weight decay, and early stopping on test accuracy.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "knock/cnn.hpp"
#include "knock/dataset.hpp"

namespace knock {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  double l2_penalty = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 15;
  double plateau_tolerance = 1e-4;
  std::uint64_t seed = 0;

  /// Throws ConfigurationError.
  void validate() const;
};

enum class StopReason : std::uint8_t { plateau, divergence, max_epochs };
const char* to_string(StopReason reason);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t stop_epoch = 0;
  StopReason stop_reason = StopReason::max_epochs;
  std::size_t best_epoch = 0;  // 0: the initial network was kept
  double best_test_accuracy = 0.0;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

/// Adam state over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1, double beta2, double epsilon);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `net` in place and leaves it at the epoch with the best test
/// accuracy. Train loss and accuracy are running means over the epoch's
/// minibatches, measured before each update.
TrainReport train(KnockNet& net, std::span<const LabeledCycle> train_set,
                  std::span<const LabeledCycle> test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Fraction of cycles whose p >= 0.5 decision matches the binary label.
double network_accuracy(const KnockNet& net, std::span<const LabeledCycle> cycles);

}  // namespace knock
