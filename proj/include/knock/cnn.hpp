#pragma once

// The theory-guided 1D CNN: three bias-free convolutions (k, k, 2k+1 taps;
// 4, 8, 16 channels; padding 5, stride 1) each followed by ReLU and 2/2
// max-pooling, then dense n -> n/2 (ReLU) and n/2 -> 1 (sigmoid).

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "knock/dataset.hpp"
#include "knock/kernels.hpp"
#include "knock/signal.hpp"

namespace knock {

using kernels::ConvMode;

const char* to_string(ConvMode mode);
/// "shared" / "shared_kernel" / "cross" / "cross_channel"; throws ConfigurationError.
ConvMode parse_conv_mode(const std::string& text);

inline constexpr std::size_t kConvPadding = 5;
inline constexpr std::array<std::size_t, 3> kConvChannels = {4, 8, 16};

struct ConvLayer {
  kernels::ConvShape shape;
  ConvMode mode = ConvMode::shared_kernel;

  std::size_t out_length() const { return shape.out_length(); }
  std::size_t pooled_length() const { return out_length() / 2; }
  std::size_t parameter_count() const { return shape.weight_count(mode); }
};

struct DenseLayer {
  kernels::DenseShape shape;
  std::size_t parameter_count() const { return shape.in * shape.out + shape.out; }
};

/// Layer geometry for a base kernel size and input length.
struct Topology {
  int base_kernel = 0;
  std::size_t input_length = kWindowSamples;
  ConvMode mode = ConvMode::shared_kernel;
  std::array<ConvLayer, 3> conv{};
  std::array<DenseLayer, 2> dense{};

  /// Throws ShapeError naming the first layer whose output would be empty.
  static Topology make(int base_kernel, std::size_t input_length = kWindowSamples,
                       ConvMode mode = ConvMode::shared_kernel);

  std::size_t flatten_length() const { return dense[0].shape.in; }
  /// input, conv1, pool1, conv2, pool2, conv3, pool3 lengths.
  std::array<std::size_t, 7> length_chain() const;
};

/// glorot: uniform in +-sqrt(6 / (fan_in + fan_out)) for every weight.
/// centered_first_layer: the same draw, then each conv1 kernel has its mean
/// removed so the first layer starts blind to the pressure level.
enum class InitScheme : std::uint8_t { centered_first_layer, glorot };
const char* to_string(InitScheme scheme);
/// "centered" / "glorot"; throws ConfigurationError.
InitScheme parse_init_scheme(const std::string& text);

struct ParameterCounts {
  std::array<std::size_t, 3> conv{};
  std::size_t fc1 = 0;
  std::size_t fc2 = 0;
  std::size_t total = 0;
};

/// Network parameters in one flat buffer, in declaration order:
/// conv1, conv2, conv3 kernels, fc1 weights, fc1 bias, fc2 weights, fc2 bias.
class KnockNet {
 public:
  enum Block : std::size_t { kConv1, kConv2, kConv3, kFc1W, kFc1B, kFc2W, kFc2B, kBlockCount };

  KnockNet() = default;
  /// All-zero parameters.
  explicit KnockNet(Topology topology);

  const Topology& topology() const { return topology_; }
  std::size_t input_length() const { return topology_.input_length; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> block(Block b);
  std::span<const double> block(Block b) const;
  std::size_t block_offset(Block b) const { return offsets_[b]; }
  std::size_t block_size(Block b) const { return offsets_[b + 1] - offsets_[b]; }
  static bool is_bias(Block b) { return b == kFc1B || b == kFc2B; }

  /// Seeded weights per `scheme`, zero biases.
  void initialize(std::uint64_t seed, InitScheme scheme = InitScheme::centered_first_layer);

 private:
  Topology topology_;
  std::vector<double> params_;
  std::array<std::size_t, kBlockCount + 1> offsets_{};
};

/// Topology plus seeded initialisation.
KnockNet build_model(int base_kernel, std::size_t input_length = kWindowSamples,
                     ConvMode mode = ConvMode::shared_kernel, std::uint64_t seed = 0,
                     InitScheme scheme = InitScheme::centered_first_layer);

/// True if some first-layer channel has a positive response at an interior
/// (padding-free) position of `window`. A network failing this for the mean
/// training window gets no gradient through its convolutions.
bool first_layer_alive(const KnockNet& net, std::span<const double> window);

/// build_model, re-drawn from seed + 1, seed + 2, ... (at most 16 draws) while
/// the first layer is dead on the mean of `windows`. Returns the seed used.
std::uint64_t initialize_live(KnockNet& net, std::span<const LabeledCycle> windows,
                              std::uint64_t seed,
                              InitScheme scheme = InitScheme::centered_first_layer);

ParameterCounts count_parameters(const Topology& topology);
inline ParameterCounts count_parameters(const KnockNet& net) {
  return count_parameters(net.topology());
}

/// Kernel size of the four published variants: a=30, b=23, c=18, d=11.
int variant_kernel(char variant);

/// Activations of one forward pass over a batch, kept for the backward pass.
class Workspace {
 public:
  Workspace() = default;
  Workspace(const Topology& topology, std::size_t batch);

  /// Capacity; the last forward pass may have used fewer rows.
  std::size_t batch() const { return batch_; }
  std::span<const double> probabilities() const { return {prob_.data(), used_}; }
  std::span<const double> logits() const { return {logit_.data(), used_}; }

 private:
  friend std::span<const double> forward_batch(const KnockNet&, std::span<const double>,
                                               std::size_t, Workspace&);
  friend void backward(const KnockNet&, Workspace&, std::span<const double>, double,
                       std::span<double>);

  std::size_t batch_ = 0;
  std::size_t used_ = 0;
  std::vector<double> input_;
  std::array<std::vector<double>, 3> conv_;  // post-ReLU
  std::array<std::vector<double>, 3> pool_;
  std::array<std::vector<std::uint32_t>, 3> argmax_;
  std::vector<double> fc1_;  // post-ReLU
  std::vector<double> logit_;
  std::vector<double> prob_;
  // gradient scratch
  std::vector<double> g_fc1_, g_flat_, g_conv_a_, g_pool_;
};

/// Forward pass over `batch` inputs laid out [batch][input_length].
std::span<const double> forward_batch(const KnockNet& net, std::span<const double> inputs,
                                      std::size_t batch, Workspace& ws);

/// Knock probability in (0, 1). Throws ShapeError on a length mismatch.
double forward(const KnockNet& net, const AnalysisWindow& window);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy with clamped probabilities plus l2 * sum of squared weights.
double loss(std::span<const double> probabilities, std::span<const double> labels,
            const KnockNet& net, double l2_penalty);

/// Sum of squared non-bias parameters.
double weight_norm_squared(const KnockNet& net);

/// Gradient of `loss` for the batch held in `ws` (after forward_batch), written
/// into `grad` (same layout as net.parameters()). The cross-entropy term is
/// differentiated through the logit, (p - y) / batch, which is exact wherever
/// the clamp is inactive.
void backward(const KnockNet& net, Workspace& ws, std::span<const double> labels,
              double l2_penalty, std::span<double> grad);

struct Classification {
  double probability = 0.0;
  BinaryLabel binary = BinaryLabel::normal;
  int relative_class = 0;
};

/// Knocking iff p >= 0.5; relative class via probability_to_class.
Classification classify_probability(double p);
Classification classify(const KnockNet& net, const AnalysisWindow& window);

/// Probabilities for many windows; parallel over disjoint slices.
std::vector<double> predict(const KnockNet& net, std::span<const LabeledCycle> cycles);

// Model file: see model_io.cpp for the byte layout.
inline constexpr std::uint32_t kModelFormatVersion = 1;
void save_model(const KnockNet& net, const std::filesystem::path& path);
KnockNet load_model(const std::filesystem::path& path);

}  // namespace knock
