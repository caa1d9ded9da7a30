#include "knock/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "knock/error.hpp"

namespace knock {

namespace kr = kernels::omp;

const char* to_string(ConvMode mode) {
  return mode == ConvMode::shared_kernel ? "shared_kernel" : "cross_channel";
}

ConvMode parse_conv_mode(const std::string& text) {
  if (text == "shared" || text == "shared_kernel") return ConvMode::shared_kernel;
  if (text == "cross" || text == "cross_channel") return ConvMode::cross_channel;
  throw ConfigurationError("unknown convolution mode '" + text +
                           "' (expected shared_kernel or cross_channel)");
}

int variant_kernel(char variant) {
  switch (variant) {
    case 'a': return 30;
    case 'b': return 23;
    case 'c': return 18;
    case 'd': return 11;
    default:
      throw ConfigurationError(std::string("unknown model variant '") + variant +
                               "' (expected a, b, c or d)");
  }
}

// ---------------------------------------------------------------------------
// Topology

Topology Topology::make(int base_kernel, std::size_t input_length, ConvMode mode) {
  if (base_kernel < 1) throw ShapeError("base kernel size must be >= 1");
  Topology t;
  t.base_kernel = base_kernel;
  t.input_length = input_length;
  t.mode = mode;
  const auto k = static_cast<std::size_t>(base_kernel);
  std::size_t length = input_length;
  std::size_t channels = 1;
  for (std::size_t i = 0; i < 3; ++i) {
    kernels::ConvShape s;
    s.in_channels = channels;
    s.out_channels = kConvChannels[i];
    s.kernel = i < 2 ? k : 2 * k + 1;
    s.in_length = length;
    s.padding = kConvPadding;
    if (length + 2 * kConvPadding < s.kernel + 1) {
      throw ShapeError("conv" + std::to_string(i + 1) + ": input length " +
                       std::to_string(length) + " is too short for kernel " +
                       std::to_string(s.kernel) + " with padding 5");
    }
    t.conv[i] = {s, mode};
    length = t.conv[i].pooled_length();
    if (length == 0)
      throw ShapeError("pool" + std::to_string(i + 1) + ": output length would be zero");
    channels = s.out_channels;
  }
  const std::size_t flat = channels * length;
  t.dense[0].shape = {flat, flat / 2};
  t.dense[1].shape = {flat / 2, 1};
  if (flat / 2 == 0) throw ShapeError("fc1: flattened length too short");
  return t;
}

std::array<std::size_t, 7> Topology::length_chain() const {
  return {input_length,      conv[0].out_length(), conv[0].pooled_length(),
          conv[1].out_length(), conv[1].pooled_length(), conv[2].out_length(),
          conv[2].pooled_length()};
}

ParameterCounts count_parameters(const Topology& t) {
  ParameterCounts c;
  for (std::size_t i = 0; i < 3; ++i) c.conv[i] = t.conv[i].parameter_count();
  c.fc1 = t.dense[0].parameter_count();
  c.fc2 = t.dense[1].parameter_count();
  c.total = c.conv[0] + c.conv[1] + c.conv[2] + c.fc1 + c.fc2;
  return c;
}

// ---------------------------------------------------------------------------
// KnockNet

KnockNet::KnockNet(Topology topology) : topology_(std::move(topology)) {
  const auto& t = topology_;
  const std::array<std::size_t, kBlockCount> sizes = {
      t.conv[0].parameter_count(),
      t.conv[1].parameter_count(),
      t.conv[2].parameter_count(),
      t.dense[0].shape.in * t.dense[0].shape.out,
      t.dense[0].shape.out,
      t.dense[1].shape.in * t.dense[1].shape.out,
      t.dense[1].shape.out};
  offsets_[0] = 0;
  for (std::size_t i = 0; i < kBlockCount; ++i) offsets_[i + 1] = offsets_[i] + sizes[i];
  params_.assign(offsets_[kBlockCount], 0.0);
}

std::span<double> KnockNet::block(Block b) {
  return std::span<double>(params_).subspan(offsets_[b], block_size(b));
}

std::span<const double> KnockNet::block(Block b) const {
  return std::span<const double>(params_).subspan(offsets_[b], block_size(b));
}

void KnockNet::initialize(std::uint64_t seed, InitScheme scheme) {
  std::mt19937_64 rng(seed);
  auto fill = [&](Block b, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : block(b)) w = dist(rng);
  };
  const auto& t = topology_;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& s = t.conv[i].shape;
    fill(static_cast<Block>(kConv1 + i), double(s.in_channels * s.kernel),
         double(s.out_channels * s.kernel));
  }
  fill(kFc1W, double(t.dense[0].shape.in), double(t.dense[0].shape.out));
  fill(kFc2W, double(t.dense[1].shape.in), double(t.dense[1].shape.out));
  for (double& b : block(kFc1B)) b = 0.0;
  for (double& b : block(kFc2B)) b = 0.0;
  if (scheme == InitScheme::centered_first_layer) {
    const std::size_t k = t.conv[0].shape.kernel;
    auto w = block(kConv1);
    for (std::size_t start = 0; start < w.size(); start += k) {
      double mean = 0.0;
      for (std::size_t i = 0; i < k; ++i) mean += w[start + i];
      mean /= static_cast<double>(k);
      for (std::size_t i = 0; i < k; ++i) w[start + i] -= mean;
    }
  }
}

const char* to_string(InitScheme scheme) {
  return scheme == InitScheme::glorot ? "glorot" : "centered";
}

InitScheme parse_init_scheme(const std::string& text) {
  if (text == "centered" || text == "centered_first_layer") return InitScheme::centered_first_layer;
  if (text == "glorot") return InitScheme::glorot;
  throw ConfigurationError("unknown init scheme '" + text + "' (valid: centered, glorot)");
}

KnockNet build_model(int base_kernel, std::size_t input_length, ConvMode mode,
                     std::uint64_t seed, InitScheme scheme) {
  KnockNet net(Topology::make(base_kernel, input_length, mode));
  net.initialize(seed, scheme);
  return net;
}

bool first_layer_alive(const KnockNet& net, std::span<const double> window) {
  const auto& c = net.topology().conv[0];
  if (window.size() != c.shape.in_length) throw ShapeError("first_layer_alive: window length");
  std::vector<double> y(c.shape.out_channels * c.out_length());
  kernels::reference::conv_forward(c.shape, c.mode, 1, window, net.block(KnockNet::kConv1), y);
  const std::size_t lo = c.out_length();
  const std::size_t p = c.shape.padding;
  for (std::size_t j = 0; j < c.shape.out_channels; ++j)
    for (std::size_t o = p; o + p < lo; ++o)
      if (y[j * lo + o] > 0.0) return true;
  return false;
}

std::uint64_t initialize_live(KnockNet& net, std::span<const LabeledCycle> windows,
                              std::uint64_t seed, InitScheme scheme) {
  net.initialize(seed, scheme);
  if (windows.empty()) return seed;
  std::vector<double> mean(net.input_length(), 0.0);
  for (const auto& c : windows) {
    if (c.window.size() != mean.size()) throw ShapeError("initialize_live: window length");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += c.window.samples[i];
  }
  for (auto& m : mean) m /= static_cast<double>(windows.size());
  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    net.initialize(seed + attempt, scheme);
    if (first_layer_alive(net, mean)) return seed + attempt;
  }
  net.initialize(seed, scheme);
  return seed;
}

// ---------------------------------------------------------------------------
// Forward / backward

Workspace::Workspace(const Topology& t, std::size_t batch) : batch_(batch) {
  input_.resize(batch * t.input_length);
  std::size_t conv_max = 0, pool_max = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c = t.conv[i];
    conv_[i].resize(batch * c.shape.out_channels * c.out_length());
    pool_[i].resize(batch * c.shape.out_channels * c.pooled_length());
    argmax_[i].resize(pool_[i].size());
    conv_max = std::max(conv_max, conv_[i].size());
    pool_max = std::max(pool_max, batch * c.shape.in_channels * c.shape.in_length);
  }
  fc1_.resize(batch * t.dense[0].shape.out);
  logit_.resize(batch);
  prob_.resize(batch);
  g_fc1_.resize(fc1_.size());
  g_flat_.resize(batch * t.dense[0].shape.in);
  g_conv_a_.resize(conv_max);
  g_pool_.resize(pool_max);
}

namespace {

double sigmoid(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

}  // namespace

std::span<const double> forward_batch(const KnockNet& net, std::span<const double> inputs,
                                      std::size_t batch, Workspace& ws) {
  const auto& t = net.topology();
  if (inputs.size() != batch * t.input_length) {
    throw ShapeError("forward: expected " + std::to_string(batch) + " x " +
                     std::to_string(t.input_length) + " inputs, got " +
                     std::to_string(inputs.size()) + " values");
  }
  if (ws.batch_ < batch || ws.input_.size() != ws.batch_ * t.input_length) ws = Workspace(t, batch);
  std::copy(inputs.begin(), inputs.end(), ws.input_.begin());
  ws.used_ = batch;

  std::span<const double> x(ws.input_.data(), batch * t.input_length);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c = t.conv[i];
    const std::size_t rows = batch * c.shape.out_channels;
    std::span<double> y(ws.conv_[i].data(), rows * c.out_length());
    kr::conv_forward(c.shape, c.mode, batch, x,
                     net.block(static_cast<KnockNet::Block>(KnockNet::kConv1 + i)), y);
    kr::relu_forward(y);
    std::span<double> p(ws.pool_[i].data(), rows * c.pooled_length());
    kr::maxpool2_forward(rows, c.out_length(), y, p,
                         std::span(ws.argmax_[i].data(), p.size()));
    x = p;
  }
  const auto& d1 = t.dense[0].shape;
  std::span<double> h(ws.fc1_.data(), batch * d1.out);
  kr::dense_forward(d1, batch, x, net.block(KnockNet::kFc1W), net.block(KnockNet::kFc1B), h);
  kr::relu_forward(h);
  std::span<double> z(ws.logit_.data(), batch);
  kr::dense_forward(t.dense[1].shape, batch, h, net.block(KnockNet::kFc2W),
                    net.block(KnockNet::kFc2B), z);
  for (std::size_t b = 0; b < batch; ++b) ws.prob_[b] = sigmoid(ws.logit_[b]);
  return {ws.prob_.data(), batch};
}

double forward(const KnockNet& net, const AnalysisWindow& window) {
  if (window.size() != net.input_length()) {
    throw ShapeError("window has " + std::to_string(window.size()) +
                     " samples, network expects " + std::to_string(net.input_length()));
  }
  // One scratch workspace per thread, rebuilt when the topology changes.
  thread_local Topology cached;
  thread_local Workspace ws;
  const auto& t = net.topology();
  if (ws.batch() == 0 || cached.base_kernel != t.base_kernel ||
      cached.input_length != t.input_length || cached.mode != t.mode) {
    cached = t;
    ws = Workspace(t, 1);
  }
  return forward_batch(net, window.samples, 1, ws)[0];
}

double weight_norm_squared(const KnockNet& net) {
  double s = 0.0;
  for (std::size_t b = 0; b < KnockNet::kBlockCount; ++b) {
    const auto blk = static_cast<KnockNet::Block>(b);
    if (KnockNet::is_bias(blk)) continue;
    for (double w : net.block(blk)) s += w * w;
  }
  return s;
}

double loss(std::span<const double> probabilities, std::span<const double> labels,
            const KnockNet& net, double l2_penalty) {
  if (probabilities.size() != labels.size() || probabilities.empty())
    throw ShapeError("loss: probabilities and labels must be non-empty and equally long");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i];
    if (!(y >= 0.0 && y <= 1.0)) throw DomainError("loss: label outside [0, 1]");
    const double p = std::clamp(probabilities[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size()) + l2_penalty * weight_norm_squared(net);
}

void backward(const KnockNet& net, Workspace& ws, std::span<const double> labels,
              double l2_penalty, std::span<double> grad) {
  const auto& t = net.topology();
  const std::size_t batch = labels.size();
  if (batch == 0 || batch != ws.used_) throw ShapeError("backward: label count does not match batch");
  if (grad.size() != net.parameters().size()) throw ShapeError("backward: gradient buffer size");
  std::fill(grad.begin(), grad.end(), 0.0);
  auto gblock = [&](KnockNet::Block b) {
    return grad.subspan(net.block_offset(b), net.block_size(b));
  };

  std::vector<double> dz(batch);
  for (std::size_t b = 0; b < batch; ++b)
    dz[b] = (ws.prob_[b] - labels[b]) / static_cast<double>(batch);

  const auto& d1 = t.dense[0].shape;
  const auto& d2 = t.dense[1].shape;
  std::span<double> g_h(ws.g_fc1_.data(), batch * d1.out);
  kr::dense_backward(d2, batch, std::span<const double>(ws.fc1_.data(), batch * d1.out),
                     net.block(KnockNet::kFc2W), dz, gblock(KnockNet::kFc2W),
                     gblock(KnockNet::kFc2B), g_h);
  kr::relu_backward(std::span<const double>(ws.fc1_.data(), g_h.size()), g_h);

  std::span<double> g_flat(ws.g_flat_.data(), batch * d1.in);
  kr::dense_backward(d1, batch, std::span<const double>(ws.pool_[2].data(), g_flat.size()),
                     net.block(KnockNet::kFc1W), g_h, gblock(KnockNet::kFc1W),
                     gblock(KnockNet::kFc1B), g_flat);

  std::span<const double> g_pooled = g_flat;
  for (std::size_t ii = 3; ii-- > 0;) {
    const auto& c = t.conv[ii];
    const std::size_t rows = batch * c.shape.out_channels;
    std::span<double> g_conv(ws.g_conv_a_.data(), rows * c.out_length());
    kr::maxpool2_backward(rows, c.out_length(), g_pooled,
                          std::span<const std::uint32_t>(ws.argmax_[ii].data(), rows * c.pooled_length()),
                          g_conv);
    kr::relu_backward(std::span<const double>(ws.conv_[ii].data(), g_conv.size()), g_conv);
    const std::size_t in_size = batch * c.shape.in_channels * c.shape.in_length;
    std::span<const double> x = ii == 0 ? std::span<const double>(ws.input_.data(), in_size)
                                        : std::span<const double>(ws.pool_[ii - 1].data(), in_size);
    std::span<double> g_in = ii == 0 ? std::span<double>() : std::span<double>(ws.g_pool_.data(), in_size);
    const auto blk = static_cast<KnockNet::Block>(KnockNet::kConv1 + ii);
    kr::conv_backward(c.shape, c.mode, batch, x, net.block(blk), g_conv, gblock(blk), g_in);
    g_pooled = g_in;
  }

  if (l2_penalty != 0.0) {
    for (std::size_t b = 0; b < KnockNet::kBlockCount; ++b) {
      const auto blk = static_cast<KnockNet::Block>(b);
      if (KnockNet::is_bias(blk)) continue;
      const auto w = net.block(blk);
      auto g = gblock(blk);
      for (std::size_t i = 0; i < w.size(); ++i) g[i] += 2.0 * l2_penalty * w[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Classification

Classification classify_probability(double p) {
  Classification c;
  c.probability = p;
  c.binary = p >= 0.5 ? BinaryLabel::knocking : BinaryLabel::normal;
  c.relative_class = probability_to_class(p);
  return c;
}

Classification classify(const KnockNet& net, const AnalysisWindow& window) {
  return classify_probability(forward(net, window));
}

std::vector<double> predict(const KnockNet& net, std::span<const LabeledCycle> cycles) {
  constexpr std::size_t kChunk = 64;
  const std::size_t len = net.input_length();
  std::vector<double> out(cycles.size());
  Workspace ws(net.topology(), std::min(kChunk, std::max<std::size_t>(1, cycles.size())));
  std::vector<double> buf;
  for (std::size_t start = 0; start < cycles.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, cycles.size() - start);
    buf.resize(n * len);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = cycles[start + i].window.samples;
      if (s.size() != len)
        throw ShapeError("cycle '" + cycles[start + i].cycle_id + "' window length " +
                         std::to_string(s.size()) + " != " + std::to_string(len));
      std::copy(s.begin(), s.end(), buf.begin() + static_cast<std::ptrdiff_t>(i * len));
    }
    const auto p = forward_batch(net, buf, n, ws);
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

}  // namespace knock
