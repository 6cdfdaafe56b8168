#pragma once

// Small sequential CNN engine: valid 2-D convolutions, ReLU, dropout, flatten
// and dense layers with hand-written backpropagation, cross-entropy and Adam.
// Network<float> is used for training, Network<double> for gradient checks.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rftl/common.hpp"

namespace rftl::nn {

enum class LayerKind { Conv2d, Relu, Dropout, Flatten, Linear };

const char* to_string(LayerKind k) noexcept;
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int kernel_h = 0;
  int kernel_w = 0;
  int out = 0;  // output channels (conv) or features (linear)
  double dropout_rate = 0.0;

  static LayerSpec conv(int out_channels, int kh, int kw) { return {LayerKind::Conv2d, kh, kw, out_channels, 0.0}; }
  static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0, 0.0}; }
  static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, 0, rate}; }
  static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, 0, 0.0}; }
  static LayerSpec linear(int out_features) { return {LayerKind::Linear, 0, 0, out_features, 0.0}; }

  bool has_params() const noexcept { return kind == LayerKind::Conv2d || kind == LayerKind::Linear; }
  bool operator==(const LayerSpec&) const = default;
};

/// Activation shape (channels, height, width); dense activations are (F, 1, 1).
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
};

/// Output shape of every layer (size = specs.size() + 1, front() = input).
/// Throws rftl::Error when the chain is inconsistent.
std::vector<Shape> infer_shapes(Shape input, const std::vector<LayerSpec>& specs);

struct ParamCount {
  std::size_t weights = 0;
  std::size_t biases = 0;
  std::size_t total() const noexcept { return weights + biases; }
};

/// Per-layer parameter sizes for a valid chain.
std::vector<ParamCount> parameter_layout(Shape input, const std::vector<LayerSpec>& specs);

/// Sum of parameters of layers whose mask entry is true (all layers if mask is empty).
std::size_t count_parameters(Shape input, const std::vector<LayerSpec>& specs,
                             const std::vector<bool>& trainable = {});

/// Index of the final layer; throws unless it is Linear.
std::size_t head_layer(const std::vector<LayerSpec>& specs);

/// Mask that trains only the final linear layer.
std::vector<bool> head_only_mask(const std::vector<LayerSpec>& specs);

/// Conv(1500,(1,7)) ReLU Conv(96,(2,7)) ReLU Dropout(0.5) Flatten Linear(65) Linear(classes).
std::vector<LayerSpec> reference_architecture(int classes);

/// Same layer sequence with configurable widths for desk-scale runs.
std::vector<LayerSpec> compact_architecture(int classes, int conv1 = 64, int conv2 = 32, int hidden = 32,
                                            double dropout = 0.5);

inline Shape iq_input_shape(int frame_len) { return {1, 2, frame_len}; }

// -- checkpoint ---------------------------------------------------------------

struct Provenance {
  std::string dataset;
  std::string mode;
  int epoch = 0;  // 1-based epoch of the kept weights, 0 = never trained
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;

  bool operator==(const Provenance& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return dataset == o.dataset && mode == o.mode && epoch == o.epoch && same(val_loss, o.val_loss) &&
           seed == o.seed;
  }
};

/// Precision-independent snapshot of a network; weights are 64-bit.
struct ModelCheckpoint {
  Shape input;
  std::vector<LayerSpec> specs;
  std::vector<std::vector<double>> weights;  // per layer, empty for parameter-free layers
  std::vector<std::vector<double>> biases;
  std::vector<bool> trainable;
  std::vector<std::string> class_names;
  Provenance provenance;

  /// Throws rftl::FormatError when shapes disagree with the specs.
  void validate() const;
  std::size_t parameter_count() const { return count_parameters(input, specs); }
  std::size_t trainable_parameter_count() const { return count_parameters(input, specs, trainable); }

  bool operator==(const ModelCheckpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary file: magic, version, JSON header (specs, shapes, mask, classes,
/// provenance), then little-endian float64 weights in layer order.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// -- engine -------------------------------------------------------------------------

template <typename T>
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t start = 0;
  bool training = false;
  std::vector<std::vector<T>> acts;   // acts[k] is the input of layer start+k; back() = logits
  std::vector<std::vector<T>> masks;  // dropout keep-masks (already scaled), indexed by layer

  bool empty() const noexcept { return acts.empty(); }
  const std::vector<T>& logits() const { return acts.back(); }
};

template <typename T>
struct Gradients {
  std::vector<std::vector<T>> weight;  // empty vector = no gradient for that layer
  std::vector<std::vector<T>> bias;

  bool has(std::size_t layer) const { return layer < weight.size() && !weight[layer].empty(); }
};

template <typename T>
class Network {
 public:
  Network(Shape input, std::vector<LayerSpec> specs, std::vector<std::string> class_names = {});

  static Network from_checkpoint(const ModelCheckpoint& ckpt);
  ModelCheckpoint to_checkpoint(const Provenance& provenance = {}) const;

  /// Kaiming-uniform fan-in weights (bound sqrt(6/fan_in)), zero biases.
  void initialize(std::uint64_t seed);
  void initialize_layer(std::size_t layer, Rng& rng);

  std::size_t num_layers() const noexcept { return specs_.size(); }
  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }
  Shape input_shape() const noexcept { return shapes_.front(); }
  std::size_t num_classes() const noexcept { return shapes_.back().numel(); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  std::vector<T>& weights(std::size_t l) { return weights_[l]; }
  const std::vector<T>& weights(std::size_t l) const { return weights_[l]; }
  std::vector<T>& biases(std::size_t l) { return biases_[l]; }
  const std::vector<T>& biases(std::size_t l) const { return biases_[l]; }

  std::vector<bool>& trainable() noexcept { return trainable_; }
  const std::vector<bool>& trainable() const noexcept { return trainable_; }
  std::size_t first_trainable() const noexcept;

  std::size_t parameter_count() const { return count_parameters(input_shape(), specs_); }
  std::size_t trainable_parameter_count() const {
    return count_parameters(input_shape(), specs_, trainable_);
  }

  /// Runs layers [start, num_layers) on `input`, which must hold `batch`
  /// activations shaped like shapes()[start]. Dropout is active only when
  /// `training`; it then needs `rng`.
  ForwardCache<T> forward(std::span<const T> input, std::size_t batch, bool training, Rng* rng = nullptr,
                          std::size_t start = 0) const;

  /// Runs layers [start, stop) in eval mode and returns the activations entering `stop`.
  std::vector<T> forward_range(std::span<const T> input, std::size_t batch, std::size_t start,
                               std::size_t stop) const;

  /// Gradients for trainable layers only; propagation stops at the first trainable layer.
  Gradients<T> backward(const ForwardCache<T>& cache, std::span<const T> dlogits) const;

  /// Eval-mode logits, batch x classes.
  std::vector<T> logits(std::span<const T> input, std::size_t batch) const;

 private:
  ForwardCache<T> run(std::span<const T> input, std::size_t batch, bool training, Rng* rng, std::size_t start,
                      std::size_t stop) const;

  std::vector<LayerSpec> specs_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<T>> weights_;
  std::vector<std::vector<T>> biases_;
  std::vector<bool> trainable_;
  std::vector<std::string> class_names_;
};

// -- losses, optimizers, helpers --------------------------------------------------

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  std::vector<T> grad;  // dLoss/dLogits, batch x classes
};

/// Mean softmax cross-entropy with max-subtraction. Throws on out-of-range labels.
template <typename T>
LossAndGrad<T> cross_entropy(std::span<const T> logits, std::size_t batch, std::size_t classes,
                             std::span<const int> labels);

/// Row-wise softmax in double precision.
template <typename T>
std::vector<double> softmax_rows(std::span<const T> logits, std::size_t batch, std::size_t classes);

/// Inverted dropout. Training: zero with probability `rate`, survivors scaled
/// by 1/(1-rate); the scaled keep-mask is written to `mask` when given.
template <typename T>
std::vector<T> dropout(std::span<const T> in, double rate, Rng& rng, bool training,
                       std::vector<T>* mask = nullptr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m_weight, v_weight, m_bias, v_bias;
};

template <typename T>
OptimizerState<T> make_optimizer(const Network<T>& net, AdamConfig config);

/// Bias-corrected Adam update on every layer that has a gradient.
template <typename T>
void adam_step(OptimizerState<T>& state, Network<T>& net, const Gradients<T>& grads);

/// Elementwise Adam on raw buffers; the building block of adam_step.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 const AdamConfig& cfg, std::uint64_t step);

/// Activations entering the final linear layer (eval mode), batch x F.
template <typename T>
std::vector<T> penultimate_features(const Network<T>& net, std::span<const T> input, std::size_t batch,
                                    std::size_t* feature_dim = nullptr);

/// Eval-mode class probabilities, batch x classes, in double precision.
template <typename T>
std::vector<double> softmax_probs(const Network<T>& net, std::span<const T> input, std::size_t batch);

}  // namespace rftl::nn
