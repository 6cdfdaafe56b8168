#pragma once

// Pretraining, head re-training, fine-tuning and top-1 evaluation.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rftl/dataspec.hpp"
#include "rftl/nn.hpp"

namespace rftl::xfer {

enum class Mode { Pretrain, HeadRetrain, FineTune };

const char* to_string(Mode m) noexcept;
Mode mode_from_string(const std::string& s);

struct TrainRecipe {
  Mode mode = Mode::Pretrain;
  double lr = 1e-3;
  int epochs = 100;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  /// Head re-training only: keep the source head instead of re-initializing it.
  bool warm_start_head = false;

  /// Default learning rate per mode (1e-3, or 1e-4 for fine-tuning).
  static TrainRecipe defaults(Mode mode, std::uint64_t seed = 0);
  void validate() const;
};

/// Network input batch: (1, 2, N) frames with I in row 0 and Q in row 1.
struct Tensor {
  std::vector<float> x;
  std::vector<int> y;
  std::size_t n = 0;
  nn::Shape shape;

  std::size_t stride() const noexcept { return shape.numel(); }
};

/// Labeled examples only; unlabeled examples are kept with label -1.
Tensor to_tensor(const data::Dataset& ds);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainHooks {
  /// Replaces the measured validation loss of an epoch (testing aid).
  std::function<double(int epoch, double measured)> val_loss;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Keeps a copy of the weights at the lowest validation loss seen so far.
/// Ties keep the earlier epoch.
class BestTracker {
 public:
  bool offer(int epoch, double val_loss, const nn::Network<float>& net);
  bool empty() const noexcept { return epoch_ == 0; }
  int epoch() const noexcept { return epoch_; }
  double val_loss() const noexcept { return loss_; }
  void restore(nn::Network<float>& net) const;

 private:
  int epoch_ = 0;
  double loss_ = 0.0;
  std::vector<std::vector<float>> weights_, biases_;
};

/// Trains every parameter of a freshly initialized network.
nn::ModelCheckpoint pretrain(const std::vector<nn::LayerSpec>& model, const data::Dataset& train,
                             const data::Dataset& val, const TrainRecipe& recipe, const TrainHooks& hooks = {});

/// Trains only the final linear layer (re-initialized unless warm-started).
nn::ModelCheckpoint head_retrain(const nn::ModelCheckpoint& source, const data::Dataset& train,
                                 const data::Dataset& val, const TrainRecipe& recipe,
                                 const TrainHooks& hooks = {});

/// Continues training of every layer from the source weights.
nn::ModelCheckpoint fine_tune(const nn::ModelCheckpoint& source, const data::Dataset& train,
                              const data::Dataset& val, const TrainRecipe& recipe, const TrainHooks& hooks = {});

/// Dispatches on recipe.mode; pretraining builds the architecture of `source`.
nn::ModelCheckpoint transfer(const nn::ModelCheckpoint& source, const data::Dataset& train,
                             const data::Dataset& val, const TrainRecipe& recipe, const TrainHooks& hooks = {});

/// Fraction of examples whose arg-max logit equals the label (eval mode).
double evaluate_top1(const nn::ModelCheckpoint& ckpt, const data::Dataset& test);
double evaluate_top1(const nn::Network<float>& net, const Tensor& test);

/// Mean cross-entropy in eval mode.
double evaluate_loss(const nn::Network<float>& net, const Tensor& data);

}  // namespace rftl::xfer
