#include "rftl/xfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rftl::xfer {

namespace {

using nn::LayerKind;
using nn::Network;

constexpr std::size_t kEvalChunk = 256;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

void check_pair(const data::Dataset& train, const data::Dataset& val) {
  require(!train.empty(), "training set '" + train.name + "' is empty");
  require(!val.empty(), "validation set '" + val.name + "' is empty");
  require(train.classes == val.classes, "training and validation class lists differ");
  require(train.frame_len == val.frame_len, "training and validation frame lengths differ");
}

void check_source(const Network<float>& net, const data::Dataset& train) {
  require(net.input_shape() == nn::iq_input_shape(static_cast<int>(train.frame_len)),
          "source model input shape does not fit " + std::to_string(train.frame_len) + "-sample frames");
  require(net.class_names() == train.classes, "source and target class lists differ");
}

// First layer that is trainable or random in training mode; everything before
// it is a fixed function and is evaluated once.
std::size_t frozen_prefix(const Network<float>& net) {
  const auto& specs = net.specs();
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (specs[l].kind == LayerKind::Dropout && specs[l].dropout_rate > 0.0) return l;
    if (specs[l].has_params() && net.trainable()[l]) return l;
  }
  return specs.size();
}

std::vector<float> run_prefix(const Network<float>& net, const Tensor& t, std::size_t cut) {
  if (cut == 0) return t.x;
  const std::size_t width = net.shapes()[cut].numel();
  std::vector<float> out(t.n * width);
  for (std::size_t s = 0; s < t.n; s += kEvalChunk) {
    const std::size_t b = std::min(kEvalChunk, t.n - s);
    const auto y = net.forward_range(std::span<const float>(t.x).subspan(s * t.stride(), b * t.stride()), b, 0, cut);
    std::copy(y.begin(), y.end(), out.begin() + static_cast<long>(s * width));
  }
  return out;
}

double mean_loss_from(const Network<float>& net, const std::vector<float>& x, std::span<const int> y,
                      std::size_t start) {
  const std::size_t n = y.size();
  const std::size_t width = net.shapes()[start].numel();
  double total = 0.0;
  for (std::size_t s = 0; s < n; s += kEvalChunk) {
    const std::size_t b = std::min(kEvalChunk, n - s);
    auto cache = net.forward(std::span<const float>(x).subspan(s * width, b * width), b, false, nullptr, start);
    const auto ce = nn::cross_entropy<float>(cache.logits(), b, net.num_classes(), y.subspan(s, b));
    total += ce.loss * static_cast<double>(b);
  }
  return total / static_cast<double>(n);
}

nn::ModelCheckpoint train_loop(Network<float>& net, const data::Dataset& train_ds, const data::Dataset& val_ds,
                               const TrainRecipe& recipe, const TrainHooks& hooks) {
  const Tensor train = to_tensor(train_ds);
  const Tensor val = to_tensor(val_ds);
  nn::Provenance prov{train_ds.name, to_string(recipe.mode), 0, std::numeric_limits<double>::quiet_NaN(),
                      recipe.seed};
  if (recipe.epochs == 0) return net.to_checkpoint(prov);

  const std::size_t cut = frozen_prefix(net);
  const auto train_x = run_prefix(net, train, cut);
  const auto val_x = run_prefix(net, val, cut);
  const std::size_t width = net.shapes()[cut].numel();
  const std::size_t classes = net.num_classes();

  auto opt = nn::make_optimizer(net, {recipe.lr});
  Rng order_rng(derive_seed(recipe.seed, {1}));
  Rng dropout_rng(derive_seed(recipe.seed, {2}));
  std::vector<std::size_t> order(train.n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> bx;
  std::vector<int> by;
  BestTracker best;

  for (int epoch = 1; epoch <= recipe.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double train_total = 0.0;
    for (std::size_t s = 0; s < train.n; s += recipe.batch) {
      const std::size_t b = std::min(recipe.batch, train.n - s);
      bx.resize(b * width);
      by.resize(b);
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t i = order[s + k];
        std::copy_n(train_x.begin() + static_cast<long>(i * width), width, bx.begin() + static_cast<long>(k * width));
        by[k] = train.y[i];
      }
      auto cache = net.forward(bx, b, true, &dropout_rng, cut);
      const auto ce = nn::cross_entropy<float>(cache.logits(), b, classes, by);
      train_total += ce.loss * static_cast<double>(b);
      const auto grads = net.backward(cache, ce.grad);
      nn::adam_step(opt, net, grads);
    }
    EpochLog log{epoch, train_total / static_cast<double>(train.n), mean_loss_from(net, val_x, val.y, cut)};
    if (hooks.val_loss) log.val_loss = hooks.val_loss(epoch, log.val_loss);
    if (hooks.on_epoch) hooks.on_epoch(log);
    best.offer(epoch, log.val_loss, net);
  }
  if (!best.empty()) {
    best.restore(net);
    prov.epoch = best.epoch();
    prov.val_loss = best.val_loss();
  }
  return net.to_checkpoint(prov);
}

}  // namespace

const char* to_string(Mode m) noexcept {
  switch (m) {
    case Mode::Pretrain: return "PRETRAIN";
    case Mode::HeadRetrain: return "HEAD_RETRAIN";
    case Mode::FineTune: return "FINE_TUNE";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "PRETRAIN" || s == "pretrain") return Mode::Pretrain;
  if (s == "HEAD_RETRAIN" || s == "HEAD" || s == "head") return Mode::HeadRetrain;
  if (s == "FINE_TUNE" || s == "FINETUNE" || s == "finetune") return Mode::FineTune;
  throw Error("unknown training mode '" + s + "'");
}

TrainRecipe TrainRecipe::defaults(Mode mode, std::uint64_t seed) {
  TrainRecipe r;
  r.mode = mode;
  r.lr = mode == Mode::FineTune ? 1e-4 : 1e-3;
  r.seed = seed;
  return r;
}

void TrainRecipe::validate() const {
  require(std::isfinite(lr) && lr > 0.0, "learning rate must be positive");
  require(epochs >= 0, "epoch count must be >= 0");
  require(batch >= 1, "batch size must be >= 1");
}

Tensor to_tensor(const data::Dataset& ds) {
  require(ds.frame_len >= 1, "dataset has no frame length");
  Tensor t;
  t.n = ds.size();
  t.shape = nn::iq_input_shape(static_cast<int>(ds.frame_len));
  const std::size_t N = ds.frame_len;
  t.x.resize(t.n * 2 * N);
  t.y.resize(t.n);
  for (std::size_t i = 0; i < t.n; ++i) {
    const auto& e = ds.examples[i];
    require(e.frame.size() == N, "example " + std::to_string(e.id) + " has the wrong frame length");
    float* row = t.x.data() + i * 2 * N;
    for (std::size_t k = 0; k < N; ++k) {
      row[k] = static_cast<float>(e.frame.samples[k].real());
      row[N + k] = static_cast<float>(e.frame.samples[k].imag());
    }
    t.y[i] = e.label;
  }
  return t;
}

bool BestTracker::offer(int epoch, double val_loss, const Network<float>& net) {
  if (!empty() && !(val_loss < loss_)) return false;
  epoch_ = epoch;
  loss_ = val_loss;
  weights_.resize(net.num_layers());
  biases_.resize(net.num_layers());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    weights_[l] = net.weights(l);
    biases_[l] = net.biases(l);
  }
  return true;
}

void BestTracker::restore(Network<float>& net) const {
  require(!empty(), "no checkpoint recorded");
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    net.weights(l) = weights_[l];
    net.biases(l) = biases_[l];
  }
}

nn::ModelCheckpoint pretrain(const std::vector<nn::LayerSpec>& model, const data::Dataset& train,
                             const data::Dataset& val, const TrainRecipe& recipe, const TrainHooks& hooks) {
  require(recipe.mode == Mode::Pretrain, "pretrain needs a PRETRAIN recipe");
  recipe.validate();
  check_pair(train, val);
  Network<float> net(nn::iq_input_shape(static_cast<int>(train.frame_len)), model, train.classes);
  net.initialize(derive_seed(recipe.seed, {0}));
  return train_loop(net, train, val, recipe, hooks);
}

nn::ModelCheckpoint head_retrain(const nn::ModelCheckpoint& source, const data::Dataset& train,
                                 const data::Dataset& val, const TrainRecipe& recipe, const TrainHooks& hooks) {
  require(recipe.mode == Mode::HeadRetrain, "head_retrain needs a HEAD_RETRAIN recipe");
  recipe.validate();
  check_pair(train, val);
  auto net = Network<float>::from_checkpoint(source);
  check_source(net, train);
  net.trainable() = nn::head_only_mask(net.specs());
  if (!recipe.warm_start_head) {
    Rng rng(derive_seed(recipe.seed, {0}));
    net.initialize_layer(nn::head_layer(net.specs()), rng);
  }
  return train_loop(net, train, val, recipe, hooks);
}

nn::ModelCheckpoint fine_tune(const nn::ModelCheckpoint& source, const data::Dataset& train,
                              const data::Dataset& val, const TrainRecipe& recipe, const TrainHooks& hooks) {
  require(recipe.mode == Mode::FineTune, "fine_tune needs a FINE_TUNE recipe");
  recipe.validate();
  check_pair(train, val);
  auto net = Network<float>::from_checkpoint(source);
  check_source(net, train);
  net.trainable().assign(net.num_layers(), true);
  return train_loop(net, train, val, recipe, hooks);
}

nn::ModelCheckpoint transfer(const nn::ModelCheckpoint& source, const data::Dataset& train,
                             const data::Dataset& val, const TrainRecipe& recipe, const TrainHooks& hooks) {
  switch (recipe.mode) {
    case Mode::Pretrain: return pretrain(source.specs, train, val, recipe, hooks);
    case Mode::HeadRetrain: return head_retrain(source, train, val, recipe, hooks);
    case Mode::FineTune: return fine_tune(source, train, val, recipe, hooks);
  }
  throw Error("unknown training mode");
}

double evaluate_top1(const Network<float>& net, const Tensor& test) {
  require(test.n > 0, "test set is empty");
  require(test.shape == net.input_shape(), "test frames do not fit the model input");
  const std::size_t C = net.num_classes();
  std::size_t correct = 0;
  for (std::size_t s = 0; s < test.n; s += kEvalChunk) {
    const std::size_t b = std::min(kEvalChunk, test.n - s);
    const auto z = net.logits(std::span<const float>(test.x).subspan(s * test.stride(), b * test.stride()), b);
    for (std::size_t k = 0; k < b; ++k) {
      const int y = test.y[s + k];
      require(y >= 0 && static_cast<std::size_t>(y) < C, "test example without a valid label");
      const auto row = z.begin() + static_cast<long>(k * C);
      if (std::max_element(row, row + static_cast<long>(C)) - row == y) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.n);
}

double evaluate_top1(const nn::ModelCheckpoint& ckpt, const data::Dataset& test) {
  require(!test.empty(), "test set '" + test.name + "' is empty");
  const auto net = Network<float>::from_checkpoint(ckpt);
  return evaluate_top1(net, to_tensor(test));
}

double evaluate_loss(const Network<float>& net, const Tensor& data) {
  require(data.n > 0, "dataset is empty");
  return mean_loss_from(net, data.x, data.y, 0);
}

}  // namespace rftl::xfer
