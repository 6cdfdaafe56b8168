#include "rftl/nn.hpp"

#include <algorithm>
#include <cmath>

// Every product goes through the packed kernels, even tiny ones.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

namespace rftl::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

// Unfolds one (c, h, w) activation into a (c*kh*kw) x (ho*wo) matrix.
template <typename T>
void im2col(const T* in, Shape s, int kh, int kw, int ho, int wo, T* col) {
  const std::size_t P = static_cast<std::size_t>(ho) * wo;
  std::size_t r = 0;
  for (int ci = 0; ci < s.c; ++ci) {
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx, ++r) {
        T* dst = col + r * P;
        for (int y = 0; y < ho; ++y) {
          const T* src = in + (static_cast<std::size_t>(ci) * s.h + y + dy) * s.w + dx;
          std::copy(src, src + wo, dst + static_cast<std::size_t>(y) * wo);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, Shape s, int kh, int kw, int ho, int wo, T* din) {
  const std::size_t P = static_cast<std::size_t>(ho) * wo;
  std::size_t r = 0;
  for (int ci = 0; ci < s.c; ++ci) {
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx, ++r) {
        const T* src = col + r * P;
        for (int y = 0; y < ho; ++y) {
          T* dst = din + (static_cast<std::size_t>(ci) * s.h + y + dy) * s.w + dx;
          const T* row = src + static_cast<std::size_t>(y) * wo;
          for (int x = 0; x < wo; ++x) dst[x] += row[x];
        }
      }
    }
  }
}

}  // namespace

const char* to_string(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Linear: return "linear";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::Conv2d, LayerKind::Relu, LayerKind::Dropout, LayerKind::Flatten, LayerKind::Linear}) {
    if (s == to_string(k)) return k;
  }
  throw FormatError("unknown layer kind '" + s + "'");
}

std::vector<Shape> infer_shapes(Shape input, const std::vector<LayerSpec>& specs) {
  require(input.c > 0 && input.h > 0 && input.w > 0, "input shape must be positive");
  std::vector<Shape> shapes{input};
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& sp = specs[l];
    const Shape in = shapes.back();
    const std::string where = "layer " + std::to_string(l) + " (" + to_string(sp.kind) + "): ";
    switch (sp.kind) {
      case LayerKind::Conv2d: {
        require(sp.out > 0 && sp.kernel_h > 0 && sp.kernel_w > 0, where + "non-positive size");
        const int ho = in.h - sp.kernel_h + 1;
        const int wo = in.w - sp.kernel_w + 1;
        require(ho > 0 && wo > 0, where + "kernel larger than its input");
        shapes.push_back({sp.out, ho, wo});
        break;
      }
      case LayerKind::Relu:
        shapes.push_back(in);
        break;
      case LayerKind::Dropout:
        require(sp.dropout_rate >= 0.0 && sp.dropout_rate < 1.0, where + "rate must lie in [0,1)");
        shapes.push_back(in);
        break;
      case LayerKind::Flatten:
        shapes.push_back({static_cast<int>(in.numel()), 1, 1});
        break;
      case LayerKind::Linear:
        require(sp.out > 0, where + "non-positive width");
        require(in.h == 1 && in.w == 1, where + "needs a flattened input");
        shapes.push_back({sp.out, 1, 1});
        break;
    }
  }
  return shapes;
}

std::vector<ParamCount> parameter_layout(Shape input, const std::vector<LayerSpec>& specs) {
  const auto shapes = infer_shapes(input, specs);
  std::vector<ParamCount> out(specs.size());
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& sp = specs[l];
    if (sp.kind == LayerKind::Conv2d) {
      out[l] = {static_cast<std::size_t>(sp.out) * shapes[l].c * sp.kernel_h * sp.kernel_w,
                static_cast<std::size_t>(sp.out)};
    } else if (sp.kind == LayerKind::Linear) {
      out[l] = {static_cast<std::size_t>(sp.out) * shapes[l].numel(), static_cast<std::size_t>(sp.out)};
    }
  }
  return out;
}

std::size_t count_parameters(Shape input, const std::vector<LayerSpec>& specs, const std::vector<bool>& trainable) {
  require(trainable.empty() || trainable.size() == specs.size(), "trainable mask length differs from layer count");
  const auto layout = parameter_layout(input, specs);
  std::size_t n = 0;
  for (std::size_t l = 0; l < layout.size(); ++l) {
    if (trainable.empty() || trainable[l]) n += layout[l].total();
  }
  return n;
}

std::size_t head_layer(const std::vector<LayerSpec>& specs) {
  require(!specs.empty() && specs.back().kind == LayerKind::Linear, "model has no final linear layer");
  return specs.size() - 1;
}

std::vector<bool> head_only_mask(const std::vector<LayerSpec>& specs) {
  std::vector<bool> mask(specs.size(), false);
  mask[head_layer(specs)] = true;
  return mask;
}

std::vector<LayerSpec> reference_architecture(int classes) {
  return compact_architecture(classes, 1500, 96, 65, 0.5);
}

std::vector<LayerSpec> compact_architecture(int classes, int conv1, int conv2, int hidden, double dropout) {
  return {LayerSpec::conv(conv1, 1, 7), LayerSpec::relu(),         LayerSpec::conv(conv2, 2, 7),
          LayerSpec::relu(),            LayerSpec::dropout(dropout), LayerSpec::flatten(),
          LayerSpec::linear(hidden),    LayerSpec::linear(classes)};
}

// -- Network --------------------------------------------------------------------

template <typename T>
Network<T>::Network(Shape input, std::vector<LayerSpec> specs, std::vector<std::string> class_names)
    : specs_(std::move(specs)),
      shapes_(infer_shapes(input, specs_)),
      trainable_(specs_.size(), true),
      class_names_(std::move(class_names)) {
  if (!class_names_.empty()) {
    require(class_names_.size() == shapes_.back().numel(), "class name count differs from output width");
  }
  const auto layout = parameter_layout(input, specs_);
  weights_.resize(specs_.size());
  biases_.resize(specs_.size());
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    weights_[l].assign(layout[l].weights, T(0));
    biases_[l].assign(layout[l].biases, T(0));
  }
}

template <typename T>
Network<T> Network<T>::from_checkpoint(const ModelCheckpoint& ckpt) {
  ckpt.validate();
  Network net(ckpt.input, ckpt.specs, ckpt.class_names);
  for (std::size_t l = 0; l < ckpt.specs.size(); ++l) {
    std::transform(ckpt.weights[l].begin(), ckpt.weights[l].end(), net.weights_[l].begin(),
                   [](double v) { return static_cast<T>(v); });
    std::transform(ckpt.biases[l].begin(), ckpt.biases[l].end(), net.biases_[l].begin(),
                   [](double v) { return static_cast<T>(v); });
  }
  net.trainable_ = ckpt.trainable;
  return net;
}

template <typename T>
ModelCheckpoint Network<T>::to_checkpoint(const Provenance& provenance) const {
  ModelCheckpoint c;
  c.input = input_shape();
  c.specs = specs_;
  c.trainable = trainable_;
  c.class_names = class_names_;
  c.provenance = provenance;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    c.weights.emplace_back(weights_[l].begin(), weights_[l].end());
    c.biases.emplace_back(biases_[l].begin(), biases_[l].end());
  }
  return c;
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    if (specs_[l].has_params()) initialize_layer(l, rng);
  }
}

template <typename T>
void Network<T>::initialize_layer(std::size_t l, Rng& rng) {
  require(l < specs_.size() && specs_[l].has_params(), "layer has no parameters");
  const std::size_t fan_in = weights_[l].size() / static_cast<std::size_t>(specs_[l].out);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& w : weights_[l]) w = static_cast<T>(u(rng));
  std::fill(biases_[l].begin(), biases_[l].end(), T(0));
}

template <typename T>
std::size_t Network<T>::first_trainable() const noexcept {
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    if (specs_[l].has_params() && trainable_[l]) return l;
  }
  return specs_.size();
}

template <typename T>
ForwardCache<T> Network<T>::forward(std::span<const T> input, std::size_t batch, bool training, Rng* rng,
                                    std::size_t start) const {
  return run(input, batch, training, rng, start, specs_.size());
}

template <typename T>
ForwardCache<T> Network<T>::run(std::span<const T> input, std::size_t batch, bool training, Rng* rng,
                                std::size_t start, std::size_t stop) const {
  require(start <= stop && stop <= specs_.size(), "invalid layer range");
  require(input.size() == batch * shapes_[start].numel(),
          "input holds " + std::to_string(input.size()) + " values, expected " +
              std::to_string(batch * shapes_[start].numel()));
  ForwardCache<T> cache;
  cache.batch = batch;
  cache.start = start;
  cache.training = training;
  cache.masks.resize(specs_.size());
  cache.acts.emplace_back(input.begin(), input.end());

  std::vector<T> col;
  for (std::size_t l = start; l < stop; ++l) {
    const auto& sp = specs_[l];
    const Shape in = shapes_[l];
    const Shape out = shapes_[l + 1];
    const auto& x = cache.acts.back();
    std::vector<T> y(batch * out.numel());
    switch (sp.kind) {
      case LayerKind::Conv2d: {
        const int K = in.c * sp.kernel_h * sp.kernel_w;
        const int P = out.h * out.w;
        col.resize(static_cast<std::size_t>(K) * P);
        ConstMatMap<T> W(weights_[l].data(), out.c, K);
        ConstVecMap<T> b(biases_[l].data(), out.c);
        for (std::size_t n = 0; n < batch; ++n) {
          im2col(x.data() + n * in.numel(), in, sp.kernel_h, sp.kernel_w, out.h, out.w, col.data());
          MatMap<T> Y(y.data() + n * out.numel(), out.c, P);
          Y.noalias() = W * ConstMatMap<T>(col.data(), K, P);
          Y.colwise() += b;
        }
        break;
      }
      case LayerKind::Linear: {
        const long F = static_cast<long>(in.numel());
        ConstMatMap<T> W(weights_[l].data(), out.c, F);
        ConstVecMap<T> b(biases_[l].data(), out.c);
        for (std::size_t n = 0; n < batch; ++n) {
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(y.data() + n * out.numel(), out.c);
          yv.noalias() = W * ConstVecMap<T>(x.data() + n * in.numel(), F);
          yv += b;
        }
        break;
      }
      case LayerKind::Relu:
        std::transform(x.begin(), x.end(), y.begin(), [](T v) { return v > T(0) ? v : T(0); });
        break;
      case LayerKind::Dropout:
        if (training && sp.dropout_rate > 0.0) {
          require(rng != nullptr, "training-mode dropout needs a random generator");
          y = dropout<T>(x, sp.dropout_rate, *rng, true, &cache.masks[l]);
        } else {
          y = x;
        }
        break;
      case LayerKind::Flatten:
        y = x;
        break;
    }
    cache.acts.push_back(std::move(y));
  }
  return cache;
}

template <typename T>
std::vector<T> Network<T>::forward_range(std::span<const T> input, std::size_t batch, std::size_t start,
                                         std::size_t stop) const {
  auto cache = run(input, batch, false, nullptr, start, stop);
  return std::move(cache.acts.back());
}

template <typename T>
Gradients<T> Network<T>::backward(const ForwardCache<T>& cache, std::span<const T> dlogits) const {
  require(!cache.empty(), "backward called without a forward cache");
  require(cache.acts.size() == specs_.size() - cache.start + 1, "forward cache does not match this network");
  const std::size_t B = cache.batch;
  require(dlogits.size() == B * num_classes(), "gradient size differs from logits");

  Gradients<T> g;
  g.weight.resize(specs_.size());
  g.bias.resize(specs_.size());
  const std::size_t stop = first_trainable();
  if (stop == specs_.size()) return g;
  require(cache.start <= stop, "forward cache starts after the first trainable layer");

  auto act = [&](std::size_t layer) -> const std::vector<T>& { return cache.acts[layer - cache.start]; };
  std::vector<T> grad(dlogits.begin(), dlogits.end());
  std::vector<T> col, dcol;

  for (std::size_t l = specs_.size(); l-- > stop;) {
    const auto& sp = specs_[l];
    const Shape in = shapes_[l];
    const Shape out = shapes_[l + 1];
    const bool need_input_grad = l > stop;
    const bool train_here = sp.has_params() && trainable_[l];
    std::vector<T> gin;
    switch (sp.kind) {
      case LayerKind::Conv2d: {
        const int K = in.c * sp.kernel_h * sp.kernel_w;
        const int P = out.h * out.w;
        col.resize(static_cast<std::size_t>(K) * P);
        ConstMatMap<T> W(weights_[l].data(), out.c, K);
        if (train_here) {
          g.weight[l].assign(weights_[l].size(), T(0));
          g.bias[l].assign(biases_[l].size(), T(0));
        }
        if (need_input_grad) {
          gin.assign(B * in.numel(), T(0));
          dcol.resize(col.size());
        }
        for (std::size_t n = 0; n < B; ++n) {
          ConstMatMap<T> dY(grad.data() + n * out.numel(), out.c, P);
          if (train_here) {
            im2col(act(l).data() + n * in.numel(), in, sp.kernel_h, sp.kernel_w, out.h, out.w, col.data());
            MatMap<T>(g.weight[l].data(), out.c, K).noalias() += dY * ConstMatMap<T>(col.data(), K, P).transpose();
            const T* d = grad.data() + n * out.numel();
            for (int o = 0; o < out.c; ++o) {
              T acc = T(0);
              for (int p = 0; p < P; ++p) acc += d[static_cast<std::size_t>(o) * P + p];
              g.bias[l][static_cast<std::size_t>(o)] += acc;
            }
          }
          if (need_input_grad) {
            MatMap<T>(dcol.data(), K, P).noalias() = W.transpose() * dY;
            col2im_add(dcol.data(), in, sp.kernel_h, sp.kernel_w, out.h, out.w, gin.data() + n * in.numel());
          }
        }
        break;
      }
      case LayerKind::Linear: {
        const long F = static_cast<long>(in.numel());
        ConstMatMap<T> dY(grad.data(), static_cast<long>(B), out.c);
        ConstMatMap<T> X(act(l).data(), static_cast<long>(B), F);
        if (train_here) {
          g.weight[l].assign(weights_[l].size(), T(0));
          g.bias[l].assign(biases_[l].size(), T(0));
          MatMap<T>(g.weight[l].data(), out.c, F).noalias() = dY.transpose() * X;
          for (std::size_t n = 0; n < B; ++n) {
            const T* d = grad.data() + n * out.numel();
            for (std::size_t o = 0; o < g.bias[l].size(); ++o) g.bias[l][o] += d[o];
          }
        }
        if (need_input_grad) {
          gin.assign(B * in.numel(), T(0));
          MatMap<T>(gin.data(), static_cast<long>(B), F).noalias() =
              dY * ConstMatMap<T>(weights_[l].data(), out.c, F);
        }
        break;
      }
      case LayerKind::Relu: {
        const auto& y = act(l + 1);
        gin.resize(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i) gin[i] = y[i] > T(0) ? grad[i] : T(0);
        break;
      }
      case LayerKind::Dropout: {
        const auto& mask = cache.masks[l];
        gin = grad;
        if (cache.training && !mask.empty()) {
          for (std::size_t i = 0; i < gin.size(); ++i) gin[i] *= mask[i];
        }
        break;
      }
      case LayerKind::Flatten:
        gin = grad;
        break;
    }
    if (need_input_grad) grad = std::move(gin);
  }
  return g;
}

template <typename T>
std::vector<T> Network<T>::logits(std::span<const T> input, std::size_t batch) const {
  auto cache = forward(input, batch, false);
  return std::move(cache.acts.back());
}

// -- free functions -----------------------------------------------------------------

template <typename T>
LossAndGrad<T> cross_entropy(std::span<const T> logits, std::size_t batch, std::size_t classes,
                             std::span<const int> labels) {
  require(batch > 0 && classes > 0, "cross_entropy needs a non-empty batch");
  require(logits.size() == batch * classes, "logit count differs from batch x classes");
  require(labels.size() == batch, "label count differs from batch");
  LossAndGrad<T> out;
  out.grad.resize(logits.size());
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    const T* z = logits.data() + n * classes;
    const double zmax = static_cast<double>(*std::max_element(z, z + classes));
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(z[c]) - zmax);
    const double lse = zmax + std::log(sum);
    total += lse - static_cast<double>(z[y]);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(z[c]) - lse);
      out.grad[n * classes + c] = static_cast<T>((p - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_b);
    }
  }
  out.loss = total * inv_b;
  return out;
}

template <typename T>
std::vector<double> softmax_rows(std::span<const T> logits, std::size_t batch, std::size_t classes) {
  require(logits.size() == batch * classes, "logit count differs from batch x classes");
  std::vector<double> p(logits.size());
  for (std::size_t n = 0; n < batch; ++n) {
    const T* z = logits.data() + n * classes;
    const double zmax = static_cast<double>(*std::max_element(z, z + classes));
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[n * classes + c] = std::exp(static_cast<double>(z[c]) - zmax);
      sum += p[n * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) p[n * classes + c] /= sum;
  }
  return p;
}

template <typename T>
std::vector<T> dropout(std::span<const T> in, double rate, Rng& rng, bool training, std::vector<T>* mask) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0,1)");
  std::vector<T> out(in.begin(), in.end());
  if (!training || rate == 0.0) {
    if (mask) mask->clear();
    return out;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> m(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    m[i] = u(rng) < rate ? T(0) : keep_scale;
    out[i] *= m[i];
  }
  if (mask) *mask = std::move(m);
  return out;
}

template <typename T>
OptimizerState<T> make_optimizer(const Network<T>& net, AdamConfig config) {
  OptimizerState<T> s;
  s.config = config;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    s.m_weight.emplace_back(net.weights(l).size(), T(0));
    s.v_weight.emplace_back(net.weights(l).size(), T(0));
    s.m_bias.emplace_back(net.biases(l).size(), T(0));
    s.v_bias.emplace_back(net.biases(l).size(), T(0));
  }
  return s;
}

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 const AdamConfig& cfg, std::uint64_t step) {
  require(params.size() == grads.size() && m.size() == params.size() && v.size() == params.size(),
          "Adam buffers differ in size");
  require(step >= 1, "Adam step counter starts at 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const double mhat = static_cast<double>(m[i]) / c1;
    const double vhat = static_cast<double>(v[i]) / c2;
    params[i] = static_cast<T>(static_cast<double>(params[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <typename T>
void adam_step(OptimizerState<T>& state, Network<T>& net, const Gradients<T>& grads) {
  require(state.m_weight.size() == net.num_layers(), "optimizer state does not match the network");
  ++state.step;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (!grads.has(l)) continue;
    adam_update<T>(net.weights(l), grads.weight[l], state.m_weight[l], state.v_weight[l], state.config, state.step);
    adam_update<T>(net.biases(l), grads.bias[l], state.m_bias[l], state.v_bias[l], state.config, state.step);
  }
}

template <typename T>
std::vector<T> penultimate_features(const Network<T>& net, std::span<const T> input, std::size_t batch,
                                    std::size_t* feature_dim) {
  const std::size_t head = head_layer(net.specs());
  const auto linear_layers = std::count_if(net.specs().begin(), net.specs().end(),
                                           [](const LayerSpec& s) { return s.kind == LayerKind::Linear; });
  require(linear_layers >= 2, "penultimate features need at least two linear layers");
  if (feature_dim) *feature_dim = net.shapes()[head].numel();
  return net.forward_range(input, batch, 0, head);
}

template <typename T>
std::vector<double> softmax_probs(const Network<T>& net, std::span<const T> input, std::size_t batch) {
  const auto z = net.logits(input, batch);
  return softmax_rows<T>(z, batch, net.num_classes());
}

#define RFTL_INSTANTIATE(T)                                                                                   \
  template class Network<T>;                                                                                  \
  template LossAndGrad<T> cross_entropy<T>(std::span<const T>, std::size_t, std::size_t, std::span<const int>); \
  template std::vector<double> softmax_rows<T>(std::span<const T>, std::size_t, std::size_t);                 \
  template std::vector<T> dropout<T>(std::span<const T>, double, Rng&, bool, std::vector<T>*);                \
  template OptimizerState<T> make_optimizer<T>(const Network<T>&, AdamConfig);                                \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,                  \
                               const AdamConfig&, std::uint64_t);                                             \
  template void adam_step<T>(OptimizerState<T>&, Network<T>&, const Gradients<T>&);                           \
  template std::vector<T> penultimate_features<T>(const Network<T>&, std::span<const T>, std::size_t,         \
                                                  std::size_t*);                                              \
  template std::vector<double> softmax_probs<T>(const Network<T>&, std::span<const T>, std::size_t);

RFTL_INSTANTIATE(float)
RFTL_INSTANTIATE(double)

#undef RFTL_INSTANTIATE

}  // namespace rftl::nn
