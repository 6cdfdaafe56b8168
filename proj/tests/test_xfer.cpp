#include <doctest.h>

#include <algorithm>

#include "rftl/xfer.hpp"

using namespace rftl;
using namespace rftl::xfer;

namespace {

const data::Dataset& master() {
  static const data::Dataset ds = [] {
    data::MasterSpec spec;
    spec.classes = data::desk_classes();
    spec.per_class = 6000;
    spec.seed = 2024;
    return data::generate_master(spec, 0);
  }();
  return ds;
}

data::Splits window_splits(data::DomainWindow w, std::size_t train, std::size_t val, std::size_t test,
                           std::uint64_t seed) {
  Rng rng(seed);
  auto s = data::subset(master(), w, train + val + test, rng);
  return data::split(s, train, val, test, rng);
}

std::vector<nn::LayerSpec> tiny_model() { return nn::compact_architecture(6, 8, 4, 8, 0.5); }

data::Dataset small_set(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  return data::subset(master(), {{0, 20}, {-0.1, 0.1}, "small"}, per_class, rng);
}

bool same_layer(const nn::ModelCheckpoint& a, const nn::ModelCheckpoint& b, std::size_t l) {
  return a.weights[l] == b.weights[l] && a.biases[l] == b.biases[l];
}

}  // namespace

TEST_CASE("recipes") {
  CHECK(TrainRecipe::defaults(Mode::Pretrain).lr == 1e-3);
  CHECK(TrainRecipe::defaults(Mode::HeadRetrain).lr == 1e-3);
  CHECK(TrainRecipe::defaults(Mode::FineTune).lr == 1e-4);
  CHECK(TrainRecipe::defaults(Mode::Pretrain).epochs == 100);
  CHECK(mode_from_string(to_string(Mode::FineTune)) == Mode::FineTune);
  CHECK_THROWS_AS(mode_from_string("nope"), Error);
  TrainRecipe r;
  r.lr = -1;
  CHECK_THROWS_AS(r.validate(), Error);
  r = TrainRecipe{};
  r.batch = 0;
  CHECK_THROWS_AS(r.validate(), Error);
}

TEST_CASE("tensor layout puts I then Q") {
  const auto ds = small_set(1, 1);
  const auto t = to_tensor(ds);
  CHECK(t.n == ds.size());
  CHECK(t.shape == nn::Shape{1, 2, 128});
  const auto& f = ds.examples[2].frame;
  CHECK(t.x[2 * t.stride() + 5] == static_cast<float>(f.i(5)));
  CHECK(t.x[2 * t.stride() + 128 + 5] == static_cast<float>(f.q(5)));
  CHECK(t.y[2] == ds.examples[2].label);
}

TEST_CASE("best-epoch selection follows the validation loss") {
  const auto train = small_set(10, 2), val = small_set(5, 3);
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 5);
  recipe.epochs = 3;
  const std::vector<double> injected{3.0, 1.0, 2.0};
  TrainHooks hooks;
  hooks.val_loss = [&](int epoch, double) { return injected[static_cast<std::size_t>(epoch - 1)]; };
  const auto ck = pretrain(tiny_model(), train, val, recipe, hooks);
  CHECK(ck.provenance.epoch == 2);
  CHECK(ck.provenance.val_loss == 1.0);
  CHECK(ck.provenance.mode == "PRETRAIN");

  // The returned weights are the ones after epoch 2: rerun for exactly 2 epochs.
  recipe.epochs = 2;
  const auto two = pretrain(tiny_model(), train, val, recipe, hooks);
  CHECK(two.weights == ck.weights);
  CHECK(two.biases == ck.biases);

  std::vector<double> tie{2.0, 1.0, 1.0};
  hooks.val_loss = [&](int epoch, double) { return tie[static_cast<std::size_t>(epoch - 1)]; };
  recipe.epochs = 3;
  CHECK(pretrain(tiny_model(), train, val, recipe, hooks).provenance.epoch == 2);
}

TEST_CASE("epoch logs report every epoch") {
  const auto train = small_set(10, 2), val = small_set(5, 3);
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 5);
  recipe.epochs = 4;
  std::vector<EpochLog> logs;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& l) { logs.push_back(l); };
  const auto ck = pretrain(tiny_model(), train, val, recipe, hooks);
  REQUIRE(logs.size() == 4);
  for (int e = 0; e < 4; ++e) CHECK(logs[static_cast<std::size_t>(e)].epoch == e + 1);
  const auto best = std::min_element(logs.begin(), logs.end(),
                                     [](const EpochLog& a, const EpochLog& b) { return a.val_loss < b.val_loss; });
  CHECK(ck.provenance.epoch == best->epoch);
  CHECK(ck.provenance.val_loss == best->val_loss);
}

TEST_CASE("training is reproducible from seeds") {
  const auto train = small_set(10, 2), val = small_set(5, 3);
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 9);
  recipe.epochs = 2;
  const auto a = pretrain(tiny_model(), train, val, recipe);
  const auto b = pretrain(tiny_model(), train, val, recipe);
  CHECK(a == b);
  recipe.seed = 10;
  CHECK_FALSE(pretrain(tiny_model(), train, val, recipe) == a);
}

TEST_CASE("head re-training changes only the head") {
  const auto train = small_set(10, 2), val = small_set(5, 3);
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 1);
  recipe.epochs = 2;
  const auto src = pretrain(tiny_model(), train, val, recipe);
  auto hr = TrainRecipe::defaults(Mode::HeadRetrain, 2);
  hr.epochs = 3;
  const auto out = head_retrain(src, small_set(10, 4), val, hr);
  const auto head = nn::head_layer(src.specs);
  for (std::size_t l = 0; l < head; ++l) CHECK(same_layer(src, out, l));
  CHECK_FALSE(same_layer(src, out, head));
  CHECK(out.trainable == nn::head_only_mask(src.specs));
  CHECK(out.provenance.mode == "HEAD_RETRAIN");
  CHECK(nn::count_parameters(src.input, src.specs, out.trainable) == 8 * 6 + 6);
  CHECK(transfer(src, small_set(10, 4), val, hr) == out);
}

TEST_CASE("zero-epoch transfers return the starting weights") {
  const auto train = small_set(10, 2), val = small_set(5, 3);
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 1);
  recipe.epochs = 2;
  const auto src = pretrain(tiny_model(), train, val, recipe);
  auto ft = TrainRecipe::defaults(Mode::FineTune, 3);
  ft.epochs = 0;
  const auto out = fine_tune(src, train, val, ft);
  CHECK(out.weights == src.weights);
  CHECK(out.biases == src.biases);
  CHECK(out.provenance.epoch == 0);

  auto hr = TrainRecipe::defaults(Mode::HeadRetrain, 3);
  hr.epochs = 0;
  hr.warm_start_head = true;
  const auto warm = head_retrain(src, train, val, hr);
  CHECK(warm.weights == src.weights);
}

TEST_CASE("transfer preconditions") {
  const auto train = small_set(5, 2), val = small_set(3, 3);
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 1);
  recipe.epochs = 1;
  const auto src = pretrain(tiny_model(), train, val, recipe);
  data::Dataset empty = train;
  empty.examples.clear();
  CHECK_THROWS_AS(pretrain(tiny_model(), empty, val, recipe), Error);
  CHECK_THROWS_AS(evaluate_top1(src, empty), Error);

  auto renamed = train;
  renamed.classes[0] = "QPSK8";
  CHECK_THROWS_AS(head_retrain(src, renamed, val, TrainRecipe::defaults(Mode::HeadRetrain)), Error);
  CHECK_THROWS_AS(pretrain(tiny_model(), train, renamed, recipe), Error);
  CHECK_THROWS_AS(pretrain(nn::compact_architecture(4, 8, 4, 8, 0.5), train, val, recipe), Error);
}

TEST_CASE("top-1 evaluation") {
  const auto ds = small_set(10, 6);
  nn::Network<float> constant(nn::iq_input_shape(128), tiny_model(), ds.classes);
  CHECK(evaluate_top1(constant, to_tensor(ds)) == doctest::Approx(1.0 / 6));

  auto five = small_set(1, 7);
  five.examples.pop_back();
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 3);
  recipe.epochs = 200;
  recipe.batch = 5;
  const auto memorized = pretrain(nn::compact_architecture(6, 8, 4, 16, 0.0), five, five, recipe);
  CHECK(evaluate_top1(memorized, five) == 1.0);

  nn::Network<float> net(nn::iq_input_shape(128), tiny_model(), ds.classes);
  net.initialize(4);
  auto shuffled = ds;
  Rng rng(1);
  std::shuffle(shuffled.examples.begin(), shuffled.examples.end(), rng);
  CHECK(evaluate_top1(net, to_tensor(ds)) == evaluate_top1(net, to_tensor(shuffled)));
}

TEST_CASE("desk-scale training and transfer") {
  data::MasterSpec spec;
  spec.classes = data::desk_classes();
  spec.per_class = 340;
  spec.snr_db = {10, 20};
  spec.fo_frac = {-0.01, 0.01};
  spec.seed = 11;
  Rng rng(11);
  const auto s = data::split(data::generate_master(spec, 0), 200, 40, 100, rng);
  auto recipe = TrainRecipe::defaults(Mode::Pretrain, 12);
  recipe.epochs = 15;
  const auto src = pretrain(nn::compact_architecture(6), s.train, s.val, recipe);
  const double val_acc = evaluate_top1(src, s.val);
  MESSAGE("desk pretrain val top-1 " << val_acc);
  CHECK(val_acc > 0.55);

  auto hr = TrainRecipe::defaults(Mode::HeadRetrain, 13);
  hr.epochs = 15;
  const auto same = head_retrain(src, s.train, s.val, hr);
  const double same_acc = evaluate_top1(same, s.val);
  MESSAGE("same-domain head re-train val top-1 " << same_acc);
  CHECK(same_acc >= val_acc - 0.05);

  const auto a = window_splits({{0, 20}, {-0.075, -0.025}, "fo-lo"}, 500, 100, 100, 14);
  const auto b = window_splits({{0, 20}, {0.025, 0.075}, "fo-hi"}, 500, 100, 100, 15);
  const auto far_src = pretrain(nn::compact_architecture(6), a.train, a.val, recipe);
  const auto head = head_retrain(far_src, b.train, b.val, hr);
  auto ft = TrainRecipe::defaults(Mode::FineTune, 13);
  ft.epochs = 15;
  const auto tuned = fine_tune(far_src, b.train, b.val, ft);
  const double head_acc = evaluate_top1(head, b.test), ft_acc = evaluate_top1(tuned, b.test);
  MESSAGE("FO-far head " << head_acc << ", fine-tune " << ft_acc);
  CHECK(ft_acc >= head_acc - 0.02);
}
