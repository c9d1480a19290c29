#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "septr/train.hpp"

using namespace septr;

namespace {

// Small end-to-end setup: quarter-second clips on an 8 x 15 mel grid.
SpectroConfig tiny_spectro() {
  SpectroConfig s;
  s.fft_length = 256;
  s.window_length = 256;
  s.hop = 256;
  s.mel_bins = 8;
  return s;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.variant = Variant::kVH;
  m.depth = 1;
  m.token_dim = 8;
  m.heads = 2;
  m.num_classes = 4;
  m.freq_bins = 8;
  m.time_slots = 15;
  return m;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.spectro = tiny_spectro();
  t.seed = 7;
  return t;
}

std::vector<LabeledWaveform> tiny_split(std::size_t count,
                                        std::uint64_t seed) {
  return make_synth_dataset(count, seed, 16000, 0.25);
}

void set_grad(Tensor& t, const std::vector<double>& g) {
  t.zero_grad();
  t.node()->grad = g;
}

}  // namespace

TEST_CASE("lr_at_epoch follows the halving schedule") {
  Schedule s;  // 1e-4, halve every 10 epochs
  for (std::size_t e = 0; e < 10; ++e) CHECK(lr_at_epoch(s, e) == 1e-4);
  for (std::size_t e = 10; e < 20; ++e) CHECK(lr_at_epoch(s, e) == 5e-5);
  CHECK(lr_at_epoch(s, 20) == 2.5e-5);
  s.decay_factor = 1.5;
  CHECK_THROWS_AS(lr_at_epoch(s, 0), std::invalid_argument);
}

TEST_CASE("adam_step") {
  SUBCASE("a parameter without a populated gradient is an error") {
    ModelParams p;
    p.tensors["w"] = Tensor(Shape{2}, {1.0, 2.0}, true);
    AdamState st;
    CHECK_THROWS_AS(adam_step(p, st, 0.1), std::logic_error);
  }
  SUBCASE("zero gradients leave the parameters unchanged") {
    ModelParams p;
    p.tensors["w"] = Tensor(Shape{3}, {1.0, -2.0, 0.5}, true);
    p.tensors["w"].zero_grad();
    AdamState st;
    adam_step(p, st, 0.1);
    CHECK(p.at("w").values() == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(st.step == 1);
  }
  SUBCASE("first step matches the hand-derived update") {
    // With zeroed moments and bias correction, step one reduces to
    // w -= lr * g / (|g| + eps).
    ModelParams p;
    p.tensors["w"] = Tensor(Shape{3}, {1.0, -2.0, 0.5}, true);
    const std::vector<double> g = {0.3, -0.7, 0.0};
    set_grad(p.at("w"), g);
    AdamState st;
    const double lr = 0.05;
    adam_step(p, st, lr);
    for (std::size_t i = 0; i < 3; ++i) {
      const double expect =
          std::vector<double>{1.0, -2.0, 0.5}[i] -
          lr * g[i] / (std::abs(g[i]) + st.eps);
      CHECK(p.at("w").values()[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    // the gradient buffer is consumed by the step
    for (double gv : p.at("w").grad()) CHECK(gv == 0.0);
  }
  SUBCASE("descends a quadratic bowl") {
    ModelParams p;
    p.tensors["w"] = Tensor(Shape{1}, {1.0}, true);
    AdamState st;
    for (int i = 0; i < 100; ++i) {
      Tensor w = p.at("w");
      w.zero_grad();
      {
        Tape tape;
        tape.backward(sum_all(mul(w, w)));
      }
      adam_step(p, st, 0.1);
    }
    CHECK(std::abs(p.at("w").values()[0]) < 0.1);
    CHECK(st.step == 100);
  }
}

TEST_CASE("train loop bookkeeping") {
  auto train_split = tiny_split(8, 1);
  auto val_split = tiny_split(4, 2);
  const ModelConfig mc = tiny_model();

  SUBCASE("one epoch of 8 samples at batch 4 takes two optimizer steps") {
    TrainResult r = train(mc, train_split, val_split, tiny_train(1));
    CHECK(r.optimizer_steps == 2);
    REQUIRE(r.metrics.size() == 1);
    CHECK(r.metrics[0].epoch == 0);
    CHECK(r.metrics[0].lr == 1e-4);
    CHECK(r.metrics[0].train_loss > 0.0);
    CHECK(r.best_epoch == 0);
    CHECK(r.best_params.census() == param_count(mc));
  }
  SUBCASE("the same seed reproduces every metric bitwise") {
    TrainResult a = train(mc, train_split, val_split, tiny_train(2));
    TrainResult b = train(mc, train_split, val_split, tiny_train(2));
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
      CHECK(a.metrics[i].train_loss == b.metrics[i].train_loss);
      CHECK(a.metrics[i].train_acc == b.metrics[i].train_acc);
      CHECK(a.metrics[i].val_acc == b.metrics[i].val_acc);
      CHECK(a.metrics[i].lr == b.metrics[i].lr);
    }
  }
  SUBCASE("a different seed changes the trajectory") {
    TrainConfig other = tiny_train(1);
    other.seed = 8;
    TrainResult a = train(mc, train_split, val_split, tiny_train(1));
    TrainResult b = train(mc, train_split, val_split, other);
    CHECK(a.metrics[0].train_loss != b.metrics[0].train_loss);
  }
  SUBCASE("empty splits are rejected") {
    CHECK_THROWS_AS(train(mc, {}, val_split, tiny_train(1)),
                    std::invalid_argument);
  }
  SUBCASE("out-of-range labels are rejected") {
    auto bad = train_split;
    bad[3].label = 9;
    CHECK_THROWS_AS(train(mc, bad, val_split, tiny_train(1)),
                    std::out_of_range);
  }
}

TEST_CASE("loss decreases on a frozen batch") {
  const ModelConfig mc = tiny_model();
  Rng rng(5);
  ModelParams params = init_params(mc, rng);
  auto split = tiny_split(4, 3);
  std::vector<MelSpectrogram> specs;
  std::vector<int> labels;
  for (const auto& s : split) {
    specs.push_back(preprocess(s.audio, tiny_spectro(), 0.0));
    labels.push_back(s.label);
  }
  AdamState adam;
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 10; ++step) {
    Tape tape;
    std::vector<Tensor> rows;
    for (const auto& spec : specs)
      rows.push_back(reshape(model_forward(spec, params, mc),
                             {1, mc.num_classes}));
    Tensor loss = cross_entropy(concat(rows, 0), labels);
    if (step == 0) first = loss.item();
    last = loss.item();
    tape.backward(loss);
    adam_step(params, adam, 1e-2);
  }
  CHECK(first == doctest::Approx(std::log(4.0)).epsilon(0.25));
  CHECK(last < first);
}

TEST_CASE("evaluate") {
  const ModelConfig mc = tiny_model();
  Rng rng(9);
  ModelParams params = init_params(mc, rng);
  auto split = tiny_split(6, 4);
  EvalResult r = evaluate(params, mc, split, tiny_spectro(), 0.0);
  REQUIRE(r.predictions.size() == 6);
  REQUIRE(r.correct.size() == 6);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(r.predictions[i] >= 0);
    CHECK(r.predictions[i] < 4);
    CHECK(r.correct[i] == (r.predictions[i] == split[i].label ? 1 : 0));
    correct += std::size_t(r.correct[i]);
  }
  CHECK(r.accuracy == doctest::Approx(double(correct) / 6.0));
}

TEST_CASE("metrics_to_csv") {
  std::vector<EpochMetrics> ms(2);
  ms[0] = {0, 1e-4, 1.25, 0.5, 0.25, 3.5};
  ms[1] = {1, 5e-5, 0.75, 0.625, 0.5, 3.25};
  std::istringstream in(metrics_to_csv(ms));
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,lr,train_loss,train_acc,val_acc,seconds");
  std::getline(in, line);
  CHECK(line == "0,0.0001,1.25,0.5,0.25,3.5");
  std::getline(in, line);
  CHECK(line == "1,5.0000000000000002e-05,0.75,0.625,0.5,3.25");
  CHECK(!std::getline(in, line));
}

TEST_CASE("chi_square_1dof_sf matches a quadrature oracle") {
  CHECK(chi_square_1dof_sf(0.0) == 1.0);
  CHECK(chi_square_1dof_sf(-1.0) == 1.0);
  for (double x : {0.5, 1.0, 2.0, 5.0, 13.0}) {
    // Simpson's rule over the density exp(-t/2) / sqrt(2 pi t).
    const double hi = x + 80.0;
    const int steps = 400000;  // even
    const double h = (hi - x) / steps;
    auto pdf = [](double t) {
      return std::exp(-t / 2.0) / std::sqrt(2.0 * M_PI * t);
    };
    double acc = pdf(x) + pdf(hi);
    for (int i = 1; i < steps; ++i)
      acc += pdf(x + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    const double integral = acc * h / 3.0;
    CHECK(std::abs(chi_square_1dof_sf(x) - integral) <= 1e-6);
  }
}

TEST_CASE("mcnemar") {
  SUBCASE("identical classifiers show no effect") {
    std::vector<int> a = {1, 0, 1, 1, 0};
    auto r = mcnemar(a, a);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == 1.0);
    CHECK(r.table.n01 == 0);
    CHECK(r.table.n10 == 0);
    CHECK(r.table.n00 + r.table.n11 == 5);
    CHECK(!r.significant_at(0.05));
  }
  SUBCASE("15 one-sided disagreements are significant") {
    std::vector<int> a(20, 0), b(20, 0);
    for (int i = 0; i < 15; ++i) b[i] = 1;  // b right where a is wrong
    for (int i = 15; i < 18; ++i) a[i] = b[i] = 1;
    auto r = mcnemar(a, b);
    CHECK(r.table.n01 == 15);
    CHECK(r.table.n10 == 0);
    CHECK(r.table.n11 == 3);
    CHECK(r.table.n00 == 2);
    CHECK(r.statistic == doctest::Approx(14.0 * 14.0 / 15.0));
    CHECK(r.p_value == doctest::Approx(chi_square_1dof_sf(r.statistic)));
    CHECK(r.significant_at(0.05));
    CHECK(r.significant_at(0.001));
  }
  SUBCASE("the test is symmetric in its arguments") {
    std::vector<int> a = {1, 1, 0, 0, 1, 0, 1, 1};
    std::vector<int> b = {0, 1, 1, 0, 1, 1, 0, 1};
    auto r1 = mcnemar(a, b);
    auto r2 = mcnemar(b, a);
    CHECK(r1.statistic == r2.statistic);
    CHECK(r1.p_value == r2.p_value);
    CHECK(r1.table.n01 == r2.table.n10);
  }
  SUBCASE("a single disagreement is absorbed by the continuity correction") {
    std::vector<int> a = {1, 1, 1};
    std::vector<int> b = {1, 1, 0};
    auto r = mcnemar(a, b);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == 1.0);
  }
  SUBCASE("mismatched lengths are rejected") {
    CHECK_THROWS_AS(mcnemar({1, 0}, {1}), std::invalid_argument);
  }
}

TEST_CASE("trained parameters survive a checkpoint round trip") {
  const ModelConfig mc = tiny_model();
  auto train_split = tiny_split(8, 1);
  auto val_split = tiny_split(4, 2);
  TrainResult r = train(mc, train_split, val_split, tiny_train(1));

  const std::string path =
      (std::filesystem::temp_directory_path() / "septr_train.spck").string();
  save_checkpoint(path, r.best_params, mc);
  ModelParams loaded = load_checkpoint(path, mc);
  std::remove(path.c_str());

  EvalResult before = evaluate(r.best_params, mc, val_split, tiny_spectro(), 0.0);
  EvalResult after = evaluate(loaded, mc, val_split, tiny_spectro(), 0.0);
  CHECK(before.accuracy == after.accuracy);
  CHECK(before.predictions == after.predictions);
}
