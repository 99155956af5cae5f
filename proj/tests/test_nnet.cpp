#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "oracle_checks.hpp"

#include "nclab/errors.hpp"
#include "nclab/nnet.hpp"

#include <cmath>
#include <random>

using namespace nclab;

namespace {

Eigen::MatrixXd random_inputs(std::mt19937_64& rng, Index n, Index d) {
  std::normal_distribution<double> z;
  return Eigen::MatrixXd::NullaryExpr(n, d, [&] { return z(rng); });
}

Eigen::VectorXi random_labels(std::mt19937_64& rng, Index n, int K = 2) {
  std::uniform_int_distribution<int> u(0, K - 1);
  return Eigen::VectorXi::NullaryExpr(n, [&] { return u(rng); });
}

}  // namespace

TEST_CASE("initialisation shapes and determinism") {
  const Architecture arch;
  const ModelState m = init_model(arch, 1);
  REQUIRE(m.hidden.size() == 2);
  CHECK(m.hidden[0].weights.rows() == 64);
  CHECK(m.hidden[0].weights.cols() == 2);
  CHECK(m.hidden[1].weights.rows() == 64);
  CHECK(m.hidden[1].weights.cols() == 64);
  CHECK(m.classifier_weights.rows() == 2);
  CHECK(m.classifier_weights.cols() == 64);
  CHECK(m.hidden[0].bias.size() == 64);
  CHECK(m.classifier_bias.size() == 2);
  CHECK(m.num_parameters() == 64 * 2 + 64 + 64 * 64 + 64 + 2 * 64 + 2);
  CHECK(m.architecture() == arch);
  CHECK(init_model(arch, 1) == m);
  CHECK_FALSE(init_model(arch, 2) == m);
}

TEST_CASE("he-normal variance") {
  const ModelState m = init_model(Architecture{8, {4096}, 2}, 5);
  const Eigen::ArrayXd w = m.hidden[0].weights.reshaped().array();
  const double var = (w - w.mean()).square().mean();
  CHECK(std::abs(var - 2.0 / 8.0) < 0.2 * 2.0 / 8.0);
}

TEST_CASE("forward pass by hand") {
  ModelState m = init_model(Architecture{2, {2}, 2}, 0);
  m.hidden[0].weights = Eigen::Matrix2d::Identity();
  m.hidden[0].bias.setZero();
  m.classifier_weights << 1, 2, 3, 4;
  m.classifier_bias << 0.5, -0.5;
  Eigen::MatrixXd x(1, 2);
  x << 1, 2;
  const ForwardPass p = forward(m, x);
  CHECK(p.features(0, 0) == 1.0);
  CHECK(p.features(0, 1) == 2.0);
  CHECK(p.logits(0, 0) == 5.5);
  CHECK(p.logits(0, 1) == 10.5);

  ModelState zero = m.zeros_like();
  const Eigen::MatrixXd probs = softmax(forward(zero, x).logits);
  CHECK(probs(0, 0) == 0.5);
  CHECK(probs(0, 1) == 0.5);

  std::mt19937_64 rng(4);
  const ModelState r = init_model(Architecture{3, {5, 6}, 3}, 9);
  const Eigen::MatrixXd xs = random_inputs(rng, 7, 3);
  CHECK(forward(r, xs).logits == forward(r, xs).logits);
  Eigen::MatrixXd bad = xs;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(forward(r, bad), NumericError);
  CHECK_THROWS_AS(forward(r, Eigen::MatrixXd::Zero(2, 4)), ContractError);
}

TEST_CASE("loss values") {
  ModelState zero = init_model(Architecture{2, {3}, 2}, 0).zeros_like();
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = random_inputs(rng, 5, 2);
  CHECK(cross_entropy(zero, x, random_labels(rng, 5)) == doctest::Approx(std::log(2.0)));

  const ModelState m = init_model(Architecture{2, {8}, 2}, 3);
  const Eigen::VectorXi y = random_labels(rng, 5);
  Eigen::MatrixXd twice(10, 2);
  twice << x, x;
  Eigen::VectorXi y2(10);
  y2 << y, y;
  const auto a = loss_and_gradients(m, x, y);
  const auto b = loss_and_gradients(m, twice, y2);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  CHECK(oracle::relative_error(oracle::flatten(a.gradients), oracle::flatten(b.gradients)) < 1e-14);
}

TEST_CASE("every gradient coordinate matches central differences") {
  std::mt19937_64 rng(21);
  for (int it = 0; it < 5; ++it) {
    ModelState m = init_model(Architecture{2, {16}, 2}, rng());
    std::normal_distribution<double> z;
    for (auto& v : m.hidden[0].bias) v = 0.1 * z(rng);
    const Eigen::MatrixXd x = random_inputs(rng, 10, 2);
    const Eigen::VectorXi y = random_labels(rng, 10);
    const auto analytic = oracle::flatten(loss_and_gradients(m, x, y).gradients);
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& p) { return cross_entropy(oracle::unflatten(p, m), x, y); },
        oracle::flatten(m), 1e-4);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
      CHECK(std::abs(analytic[i] - numeric[i]) <= 1e-5 * scale + 1e-9);
    }
  }
}

TEST_CASE("gradient check on randomised 2-16-2 instances") {
  for (const auto& r : oracle::gradient_checks(99, 20)) {
    INFO(r.name << " max relative error " << r.max_error);
    CHECK(r.pass());
  }
}

TEST_CASE("sgd steps") {
  ModelState m = init_model(Architecture{2, {3}, 2}, 1);
  ModelState g = m.zeros_like();
  zip_parameters(g, g, [](auto& x, const auto&) { x.setConstant(0.5); });

  TrainHyper plain;
  plain.learning_rate = 0.1;
  plain.momentum = 0.0;
  const ModelState stepped = sgd_step(m, g, plain);
  const auto before = oracle::flatten(m), after = oracle::flatten(stepped);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == doctest::Approx(before[i] - 0.05));

  CHECK(sgd_step(m, m.zeros_like(), plain) == m);

  TrainHyper heavy;
  heavy.learning_rate = 0.1;
  heavy.momentum = 0.9;
  heavy.weight_decay = 0.01;
  SgdMomentum opt(m, heavy);
  ModelState w = m;
  opt.step(w, g);
  opt.step(w, g);
  // v1 = g + wd w0, w1 = w0 - lr v1; v2 = 0.9 v1 + g + wd w1, w2 = w1 - lr v2
  const auto w2 = oracle::flatten(w);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double w0 = before[i];
    const double v1 = 0.5 + 0.01 * w0;
    const double w1 = w0 - 0.1 * v1;
    const double v2 = 0.9 * v1 + 0.5 + 0.01 * w1;
    CHECK(w2[i] == doctest::Approx(w1 - 0.1 * v2).epsilon(1e-13));
  }
}

TEST_CASE("training contract") {
  std::mt19937_64 rng(2);
  Eigen::MatrixXd x = random_inputs(rng, 200, 2);
  Eigen::VectorXi y(200);
  for (Index i = 0; i < 200; ++i) {
    y[i] = x(i, 0) > 0 ? 1 : 0;
    x(i, 0) += y[i] ? 1.0 : -1.0;
  }
  TrainHyper hyper;
  hyper.max_epochs = 1;
  const ModelState init = init_model(Architecture{2, {64, 64}, 2}, 3);
  const TrainResult one = train(init, x, y, x, y, hyper);
  CHECK(one.final_state == one.early_stopped);
  CHECK(one.history.size() == 1);
  CHECK(one.early_stopped_epoch == 1);

  hyper.max_epochs = 200;
  Index calls = 0;
  const TrainResult full = train(init, x, y, x, y, hyper, [&](const EpochStats& s, const ModelState&) {
    CHECK(s.epoch == ++calls);
  });
  CHECK(calls == 200);
  CHECK(full.history.size() == 200);
  CHECK(full.history.back().train_accuracy == 1.0);
  const double best = full.history[static_cast<std::size_t>(full.early_stopped_epoch - 1)].val_loss;
  for (const auto& s : full.history) CHECK(best <= s.val_loss);
  CHECK(cross_entropy(full.early_stopped, x, y) == doctest::Approx(best).epsilon(1e-12));

  const TrainResult again = train(init, x, y, x, y, hyper);
  CHECK(again.final_state == full.final_state);
}

TEST_CASE("divergence is reported with the history so far") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = random_inputs(rng, 50, 2) * 1e3;
  const Eigen::VectorXi y = random_labels(rng, 50);
  TrainHyper hyper;
  hyper.learning_rate = 1e6;
  hyper.max_epochs = 50;
  try {
    train(init_model(Architecture{2, {8}, 2}, 1), x, y, x, y, hyper);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch().has_value());
    CHECK(e.history().size() + 1 == *e.epoch());
  }
}

TEST_CASE("prediction rules") {
  ModelState m = init_model(Architecture{2, {2}, 2}, 0);
  m.hidden[0].weights = Eigen::Matrix2d::Identity();
  m.hidden[0].bias.setZero();
  m.classifier_weights = Eigen::Matrix2d::Identity();
  m.classifier_bias.setZero();
  Eigen::MatrixXd x(2, 2);
  x << 2.0, 0.0,  // logits (2, 0)
      1.0, 1.0;   // equal logits
  const Prediction p = predict(m, x);
  CHECK(p.labels[0] == 0);
  CHECK(p.labels[1] == 0);

  std::mt19937_64 rng(3);
  const ModelState r = init_model(Architecture{2, {5}, 3}, 3);
  const Eigen::MatrixXd probs = softmax(forward(r, random_inputs(rng, 20, 2)).logits);
  CHECK((probs.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(probs.minCoeff() >= 0.0);
  CHECK(probs.maxCoeff() <= 1.0);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = testing_support::scratch_dir("nnet_ckpt");
  const ModelState m = init_model(Architecture{3, {4, 5}, 2}, 8);
  save_model(m, dir / "m.json");
  CHECK(load_model(dir / "m.json") == m);

  std::ofstream(dir / "bad.json") << R"({"format":"nclab-model","version":1})";
  CHECK_THROWS_AS(load_model(dir / "bad.json"), ParseError);
  CHECK_THROWS_AS(load_model(dir / "nothing.json"), IoError);
}
