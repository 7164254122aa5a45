#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rlattack/nn.hpp"
#include "rlattack/rng.hpp"
#include "test_util.hpp"

using namespace rlattack;

namespace {

Mlp fixed_242(Activation act, Head head) {
  Mlp net({2, 4, 2}, act, head);
  for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()(i) = 0.1 * static_cast<double>(i) - 0.7;
  return net;
}

}  // namespace

TEST_CASE("fixed 2-4-2 network forward") {
  const std::vector<double> x{0.5, -1.5};
  const Mlp soft = fixed_242(Activation::tanh, Head::softmax);
  REQUIRE(soft.param_count() == 22);
  const Eigen::VectorXd z = soft.logits(x);
  CHECK(z(0) == doctest::Approx(1.9316010247196929).epsilon(1e-14));
  CHECK(z(1) == doctest::Approx(2.1105511528096548).epsilon(1e-14));
  const Eigen::VectorXd p = soft.forward(x);
  CHECK(p(0) == doctest::Approx(0.45538147328494416).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(0.5446185267150558).epsilon(1e-14));

  const Mlp lin = fixed_242(Activation::relu, Head::linear);
  const Eigen::VectorXd y = lin.forward(x);
  CHECK(y(0) == doctest::Approx(1.94).epsilon(1e-14));
  CHECK(y(1) == doctest::Approx(2.12).epsilon(1e-14));
}

TEST_CASE("forward rejects wrong input length") {
  const Mlp net = fixed_242(Activation::tanh, Head::linear);
  CHECK_THROWS_AS(net.forward(std::vector<double>{1.0}), DimensionError);
  CHECK_THROWS_AS(Mlp({2}, Activation::tanh, Head::linear), DimensionError);
}

TEST_CASE("softmax is stable for large logits") {
  Eigen::VectorXd z(3);
  z << 1000.0, 1000.0, -1000.0;
  const Eigen::VectorXd p = softmax(z);
  CHECK(p(0) == doctest::Approx(0.5));
  CHECK(p(2) == 0.0);
  CHECK(p.allFinite());
}

TEST_CASE("adam first step moves each weight by lr times the gradient sign") {
  Eigen::VectorXd params = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd g(3);
  g << 0.5, -2.0, 0.0;
  OptimizerState st;
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  optimizer_step(params, g, st, cfg);
  CHECK(params(0) == doctest::Approx(0.900000002).epsilon(1e-15));
  CHECK(params(1) == doctest::Approx(1.0999999995).epsilon(1e-15));
  CHECK(params(2) == 1.0);
  CHECK(st.t == 1);
}

TEST_CASE("optimizer rejects non-finite gradients and leaves params untouched") {
  Eigen::VectorXd params = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd g(2);
  g << 1.0, std::nan("");
  OptimizerState st;
  CHECK_THROWS_AS(optimizer_step(params, g, st, {}), TrainingError);
  CHECK(params == Eigen::VectorXd::Ones(2));
}

TEST_CASE("backward agrees with central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Head head = trial % 3 == 0 ? Head::softmax : (trial % 3 == 1 ? Head::tanh : Head::linear);
    const Activation act = trial % 2 ? Activation::tanh : Activation::relu;
    Mlp net = Mlp::xavier({3, 5, 4}, act, head, 100 + trial);
    for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()(i) += 0.1 * rng.normal();
    const auto err = testutil::gradient_check(net, rng);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("model save/load round trip is exact") {
  const auto dir = testutil::temp_dir("nn");
  Mlp net = Mlp::xavier({3, 8, 8, 2}, Activation::tanh, Head::softmax, 5);
  net.input_normalizer().mean = Eigen::Vector3d(0.5, -1.0, 2.0);
  net.input_normalizer().std = Eigen::Vector3d(1.5, 0.25, 3.0);
  Normalizer t = Normalizer::identity(2);
  t.mean(1) = 4.0;
  net.target_normalizer() = t;
  save_model(net, dir / "m.mlp");
  const Mlp back = load_model(dir / "m.mlp");
  CHECK(back.sizes() == net.sizes());
  CHECK(back.head() == net.head());
  CHECK(back.activations() == net.activations());
  CHECK(back.params() == net.params());
  CHECK(back.input_normalizer().mean == net.input_normalizer().mean);
  CHECK(back.input_normalizer().std == net.input_normalizer().std);
  REQUIRE(back.target_normalizer().has_value());
  CHECK(back.target_normalizer()->mean == t.mean);
  CHECK(params_hash(back) == params_hash(net));
  CHECK_NOTHROW(load_model(dir / "m.mlp", {3, 8, 8, 2}));
  CHECK_THROWS_AS(load_model(dir / "m.mlp", {3, 8, 2}), DimensionError);
}

TEST_CASE("corrupt model files are rejected") {
  const auto dir = testutil::temp_dir("nn_bad");
  {
    std::ofstream(dir / "junk.mlp") << "hello world, not a model";
  }
  CHECK_THROWS_AS(load_model(dir / "junk.mlp"), ModelFormatError);
  const Mlp net = Mlp::xavier({2, 3, 1}, Activation::tanh, Head::linear, 1);
  save_model(net, dir / "ok.mlp");
  const auto size = std::filesystem::file_size(dir / "ok.mlp");
  std::filesystem::resize_file(dir / "ok.mlp", size - 5);
  CHECK_THROWS_AS(load_model(dir / "ok.mlp"), ModelFormatError);
  CHECK_THROWS(load_model(dir / "missing.mlp"));
}

TEST_CASE("fit drives a linear regression loss down") {
  Rng rng(3);
  Eigen::MatrixXd x(2, 256), y(1, 256);
  for (int i = 0; i < 256; ++i) {
    x(0, i) = rng.uniform(-1, 1);
    x(1, i) = rng.uniform(-1, 1);
    y(0, i) = 0.7 * x(0, i) - 0.3 * x(1, i) + 0.1;
  }
  Mlp net = Mlp::xavier({2, 16, 1}, Activation::tanh, Head::linear, 2);
  const FitLog log = fit(net, x, y, Loss::mse, {.epochs = 200, .batch = 32, .opt = {.lr = 1e-2}});
  CHECK(log.epoch_loss.back() < 1e-3);
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
}

TEST_CASE("normalizer fit keeps constant dimensions well defined") {
  Eigen::MatrixXd s(2, 3);
  s << 1, 2, 3, 5, 5, 5;
  const Normalizer n = Normalizer::fit(s);
  CHECK(n.mean(0) == 2.0);
  CHECK(n.std(1) == 1.0);
  const Eigen::VectorXd z = n.normalize(Eigen::Vector2d(2.0, 5.0));
  CHECK(z(0) == 0.0);
  CHECK(z(1) == 0.0);
  CHECK(n.denormalize(z) == Eigen::Vector2d(2.0, 5.0));
}
