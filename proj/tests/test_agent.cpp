#include <doctest.h>

#include <cmath>

#include "rlattack/agent.hpp"

using namespace rlattack;

TEST_CASE("argmax and argmin resolve ties to the lowest index") {
  Eigen::VectorXd v(4);
  v << 0.3, 0.7, 0.7, 0.3;
  CHECK(argmax_lowest(v) == 1);
  CHECK(argmin_lowest(v) == 0);
}

TEST_CASE("discounted returns-to-go") {
  const std::vector<double> r{1.0, 1.0, 1.0};
  const auto g = discounted_returns(r, 0.5);
  CHECK(g == std::vector<double>{1.75, 1.5, 1.0});
  CHECK(discounted_returns(std::vector<double>{}, 0.9).empty());
}

TEST_CASE("discrete policy greedy and sampled actions") {
  Mlp net({1, 3}, std::vector<Activation>{}, Head::softmax);
  net.params() << 0, 0, 0, 0.0, std::log(3.0), 0.0;  // logits 0, ln3, 0 -> p = 0.2, 0.6, 0.2
  const Policy p(net);
  CHECK(p.is_discrete());
  const std::vector<double> s{0.4};
  CHECK(p.greedy(s).index() == 1);
  CHECK(p.distribution(s)(1) == doctest::Approx(0.6));
  CHECK_THROWS_AS(p.act(s, ActMode::sample), std::invalid_argument);
  Rng rng(4);
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 20000; ++i) ++counts[p.act(s, ActMode::sample, &rng).index()];
  CHECK(counts[1] / 20000.0 == doctest::Approx(0.6).epsilon(0.03));
  CHECK(counts[0] / 20000.0 == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("continuous policy clamps into the action bounds") {
  Mlp net({1, 1}, std::vector<Activation>{}, Head::linear);
  net.params() << 2.0, 0.5;
  const Policy p(net, -1.0, 1.0);
  CHECK_FALSE(p.is_discrete());
  CHECK(p.greedy(std::vector<double>{0.1}).values()[0] == doctest::Approx(0.7));
  CHECK(p.greedy(std::vector<double>{3.0}).values()[0] == 1.0);
  CHECK(p.greedy(std::vector<double>{-3.0}).values()[0] == -1.0);
  CHECK_THROWS_AS(p.distribution(std::vector<double>{0.0}), std::logic_error);
}

TEST_CASE("range normalizer maps declared ranges onto [-1, 1]") {
  const auto env = make_env("catch");
  const Normalizer n = range_normalizer(env->spec());
  const Eigen::VectorXd lo = n.normalize(Eigen::Vector4d(0, 0, -1, 0));
  const Eigen::VectorXd hi = n.normalize(Eigen::Vector4d(10, 10, 1, 10));
  for (int i = 0; i < 4; ++i) {
    CHECK(lo(i) == doctest::Approx(-1.0));
    CHECK(hi(i) == doctest::Approx(1.0));
  }
}

TEST_CASE("expert evaluation on lanekeep never crashes") {
  const auto env = make_env("lanekeep");
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const EvalStats st = evaluate(*env, [&](std::span<const double> s) { return env->expert(s); }, seeds);
  CHECK(st.crash_rate == 0.0);
  CHECK(st.mean_length == 400.0);
  CHECK_FALSE(st.catch_rate.has_value());
}

TEST_CASE("behaviour cloning the catch expert gives a competent victim") {
  const auto env = make_env("catch");
  BcConfig cfg;
  cfg.episodes = 120;
  cfg.fit.epochs = 40;
  const BcResult res = train_bc(*env, cfg);
  CHECK(res.samples > 0);
  CHECK(res.policy.is_discrete());
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const EvalStats st = evaluate(res.policy, *env, seeds);
  REQUIRE(st.catch_rate.has_value());
  CHECK(*st.catch_rate >= 0.9);
}

TEST_CASE("behaviour cloning is deterministic for a fixed seed") {
  const auto env = make_env("lineworld");
  BcConfig cfg;
  cfg.episodes = 10;
  cfg.fit.epochs = 3;
  const BcResult a = train_bc(*env, cfg);
  const BcResult b = train_bc(*env, cfg);
  CHECK(params_hash(a.policy.net()) == params_hash(b.policy.net()));
}

TEST_CASE("reinforce improves on a small problem") {
  const auto env = make_env("lineworld");
  ReinforceConfig cfg;
  cfg.iterations = 40;
  cfg.episodes_per_iter = 8;
  cfg.hidden = {16};
  cfg.lr = 1e-2;
  const ReinforceResult res = train_reinforce(*env, cfg);
  REQUIRE(res.curve.size() == 40);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) first += res.curve[static_cast<std::size_t>(i)];
  for (int i = 35; i < 40; ++i) last += res.curve[static_cast<std::size_t>(i)];
  CHECK(last > first);
}
