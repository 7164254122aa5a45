#include <doctest.h>

#include <cmath>

#include "rlattack/perturb.hpp"

using namespace rlattack;

namespace {

// Two-action softmax victim on lineworld with logits (x, -x).
Policy sign_victim() {
  Mlp net({1, 2}, std::vector<Activation>{}, Head::softmax);
  net.params() << 1.0, -1.0, 0.0, 0.0;
  return Policy(net);
}

Policy linear_continuous(double w, double b) {
  Mlp net({1, 1}, std::vector<Activation>{}, Head::linear);
  net.params() << w, b;
  return Policy(net, -1.0, 1.0);
}

}  // namespace

TEST_CASE("normalized norms use the declared ranges") {
  const auto env = make_env("catch");
  const std::vector<double> d{1.0, 0.0, -0.5, 0.0};
  CHECK(normalized_linf(env->spec(), d) == doctest::Approx(0.25));
  CHECK(normalized_l2(env->spec(), d) == doctest::Approx(0.26925824035672524));
}

TEST_CASE("targeted fgsm steps against the cross-entropy gradient") {
  const auto env = make_env("lineworld");
  const Policy v = sign_victim();
  REQUIRE(v.greedy(std::vector<double>{0.5}).index() == 0);
  const CraftResult r = fgsm_targeted(v, env->spec(), {0.5}, Action::discrete(1), 0.1);
  CHECK(r.perturbed[0] == doctest::Approx(-1.5));
  CHECK(r.success);
  CHECK(r.linf == doctest::Approx(0.1));
  CHECK(r.iters_used == 1);
}

TEST_CASE("fgsm leaves dimensions with zero gradient untouched") {
  const auto env = make_env("catch");
  Mlp net({4, 3}, std::vector<Activation>{}, Head::softmax);
  net.params().setZero();
  net.params()(0) = 1.0;  // logit 0 depends on ball_x only
  const Policy v(net);
  const CraftResult r = fgsm_targeted(v, env->spec(), {5, 5, 1, 5}, Action::discrete(1), 0.1);
  CHECK(r.delta[0] != 0.0);
  CHECK(r.delta[1] == 0.0);
  CHECK(r.delta[2] == 0.0);
  CHECK(r.delta[3] == 0.0);
}

TEST_CASE("c&w discrete attack flips a linear victim inside the budget") {
  const auto env = make_env("lineworld");
  const Policy v = sign_victim();
  PerturbConfig cfg;
  const CraftResult r = craft_discrete(v, env->spec(), {0.5}, 1, cfg);
  CHECK(r.success);
  CHECK(r.perturbed[0] < 0.0);
  CHECK(r.linf <= cfg.eps_inf);
  CHECK(v.greedy(r.perturbed).index() == 1);
}

TEST_CASE("crafting returns immediately when the target is already greedy") {
  const auto env = make_env("lineworld");
  const CraftResult r = craft_discrete(sign_victim(), env->spec(), {0.5}, 0, {});
  CHECK(r.success);
  CHECK(r.iters_used == 0);
  CHECK(r.linf == 0.0);
}

TEST_CASE("unreachable targets fail without leaving the budget") {
  const auto env = make_env("lineworld");
  PerturbConfig cfg;
  cfg.iters = 50;
  cfg.restarts = 2;
  const CraftResult r = craft_discrete(sign_victim(), env->spec(), {5.0}, 1, cfg);
  CHECK_FALSE(r.success);
  CHECK(r.linf <= cfg.eps_inf);
  CHECK(r.iters_used == 150);
}

TEST_CASE("perturbations stay inside the state ranges at the boundary") {
  const auto env = make_env("lineworld");
  const CraftResult r = fgsm_targeted(sign_victim(), env->spec(), {-9.5}, Action::discrete(1), 0.1);
  CHECK(r.perturbed[0] == -10.0);
  CHECK(r.linf <= 0.1);
  const CraftResult r2 = fgsm_targeted(sign_victim(), env->spec(), {9.8}, Action::discrete(0), 0.1);
  CHECK(r2.perturbed[0] == 10.0);
}

TEST_CASE("continuous c&w converges to the closed-form minimizer on a linear victim") {
  // objective (w (s + W u) + b - a')^2 + lambda u^2, minimized at u* = r v / (lambda + v^2)
  const auto env = make_env("lineworld");
  const double w = 0.1, b = 0.0, s = 1.0, target = 0.2, lambda = 0.5;
  const Policy v = linear_continuous(w, b);
  PerturbConfig cfg;
  cfg.lambda = lambda;
  cfg.restarts = 0;
  cfg.tol_cont = 1e-12;
  cfg.iters = 20000;
  cfg.lr = 1e-3;
  const double width = 20.0;
  const double r = target - (w * s + b);
  const double vv = w * width;
  const double u_star = r * vv / (lambda + vv * vv);
  const CraftResult res = craft_continuous(v, env->spec(), {s}, {target}, cfg);
  CHECK_FALSE(res.success);
  CHECK(res.delta[0] / width == doctest::Approx(u_star).epsilon(1e-4));
}

TEST_CASE("continuous crafting rejects targets outside the action bounds") {
  const auto env = make_env("lineworld");
  CHECK_THROWS_AS(craft_continuous(linear_continuous(0.1, 0), env->spec(), {0.0}, {1.5}, {}), std::out_of_range);
  CHECK_THROWS_AS(craft_discrete(sign_victim(), env->spec(), {0.0}, 2, {}), std::out_of_range);
  CHECK_THROWS_AS(craft_discrete(linear_continuous(0.1, 0), env->spec(), {0.0}, 0, {}), std::invalid_argument);
}

TEST_CASE("least preferred targets") {
  const Policy d = sign_victim();
  CHECK(least_preferred(d, std::vector<double>{0.5}).index() == 1);
  CHECK(least_preferred(d, std::vector<double>{-0.5}).index() == 0);
  const Policy c = linear_continuous(0.1, 0.0);
  CHECK(least_preferred(c, std::vector<double>{2.0}).values()[0] == -1.0);
  CHECK(least_preferred(c, std::vector<double>{-2.0}).values()[0] == 1.0);
}

TEST_CASE("perturb config parsing and validation") {
  Config c;
  c.set("eps_inf", "0.05");
  c.set("method", "fgsm");
  const PerturbConfig p = PerturbConfig::from_config(c);
  CHECK(p.eps_inf == 0.05);
  CHECK(p.method == CraftMethod::fgsm);
  c.set("iters", "0");
  CHECK_THROWS_AS(PerturbConfig::from_config(c), ConfigError);
  CHECK_THROWS_AS(parse_craft_method("pgd"), ConfigError);
}

TEST_CASE("craft dispatches on method and victim kind") {
  const auto env = make_env("lineworld");
  PerturbConfig cfg;
  cfg.method = CraftMethod::fgsm;
  const CraftResult f = craft(sign_victim(), env->spec(), {0.5}, Action::discrete(1), cfg);
  CHECK(f.iters_used == 1);
  cfg.method = CraftMethod::cw;
  const CraftResult c = craft(linear_continuous(0.1, 0.0), env->spec(), {0.0}, Action::continuous(0.1), cfg);
  CHECK(c.success);
  CHECK(std::abs(linear_continuous(0.1, 0.0).greedy(c.perturbed).values()[0] - 0.1) <= cfg.tol_cont);
}
