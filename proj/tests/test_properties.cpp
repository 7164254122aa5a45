#include <doctest.h>

#include "properties.hpp"

TEST_CASE("property: attack counts respect budgets") {
  const auto t = props::budget_caps(1000, 101);
  CHECK(t.cases == 1000);
  CHECK_MESSAGE(t.failures == 0, t.first_failure);
}

TEST_CASE("property: adversary reward is the exact negation") {
  const auto t = props::reward_negation(1000, 202);
  CHECK(t.cases == 1000);
  CHECK_MESSAGE(t.failures == 0, t.first_failure);
}

TEST_CASE("property: trigger thresholds are monotone at a fixed state") {
  const auto t = props::threshold_monotonicity(1000, 303);
  CHECK(t.cases == 1000);
  CHECK_MESSAGE(t.failures == 0, t.first_failure);
}

TEST_CASE("property: crafted perturbations are clamped to the budget and ranges") {
  const auto t = props::perturbation_clamping(1000, 404);
  CHECK(t.cases == 1000);
  CHECK_MESSAGE(t.failures == 0, t.first_failure);
}
