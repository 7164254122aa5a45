#pragma once

#include <string_view>
#include <vector>

#include "rlattack/agent.hpp"
#include "rlattack/config.hpp"
#include "rlattack/env.hpp"

namespace rlattack {

enum class CraftMethod { cw, fgsm };
std::string_view to_string(CraftMethod m);
CraftMethod parse_craft_method(std::string_view s);

/// Budgets are in normalized state units: a perturbation of size 1 along
/// dimension i spans that dimension's whole declared range.
struct PerturbConfig {
  double eps_inf = 0.1;
  double lambda = 0.01;
  int iters = 300;
  double lr = 0.01;
  double kappa = 0.1;
  double tol_cont = 0.05;
  /// Extra C&W runs from random starting points inside the budget.
  int restarts = 4;
  CraftMethod method = CraftMethod::cw;

  /// Reads `perturb.*`-style keys (prefix already stripped).
  static PerturbConfig from_config(const Config& c);
  void validate() const;
};

struct CraftResult {
  StateVec delta;      // raw state units
  StateVec perturbed;  // s + delta, inside the state ranges
  bool success = false;
  double l2 = 0.0;     // normalized units
  double linf = 0.0;   // normalized units
  int iters_used = 0;
};

/// Norms of `delta` in normalized units of `spec`.
double normalized_linf(const EnvSpec& spec, std::span<const double> delta);
double normalized_l2(const EnvSpec& spec, std::span<const double> delta);

/// C&W margin attack: makes the victim's greedy action equal `target`.
CraftResult craft_discrete(const Policy& victim, const EnvSpec& spec, const StateVec& s, int target,
                           const PerturbConfig& cfg);

/// Pulls a deterministic victim's output toward `target`.
CraftResult craft_continuous(const Policy& victim, const EnvSpec& spec, const StateVec& s,
                             const std::vector<double>& target, const PerturbConfig& cfg);

/// One-step targeted FGSM with sign(0) = 0.
CraftResult fgsm_targeted(const Policy& victim, const EnvSpec& spec, const StateVec& s, const Action& target,
                          double eps);

/// Dispatches on `cfg.method` and on the victim kind.
CraftResult craft(const Policy& victim, const EnvSpec& spec, const StateVec& s, const Action& target,
                  const PerturbConfig& cfg);

/// Whether the victim's greedy action on `s` counts as `target`.
bool hits_target(const Policy& victim, std::span<const double> s, const Action& target, double tol_cont);

/// Target used by the untargeted baselines: the least preferred action for
/// discrete victims, the action bound farthest from the current output for
/// continuous ones.
Action least_preferred(const Policy& victim, std::span<const double> s);

}  // namespace rlattack
