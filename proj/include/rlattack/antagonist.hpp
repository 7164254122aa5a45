#pragma once

#include <cstdint>
#include <vector>

#include "rlattack/agent.hpp"
#include "rlattack/config.hpp"
#include "rlattack/episode.hpp"

namespace rlattack {

/// u_adv: s -> (p, a'). One linear-output network; output 0 is the gate
/// logit, the rest parameterize the target action (softmax logits for
/// discrete victims, a tanh-squashed mean for continuous ones).
class AntagonistPolicy {
 public:
  AntagonistPolicy(Mlp net, ActionSpace actions);
  static AntagonistPolicy init(const EnvSpec& spec, const std::vector<int>& hidden, double gate_bias,
                               std::uint64_t seed);

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  const ActionSpace& actions() const { return actions_; }

 private:
  Mlp net_;
  ActionSpace actions_;
};

struct AntDecision {
  double p = 0.0;
  /// Target distribution (discrete) or target mean (continuous).
  Eigen::VectorXd target;
  /// Greedy target: argmax for discrete, the mean for continuous.
  Action greedy = Action::discrete(0);
};

AntDecision ant_decide(const AntagonistPolicy& ant, std::span<const double> s);

struct AntStep {
  StateVec s;
  double p = 0.0;
  bool gate_active = false;  // budget left, so the gate was consulted
  bool gate_open = false;    // attack attempted at this step
  Action target = Action::discrete(0);
  double r_adv = 0.0;
  StateVec s_next;
};

enum class AntMode { eval, train };

struct AntRunConfig {
  int budget = 3;
  CraftMode craft_mode = CraftMode::full;
  AntMode mode = AntMode::eval;
  /// Exploration std of continuous targets while training.
  double target_std = 0.2;
};

struct AntEpisode {
  std::vector<AntStep> steps;
  EpisodeReport report;
};

/// In eval mode the gate opens iff p > 0.5 and the budget is not used up;
/// in train mode it is sampled from Bernoulli(p) under the same budget.
/// Failed crafting still consumes budget.
AntEpisode run_antagonist_episode(const Env& env, const Policy& victim, const AntagonistPolicy& ant,
                                  const AntRunConfig& run, const PerturbConfig& perturb, std::uint64_t seed,
                                  Rng* rng = nullptr);

struct AntTrainConfig {
  int budget = 3;
  int iterations = 300;
  int episodes_per_iter = 16;
  double gamma = 0.99;
  double lr = 3e-3;
  double gate_entropy = 0.01;
  double target_entropy = 0.01;
  double target_std = 0.2;
  double gate_bias = -2.0;
  /// State-value baseline fitted to the returns each iteration.
  double value_lr = 3e-3;
  int value_steps = 10;
  std::vector<int> hidden = {64, 64};
  CraftMode craft_mode = CraftMode::oracle;
  std::uint64_t seed = 1;

  void validate() const;
  static AntTrainConfig from_config(const Config& c);
};

struct AntCurvePoint {
  int iteration = 0;
  double mean_return = 0.0;  // victim return
  double mean_attacks = 0.0;
};

struct AntTrainResult {
  AntagonistPolicy policy;
  std::vector<AntCurvePoint> curve;
};

AntTrainResult train_antagonist(const Env& env, const Policy& victim, const AntTrainConfig& cfg,
                                const PerturbConfig& perturb = {});

}  // namespace rlattack
