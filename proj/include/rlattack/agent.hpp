#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rlattack/env.hpp"
#include "rlattack/nn.hpp"
#include "rlattack/rng.hpp"

namespace rlattack {

/// Greedy decision rule of some agent, e.g. a trained victim or a scripted
/// controller.
using Controller = std::function<Action(std::span<const double>)>;

enum class ActMode { greedy, sample };

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(const Eigen::VectorXd& v);
/// Index of the smallest entry; ties go to the lowest index.
int argmin_lowest(const Eigen::VectorXd& v);

/// Victim policy. A softmax head makes it a stochastic discrete policy
/// over k actions; a tanh (or linear) head makes it a deterministic
/// continuous policy.
class Policy {
 public:
  enum class Kind { discrete, continuous };

  explicit Policy(Mlp net, double action_lo = -1.0, double action_hi = 1.0);

  Kind kind() const { return kind_; }
  bool is_discrete() const { return kind_ == Kind::discrete; }
  int state_dim() const { return net_.input_dim(); }
  int action_count() const { return net_.output_dim(); }
  const Mlp& net() const { return net_; }
  double action_lo() const { return lo_; }
  double action_hi() const { return hi_; }

  /// Action probabilities (discrete policies only).
  Eigen::VectorXd distribution(std::span<const double> s) const;
  /// Continuous action before clamping (continuous policies only).
  Eigen::VectorXd output(std::span<const double> s) const;

  Action act(std::span<const double> s, ActMode mode = ActMode::greedy, Rng* rng = nullptr) const;
  Action greedy(std::span<const double> s) const { return act(s); }
  Controller controller() const;

 private:
  Mlp net_;
  Kind kind_;
  double lo_;
  double hi_;
};

/// Maps each state dimension's declared range onto [-1, 1].
Normalizer range_normalizer(const EnvSpec& spec);

// ---------------------------------------------------------------------------

struct BcConfig {
  int episodes = 200;
  /// Exploration while collecting states: epsilon for discrete envs,
  /// Gaussian noise std for continuous envs.
  double explore = 0.2;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::tanh;
  FitConfig fit{.epochs = 60, .batch = 64, .opt = {.lr = 3e-3}, .lr_decay = 0.97, .seed = 1};
  std::uint64_t seed = 1;
};

struct BcResult {
  Policy policy;
  FitLog log;
  std::size_t samples = 0;
};

/// Behaviour cloning of `expert` on states collected by rolling the expert
/// with exploration. Cross-entropy for discrete envs, MSE for continuous.
BcResult train_bc(const Env& env, const Controller& expert, const BcConfig& cfg);
BcResult train_bc(const Env& env, const BcConfig& cfg);

struct ReinforceConfig {
  int iterations = 200;
  int episodes_per_iter = 16;
  double gamma = 0.99;
  double lr = 3e-3;
  double entropy_coef = 0.01;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 1;
};

struct ReinforceResult {
  Policy policy;
  std::vector<double> curve;  // mean return per iteration
};

/// Discounted returns-to-go G_t = r_t + gamma * G_{t+1}.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// Return-baselined policy gradient with entropy bonus (discrete envs).
ReinforceResult train_reinforce(const Env& env, const ReinforceConfig& cfg);

// ---------------------------------------------------------------------------

struct EpisodeOutcome {
  double ret = 0.0;
  int length = 0;
  DoneCause cause = DoneCause::running;
  int caught = 0;
  int missed = 0;
};

EpisodeOutcome run_episode(const Env& env, const Controller& controller, std::uint64_t seed);

struct EvalStats {
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_length = 0.0;
  /// Fraction of episodes that ended in a crash or by running out of lives.
  double crash_rate = 0.0;
  /// Catches over landings, when the env has landing events.
  std::optional<double> catch_rate;
  std::vector<EpisodeOutcome> episodes;
};

EvalStats evaluate(const Env& env, const Controller& controller,
                   std::span<const std::uint64_t> seeds);
EvalStats evaluate(const Policy& policy, const Env& env, std::span<const std::uint64_t> seeds);

}  // namespace rlattack
