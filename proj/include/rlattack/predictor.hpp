#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rlattack/agent.hpp"
#include "rlattack/env.hpp"
#include "rlattack/nn.hpp"

namespace rlattack {

/// Deterministic one-step model (s, a) -> s'. Implemented by the exact
/// environment dynamics and by a learned network.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual StateVec predict_next(const StateVec& s, const Action& a) const = 0;
};

class OraclePredictor : public Predictor {
 public:
  explicit OraclePredictor(const Env& env) : env_(&env) {}
  StateVec predict_next(const StateVec& s, const Action& a) const override {
    return env_->dynamics(s, a);
  }

 private:
  const Env* env_;
};

/// Network input for an action: one-hot for discrete spaces, raw values for
/// continuous ones.
Eigen::VectorXd encode_action(const ActionSpace& space, const Action& a);
int encoded_action_dim(const ActionSpace& space);

/// Learned prediction model over concat(state, encoded action). The network
/// outputs the z-scored next state; the target statistics travel with the
/// network in its model file.
class LearnedPredictor : public Predictor {
 public:
  LearnedPredictor(Mlp net, EnvSpec spec);

  StateVec predict_next(const StateVec& s, const Action& a) const override;
  /// Prediction in normalized units, without clamping.
  Eigen::VectorXd predict_normalized(const StateVec& s, const Action& a) const;

  const Mlp& net() const { return net_; }
  const EnvSpec& spec() const { return spec_; }
  const Normalizer& target_normalizer() const { return *net_.target_normalizer(); }

 private:
  Eigen::VectorXd input(const StateVec& s, const Action& a) const;

  Mlp net_;
  EnvSpec spec_;
};

// ---------------------------------------------------------------------------

struct Transition {
  StateVec s;
  Action a = Action::discrete(0);
  StateVec s_next;
  bool test = false;
};

struct TransitionDataset {
  std::size_t state_dim = 0;
  ActionSpace actions;
  std::vector<Transition> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t test_count() const;
  std::size_t train_count() const { return size() - test_count(); }
};

/// Rolls `policy` with exploration (additive Gaussian noise of std `noise`
/// for continuous actions, epsilon-greedy with epsilon = `noise` for
/// discrete ones) and records `n_steps` transitions. A seeded shuffle marks
/// 20% of the rows as held-out.
TransitionDataset collect_transitions(const Env& env, const Controller& policy, int n_steps,
                                      double noise, std::uint64_t seed);

/// CSV with header s_0..s_{d-1},a_0..,sn_0..sn_{d-1},split.
void save_dataset_csv(const TransitionDataset& data, const std::filesystem::path& path);
TransitionDataset load_dataset_csv(const std::filesystem::path& path, const EnvSpec& spec);

struct PmConfig {
  std::vector<int> hidden = {64, 64, 64, 64};
  Activation activation = Activation::tanh;
  FitConfig fit{.epochs = 150, .batch = 128, .opt = {.lr = 2e-3}, .lr_decay = 0.97, .seed = 1};
};

struct PmTrainResult {
  LearnedPredictor model;
  double train_mse = 0.0;
  /// Held-out 1-step MSE in normalized units; absent without test rows.
  std::optional<double> test_mse;
  FitLog log;
};

PmTrainResult train_pm(const TransitionDataset& data, const EnvSpec& spec, const PmConfig& cfg);

/// Normalized-unit MSE of a learned predictor over the chosen split.
double pm_mse(const LearnedPredictor& pm, const TransitionDataset& data, bool test_split);

/// States s_{t+1..t+M}: the first prefix.size() actions come from `prefix`,
/// the rest from `policy`, and each state is fed back through `predictor`.
std::vector<StateVec> rollout(const Predictor& predictor, const Controller& policy,
                              const StateVec& start, std::span<const Action> prefix, int horizon);

}  // namespace rlattack
