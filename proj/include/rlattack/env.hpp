#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rlattack/config.hpp"

namespace rlattack {

/// Observation vector. Perturbations are added to this.
using StateVec = std::vector<double>;

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Action value: a discrete index or a bounded continuous vector.
class Action {
 public:
  static Action discrete(int index) { return Action(index); }
  static Action continuous(std::vector<double> values) { return Action(std::move(values)); }
  static Action continuous(double value) { return Action(std::vector<double>{value}); }

  bool is_discrete() const { return std::holds_alternative<int>(value_); }
  int index() const;
  const std::vector<double>& values() const;

  friend bool operator==(const Action&, const Action&) = default;

 private:
  explicit Action(int index) : value_(index) {}
  explicit Action(std::vector<double> values) : value_(std::move(values)) {}

  std::variant<int, std::vector<double>> value_;
};

std::string to_string(const Action& a);

struct ActionSpace {
  enum class Kind { discrete, continuous };
  Kind kind = Kind::discrete;
  int k = 0;    // number of choices (discrete)
  int dim = 0;  // vector length (continuous)
  double lo = -1.0;
  double hi = 1.0;

  static ActionSpace make_discrete(int k) { return {Kind::discrete, k, 0, 0.0, 0.0}; }
  static ActionSpace make_continuous(int dim, double lo, double hi) {
    return {Kind::continuous, 0, dim, lo, hi};
  }
  bool is_discrete() const { return kind == Kind::discrete; }
  /// Throws std::out_of_range when `a` is not a member of the space.
  void validate(const Action& a) const;
};

enum class DoneCause { running, crash, miss, horizon };
std::string_view to_string(DoneCause c);

/// Outcome of a landing event in ball-catching environments.
enum class Outcome { none, caught, missed };

struct EnvSpec {
  std::string id;
  std::size_t state_dim = 0;
  ActionSpace actions;
  int horizon = 1;
  std::vector<double> lo;
  std::vector<double> hi;

  /// Width of each dimension's declared range; the unit for normalized
  /// perturbation budgets.
  std::vector<double> range_widths() const;
  StateVec clamp(StateVec s) const;
  bool contains(std::span<const double> s) const;
};

/// Everything a transition depends on. The observation is what the agent
/// (and the adversary) sees; the bookkeeping fields track the episode.
struct EnvState {
  StateVec obs;
  int t = 0;
  int lives = 0;
  int serves = 0;
  std::uint64_t seed = 0;
  bool done = false;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
  DoneCause cause = DoneCause::running;
  Outcome outcome = Outcome::none;

  const StateVec& next_state() const { return next.obs; }
};

/// Deterministic environment. All member functions are const: stepping maps
/// one EnvState value to another and never mutates the environment.
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual EnvState reset(std::uint64_t seed) const = 0;
  virtual StepResult step(const EnvState& state, const Action& action) const = 0;

  /// One-step dynamics of the observation alone, clamped to the state
  /// ranges. This is the exact-model view used by the oracle predictor.
  virtual StateVec dynamics(const StateVec& obs, const Action& action) const = 0;

  /// Divergence T(s): how unfavourable a state is for the agent. Always >= 0.
  virtual double divergence(std::span<const double> obs) const = 0;

  virtual Action expert(std::span<const double> obs) const = 0;

  const std::string& id() const { return spec().id; }
};

// ---------------------------------------------------------------------------
// Lane keeping: state = [trackpos, heading angle, speed].

struct LaneKeepParams {
  double dt = 0.1;
  double k_steer = 1.0;
  double speed = 1.0;
  double alpha_max = 0.7853981633974483;  // pi/4
  int horizon = 400;
  double track_limit = 1.2;  // declared trackpos range
  double crash_at = 1.0;
  // Initial condition: the car enters a bend close to the edge, heading out.
  double init_trackpos_lo = 0.72;
  double init_trackpos_hi = 0.77;
  double init_alpha_lo = 0.55;
  double init_alpha_hi = 0.65;
  // Expert PD gains.
  double kp = 1.0;
  double kd = 2.0;

  static LaneKeepParams from_config(const Config& env_cfg);
};

class LaneKeep : public Env {
 public:
  explicit LaneKeep(LaneKeepParams p = {}, int discrete_levels = 0);

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) const override;
  StepResult step(const EnvState& state, const Action& action) const override;
  StateVec dynamics(const StateVec& obs, const Action& action) const override;
  double divergence(std::span<const double> obs) const override;
  Action expert(std::span<const double> obs) const override;

  const LaneKeepParams& params() const { return p_; }
  /// Steering value of an action (discrete indices map onto [-1, 1]).
  double steering(const Action& a) const;
  int levels() const { return levels_; }

 private:
  LaneKeepParams p_;
  int levels_;
  EnvSpec spec_;
};

// ---------------------------------------------------------------------------
// Catch: state = [ball_x, ball_y, ball_vx, paddle_x] on a W x H grid.
// Actions: 0 = left, 1 = stay, 2 = right.

struct CatchParams {
  int width = 11;
  int height = 11;
  int paddle_halfwidth = 1;
  int lives = 5;
  int horizon = 33;

  static CatchParams from_config(const Config& env_cfg);
};

class Catch : public Env {
 public:
  static constexpr int kLeft = 0;
  static constexpr int kStay = 1;
  static constexpr int kRight = 2;

  explicit Catch(CatchParams p = {});

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) const override;
  StepResult step(const EnvState& state, const Action& action) const override;
  StateVec dynamics(const StateVec& obs, const Action& action) const override;
  double divergence(std::span<const double> obs) const override;
  Action expert(std::span<const double> obs) const override;

  const CatchParams& params() const { return p_; }

  /// Column where a ball at (x, y) moving with vx reaches the bottom row.
  int landing_column(int x, int y, int vx) const;
  /// Serve number `index` of the episode seeded with `seed`: (x, vx).
  std::pair<int, int> serve(std::uint64_t seed, int index) const;
  /// Rejects observations that are not grid states.
  void validate(std::span<const double> obs) const;

 private:
  StateVec advance(std::span<const double> obs, int action, std::pair<int, int> next_serve,
                   Outcome* outcome) const;

  CatchParams p_;
  EnvSpec spec_;
};

// ---------------------------------------------------------------------------
// LineWorld: x' = x + a with a in {-1, 0, +1}; T = |x|. A small exactly
// linear MDP used to check the attack algorithms against hand arithmetic.

struct LineWorldParams {
  double limit = 10.0;
  int horizon = 50;
  double init_spread = 3.0;

  static LineWorldParams from_config(const Config& env_cfg);
};

class LineWorld : public Env {
 public:
  explicit LineWorld(LineWorldParams p = {});

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) const override;
  StepResult step(const EnvState& state, const Action& action) const override;
  StateVec dynamics(const StateVec& obs, const Action& action) const override;
  double divergence(std::span<const double> obs) const override;
  Action expert(std::span<const double> obs) const override;

  /// Displacement of action index i: i - 1.
  static double displacement(const Action& a) { return static_cast<double>(a.index() - 1); }

 private:
  LineWorldParams p_;
  EnvSpec spec_;
};

/// Builds an environment by id (`lanekeep`, `lanekeep7`, `catch`,
/// `lineworld`). `env_cfg` holds the `env.*` keys with the prefix stripped.
std::unique_ptr<Env> make_env(std::string_view id, const Config& env_cfg = {});

/// T(s) for a named environment with default constants.
double divergence(std::string_view env_id, std::span<const double> state);

}  // namespace rlattack
