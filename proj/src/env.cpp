#include "rlattack/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rlattack/rng.hpp"

namespace rlattack {

int Action::index() const {
  if (!is_discrete()) throw std::logic_error("continuous action has no index");
  return std::get<int>(value_);
}

const std::vector<double>& Action::values() const {
  if (is_discrete()) throw std::logic_error("discrete action has no values");
  return std::get<std::vector<double>>(value_);
}

std::string to_string(const Action& a) {
  if (a.is_discrete()) return std::to_string(a.index());
  std::ostringstream ss;
  ss.precision(17);
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    if (i) ss << ';';
    ss << a.values()[i];
  }
  return ss.str();
}

void ActionSpace::validate(const Action& a) const {
  if (is_discrete()) {
    if (!a.is_discrete()) throw std::out_of_range("expected a discrete action");
    if (a.index() < 0 || a.index() >= k) {
      throw std::out_of_range("action index " + std::to_string(a.index()) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    return;
  }
  if (a.is_discrete()) throw std::out_of_range("expected a continuous action");
  if (static_cast<int>(a.values().size()) != dim) {
    throw std::out_of_range("continuous action has wrong dimension");
  }
  for (double v : a.values()) {
    if (!(v >= lo && v <= hi)) {
      throw std::out_of_range("action component " + std::to_string(v) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
}

std::string_view to_string(DoneCause c) {
  switch (c) {
    case DoneCause::running: return "running";
    case DoneCause::crash: return "crash";
    case DoneCause::miss: return "miss";
    case DoneCause::horizon: return "horizon";
  }
  return "unknown";
}

std::vector<double> EnvSpec::range_widths() const {
  std::vector<double> w(state_dim);
  for (std::size_t i = 0; i < state_dim; ++i) w[i] = hi[i] - lo[i];
  return w;
}

StateVec EnvSpec::clamp(StateVec s) const {
  for (std::size_t i = 0; i < s.size() && i < state_dim; ++i) s[i] = std::clamp(s[i], lo[i], hi[i]);
  return s;
}

bool EnvSpec::contains(std::span<const double> s) const {
  if (s.size() != state_dim) return false;
  for (std::size_t i = 0; i < state_dim; ++i) {
    if (!std::isfinite(s[i]) || s[i] < lo[i] || s[i] > hi[i]) return false;
  }
  return true;
}

namespace {

void check_dim(std::span<const double> obs, const EnvSpec& spec) {
  if (obs.size() != spec.state_dim) {
    throw EnvError(spec.id + ": state has dimension " + std::to_string(obs.size()) +
                   ", expected " + std::to_string(spec.state_dim));
  }
}

void check_not_done(const EnvState& s, const EnvSpec& spec) {
  if (s.done) throw std::logic_error(spec.id + ": step called on a terminated episode");
}

}  // namespace

// ---------------------------------------------------------------------------

LaneKeepParams LaneKeepParams::from_config(const Config& c) {
  LaneKeepParams p;
  p.dt = c.get_double("dt", p.dt);
  p.k_steer = c.get_double("k_steer", p.k_steer);
  p.speed = c.get_double("speed", p.speed);
  p.alpha_max = c.get_double("alpha_max", p.alpha_max);
  p.horizon = static_cast<int>(c.get_int("horizon", p.horizon));
  p.init_trackpos_lo = c.get_double("init_trackpos_lo", p.init_trackpos_lo);
  p.init_trackpos_hi = c.get_double("init_trackpos_hi", p.init_trackpos_hi);
  p.init_alpha_lo = c.get_double("init_alpha_lo", p.init_alpha_lo);
  p.init_alpha_hi = c.get_double("init_alpha_hi", p.init_alpha_hi);
  p.kp = c.get_double("kp", p.kp);
  p.kd = c.get_double("kd", p.kd);
  return p;
}

LaneKeep::LaneKeep(LaneKeepParams p, int discrete_levels) : p_(p), levels_(discrete_levels) {
  if (p_.horizon < 1) throw EnvError("lanekeep: horizon must be >= 1");
  if (!(p_.dt > 0) || !(p_.alpha_max > 0) || !(p_.speed > 0)) {
    throw EnvError("lanekeep: dt, alpha_max and speed must be positive");
  }
  if (levels_ == 1) throw EnvError("lanekeep: need at least 2 discrete levels");
  spec_.id = levels_ > 0 ? "lanekeep" + std::to_string(levels_) : "lanekeep";
  spec_.state_dim = 3;
  spec_.actions = levels_ > 0 ? ActionSpace::make_discrete(levels_)
                              : ActionSpace::make_continuous(1, -1.0, 1.0);
  spec_.horizon = p_.horizon;
  spec_.lo = {-p_.track_limit, -p_.alpha_max, 0.5 * p_.speed};
  spec_.hi = {p_.track_limit, p_.alpha_max, 1.5 * p_.speed};
}

double LaneKeep::steering(const Action& a) const {
  spec_.actions.validate(a);
  if (levels_ > 0) return -1.0 + a.index() * (2.0 / (levels_ - 1));
  return a.values()[0];
}

EnvState LaneKeep::reset(std::uint64_t seed) const {
  Rng rng(derive_seed(seed, 0x1a7e));
  const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double tp = side * rng.uniform(p_.init_trackpos_lo, p_.init_trackpos_hi);
  const double alpha = side * rng.uniform(p_.init_alpha_lo, p_.init_alpha_hi);
  EnvState s;
  s.obs = {tp, std::clamp(alpha, -p_.alpha_max, p_.alpha_max), p_.speed};
  s.seed = seed;
  return s;
}

StateVec LaneKeep::dynamics(const StateVec& obs, const Action& action) const {
  check_dim(obs, spec_);
  const double a = steering(action);
  const double v = obs[2];
  const double alpha = std::clamp(obs[1] + p_.k_steer * a * p_.dt, -p_.alpha_max, p_.alpha_max);
  const double tp = std::clamp(obs[0] + v * std::sin(alpha) * p_.dt, -p_.track_limit, p_.track_limit);
  return {tp, alpha, v};
}

StepResult LaneKeep::step(const EnvState& state, const Action& action) const {
  check_not_done(state, spec_);
  StepResult r;
  r.next = state;
  r.next.obs = dynamics(state.obs, action);
  r.next.t = state.t + 1;
  const double tp = r.next.obs[0];
  const double alpha = r.next.obs[1];
  const double v = r.next.obs[2];
  r.reward = v * std::cos(alpha) - v * std::abs(tp);
  if (std::abs(tp) >= p_.crash_at) {
    r.cause = DoneCause::crash;
  } else if (r.next.t >= p_.horizon) {
    r.cause = DoneCause::horizon;
  }
  r.done = r.cause != DoneCause::running;
  r.next.done = r.done;
  return r;
}

double LaneKeep::divergence(std::span<const double> obs) const {
  check_dim(obs, spec_);
  return std::abs(obs[0]);
}

Action LaneKeep::expert(std::span<const double> obs) const {
  check_dim(obs, spec_);
  const double u = std::clamp(-p_.kp * obs[0] - p_.kd * obs[1], -1.0, 1.0);
  if (levels_ == 0) return Action::continuous(u);
  // Nearest steering level; ties resolve to the lower index.
  const double step = 2.0 / (levels_ - 1);
  int best = 0;
  double best_err = std::abs(-1.0 - u);
  for (int i = 1; i < levels_; ++i) {
    const double err = std::abs(-1.0 + i * step - u);
    if (err < best_err) {
      best = i;
      best_err = err;
    }
  }
  return Action::discrete(best);
}

// ---------------------------------------------------------------------------

CatchParams CatchParams::from_config(const Config& c) {
  CatchParams p;
  p.width = static_cast<int>(c.get_int("width", p.width));
  p.height = static_cast<int>(c.get_int("height", p.height));
  p.paddle_halfwidth = static_cast<int>(c.get_int("paddle_halfwidth", p.paddle_halfwidth));
  p.lives = static_cast<int>(c.get_int("lives", p.lives));
  p.horizon = static_cast<int>(c.get_int("horizon", p.horizon));
  return p;
}

Catch::Catch(CatchParams p) : p_(p) {
  if (p_.width < 3 || p_.height < 3) throw EnvError("catch: grid must be at least 3x3");
  if (p_.horizon < 1) throw EnvError("catch: horizon must be >= 1");
  if (p_.lives < 1) throw EnvError("catch: lives must be >= 1");
  spec_.id = "catch";
  spec_.state_dim = 4;
  spec_.actions = ActionSpace::make_discrete(3);
  spec_.horizon = p_.horizon;
  const double w = p_.width - 1;
  const double h = p_.height - 1;
  spec_.lo = {0.0, 0.0, -1.0, 0.0};
  spec_.hi = {w, h, 1.0, w};
}

void Catch::validate(std::span<const double> obs) const {
  check_dim(obs, spec_);
  for (std::size_t i = 0; i < 4; ++i) {
    if (!std::isfinite(obs[i]) || obs[i] != std::round(obs[i]) || obs[i] < spec_.lo[i] ||
        obs[i] > spec_.hi[i]) {
      throw EnvError("catch: malformed state component " + std::to_string(i));
    }
  }
  if (obs[2] == 0.0) throw EnvError("catch: ball_vx must be -1 or +1");
}

std::pair<int, int> Catch::serve(std::uint64_t seed, int index) const {
  const std::uint64_t h = derive_seed(seed, 0xca7c0000ULL + static_cast<std::uint64_t>(index));
  const int x = static_cast<int>(h % static_cast<std::uint64_t>(p_.width));
  const int vx = ((h >> 32) & 1ULL) ? 1 : -1;
  return {x, vx};
}

int Catch::landing_column(int x, int y, int vx) const {
  const int right = p_.width - 1;
  for (int row = y; row < p_.height - 1; ++row) {
    x += vx;
    if (x < 0) {
      x = -x;
      vx = -vx;
    } else if (x > right) {
      x = 2 * right - x;
      vx = -vx;
    }
  }
  return x;
}

StateVec Catch::advance(std::span<const double> obs, int action, std::pair<int, int> next_serve,
                        Outcome* outcome) const {
  int bx = static_cast<int>(obs[0]);
  int by = static_cast<int>(obs[1]);
  int vx = obs[2] > 0 ? 1 : -1;
  int px = std::clamp(static_cast<int>(obs[3]) + (action - 1), 0, p_.width - 1);
  *outcome = Outcome::none;
  if (by >= p_.height - 1) {
    // Ball was shown on the bottom row; a new ball is served from the top.
    bx = next_serve.first;
    vx = next_serve.second;
    by = 0;
  } else {
    const int right = p_.width - 1;
    bx += vx;
    if (bx < 0) {
      bx = -bx;
      vx = -vx;
    } else if (bx > right) {
      bx = 2 * right - bx;
      vx = -vx;
    }
    ++by;
    if (by == p_.height - 1) {
      *outcome = std::abs(bx - px) <= p_.paddle_halfwidth ? Outcome::caught : Outcome::missed;
    }
  }
  return {static_cast<double>(bx), static_cast<double>(by), static_cast<double>(vx),
          static_cast<double>(px)};
}

EnvState Catch::reset(std::uint64_t seed) const {
  EnvState s;
  auto [x, vx] = serve(seed, 0);
  Rng rng(derive_seed(seed, 0xbadd1e));
  const int paddle = static_cast<int>(rng.below(static_cast<std::uint64_t>(p_.width)));
  s.obs = {static_cast<double>(x), 0.0, static_cast<double>(vx), static_cast<double>(paddle)};
  s.lives = p_.lives;
  s.serves = 1;
  s.seed = seed;
  return s;
}

StepResult Catch::step(const EnvState& state, const Action& action) const {
  check_not_done(state, spec_);
  validate(state.obs);
  spec_.actions.validate(action);
  StepResult r;
  r.next = state;
  const bool reserve = state.obs[1] >= p_.height - 1;
  r.next.obs = advance(state.obs, action.index(), serve(state.seed, state.serves), &r.outcome);
  if (reserve) ++r.next.serves;
  r.next.t = state.t + 1;
  if (r.outcome == Outcome::caught) {
    r.reward = 1.0;
  } else if (r.outcome == Outcome::missed) {
    r.reward = -1.0;
    --r.next.lives;
  }
  if (r.next.lives <= 0) {
    r.cause = DoneCause::miss;
  } else if (r.next.t >= p_.horizon) {
    r.cause = DoneCause::horizon;
  }
  r.done = r.cause != DoneCause::running;
  r.next.done = r.done;
  return r;
}

StateVec Catch::dynamics(const StateVec& obs, const Action& action) const {
  validate(obs);
  spec_.actions.validate(action);
  // The serve that follows a landing is not observable from the state; the
  // exact model assumes a ball dropped from the centre column moving right.
  Outcome unused;
  return advance(obs, action.index(), {p_.width / 2, 1}, &unused);
}

double Catch::divergence(std::span<const double> obs) const {
  check_dim(obs, spec_);
  const double p = obs[1] / static_cast<double>(p_.height);
  return std::max(0.0, p) * std::abs(obs[0] - obs[3]);
}

Action Catch::expert(std::span<const double> obs) const {
  validate(obs);
  const int by = static_cast<int>(obs[1]);
  if (by >= p_.height - 1) return Action::discrete(kStay);
  const int target = landing_column(static_cast<int>(obs[0]), by, obs[2] > 0 ? 1 : -1);
  const int px = static_cast<int>(obs[3]);
  if (target < px) return Action::discrete(kLeft);
  if (target > px) return Action::discrete(kRight);
  return Action::discrete(kStay);
}

// ---------------------------------------------------------------------------

LineWorldParams LineWorldParams::from_config(const Config& c) {
  LineWorldParams p;
  p.limit = c.get_double("limit", p.limit);
  p.horizon = static_cast<int>(c.get_int("horizon", p.horizon));
  p.init_spread = c.get_double("init_spread", p.init_spread);
  return p;
}

LineWorld::LineWorld(LineWorldParams p) : p_(p) {
  if (p_.horizon < 1) throw EnvError("lineworld: horizon must be >= 1");
  spec_.id = "lineworld";
  spec_.state_dim = 1;
  spec_.actions = ActionSpace::make_discrete(3);
  spec_.horizon = p_.horizon;
  spec_.lo = {-p_.limit};
  spec_.hi = {p_.limit};
}

EnvState LineWorld::reset(std::uint64_t seed) const {
  Rng rng(derive_seed(seed, 0x11e));
  EnvState s;
  s.obs = {rng.uniform(-p_.init_spread, p_.init_spread)};
  s.seed = seed;
  return s;
}

StateVec LineWorld::dynamics(const StateVec& obs, const Action& action) const {
  check_dim(obs, spec_);
  spec_.actions.validate(action);
  return {std::clamp(obs[0] + displacement(action), -p_.limit, p_.limit)};
}

StepResult LineWorld::step(const EnvState& state, const Action& action) const {
  check_not_done(state, spec_);
  StepResult r;
  r.next = state;
  r.next.obs = dynamics(state.obs, action);
  r.next.t = state.t + 1;
  r.reward = -std::abs(r.next.obs[0]);
  if (r.next.t >= p_.horizon) r.cause = DoneCause::horizon;
  r.done = r.cause != DoneCause::running;
  r.next.done = r.done;
  return r;
}

double LineWorld::divergence(std::span<const double> obs) const {
  check_dim(obs, spec_);
  return std::abs(obs[0]);
}

Action LineWorld::expert(std::span<const double> obs) const {
  check_dim(obs, spec_);
  if (obs[0] > 0.5) return Action::discrete(0);
  if (obs[0] < -0.5) return Action::discrete(2);
  return Action::discrete(1);
}

// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(std::string_view id, const Config& env_cfg) {
  if (id == "lanekeep") return std::make_unique<LaneKeep>(LaneKeepParams::from_config(env_cfg));
  if (id == "lanekeep7") {
    return std::make_unique<LaneKeep>(LaneKeepParams::from_config(env_cfg), 7);
  }
  if (id == "catch") return std::make_unique<Catch>(CatchParams::from_config(env_cfg));
  if (id == "lineworld") return std::make_unique<LineWorld>(LineWorldParams::from_config(env_cfg));
  throw EnvError("unknown environment id '" + std::string(id) + "'");
}

double divergence(std::string_view env_id, std::span<const double> state) {
  return make_env(env_id)->divergence(state);
}

}  // namespace rlattack
