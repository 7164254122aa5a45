#include "rlattack/cp_attack.hpp"

#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace rlattack {

void CpConfig::validate() const {
  if (n < 1) throw ConfigError("cp: N must be >= 1");
  if (m < n) throw ConfigError("cp: M must be >= N");
  if (!(delta >= 0.0)) throw ConfigError("cp: delta must be >= 0");
  if (!(granularity > 0.0)) throw ConfigError("cp: granularity must be > 0");
  if (grid_count < 1) throw ConfigError("cp: grid count must be >= 1");
  if (episode_budget != 0 && episode_budget < n) throw ConfigError("cp: episode budget must be >= N");
}

CpConfig CpConfig::from_config(const Config& c) {
  CpConfig p;
  p.n = static_cast<int>(c.get_int("n", p.n));
  p.m = static_cast<int>(c.get_int("m", p.m));
  p.delta = c.get_double("delta", p.delta);
  if (c.contains("planner")) {
    const std::string pl = c.get_string("planner", "");
    if (pl == "exhaustive") {
      p.planner = Planner::exhaustive;
    } else if (pl == "grid") {
      p.planner = Planner::grid;
    } else {
      throw ConfigError("cp: unknown planner '" + pl + "'");
    }
  }
  p.grid_count = static_cast<int>(c.get_int("grid_count", p.grid_count));
  p.granularity = c.get_double("granularity", p.granularity);
  p.cartesian = c.get_bool("cartesian", p.cartesian);
  p.plan_cap = static_cast<std::size_t>(c.get_int("plan_cap", static_cast<std::int64_t>(p.plan_cap)));
  const std::string sel = c.get_string("selection", "first_exceed");
  if (sel == "first_exceed") {
    p.selection = Selection::first_exceed;
  } else if (sel == "max_dam") {
    p.selection = Selection::max_dam;
  } else {
    throw ConfigError("cp: unknown selection '" + sel + "'");
  }
  p.episode_budget = static_cast<int>(c.get_int("budget", p.episode_budget));
  p.craft_mode = parse_craft_mode(c.get_string("craft", "full"));
  p.validate();
  return p;
}

std::string to_string(const AttackPlan& p) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < p.targets.size(); ++i) os << (i ? " " : "") << to_string(p.targets[i]);
  os << ']';
  return os.str();
}

namespace {

void check_count(double count, const CpConfig& cfg) {
  if (count > static_cast<double>(cfg.plan_cap)) {
    std::ostringstream os;
    os << "cp: " << count << " candidate plans exceed the cap of " << cfg.plan_cap
       << "; use a smaller N, a coarser grid or repeated-value plans";
    throw std::length_error(os.str());
  }
}

}  // namespace

std::vector<AttackPlan> enumerate_strategies(const ActionSpace& space, const CpConfig& cfg) {
  cfg.validate();
  const Planner planner = cfg.planner.value_or(space.is_discrete() ? Planner::exhaustive : Planner::grid);
  std::vector<AttackPlan> plans;
  if (planner == Planner::exhaustive) {
    if (!space.is_discrete()) throw std::invalid_argument("cp: the exhaustive planner needs a discrete action space");
    check_count(std::pow(static_cast<double>(space.k), cfg.n), cfg);
    std::vector<int> idx(static_cast<std::size_t>(cfg.n), 0);
    while (true) {
      AttackPlan p;
      for (int i : idx) p.targets.push_back(Action::discrete(i));
      plans.push_back(std::move(p));
      int pos = cfg.n - 1;
      while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == space.k) idx[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
    }
    return plans;
  }

  if (space.is_discrete()) throw std::invalid_argument("cp: the grid planner needs a continuous action space");
  if (space.dim != 1) throw std::invalid_argument("cp: the grid planner supports one-dimensional actions");
  std::vector<double> values;
  for (int i = 0; i < cfg.grid_count; ++i) {
    const double v = space.lo + i * cfg.granularity;
    if (v > space.hi + 1e-12) break;
    values.push_back(std::min(v, space.hi));
  }
  const auto g = values.size();
  if (!cfg.cartesian || cfg.n == 1) {
    check_count(static_cast<double>(g), cfg);
    for (double v : values) {
      plans.push_back({std::vector<Action>(static_cast<std::size_t>(cfg.n), Action::continuous(v))});
    }
    return plans;
  }
  check_count(std::pow(static_cast<double>(g), cfg.n), cfg);
  std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.n), 0);
  while (true) {
    AttackPlan p;
    for (std::size_t i : idx) p.targets.push_back(Action::continuous(values[i]));
    plans.push_back(std::move(p));
    int pos = cfg.n - 1;
    while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == g) idx[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  return plans;
}

Assessment assess_plan(const Predictor& predictor, const Controller& policy, const StateVec& s,
                       const AttackPlan& plan, int m, const Divergence& divergence) {
  const auto base = rollout(predictor, policy, s, {}, m);
  const auto att = rollout(predictor, policy, s, plan.targets, m);
  Assessment a;
  a.baseline_t = divergence(base.back());
  a.predicted_t = divergence(att.back());
  a.dam = std::abs(a.predicted_t - a.baseline_t);
  return a;
}

std::optional<AttackPlan> scan(const StateVec& s, const CpConfig& cfg, std::span<const AttackPlan> plans,
                               const Predictor& predictor, const Controller& policy, const Divergence& divergence,
                               DamReport* report, ScanOptions opts) {
  DamReport local;
  DamReport& rep = report ? *report : local;
  rep = DamReport{};
  rep.baseline_t = divergence(rollout(predictor, policy, s, {}, cfg.m).back());
  const bool keep_rows = report != nullptr && opts.full_report;
  const bool scan_all = opts.full_report || cfg.selection == Selection::max_dam;
  std::optional<std::size_t> chosen;
  double best_dam = -1.0;

  for (std::size_t i = 0; i < plans.size(); ++i) {
    const double predicted = divergence(rollout(predictor, policy, s, plans[i].targets, cfg.m).back());
    const double dam = std::abs(predicted - rep.baseline_t);
    if (keep_rows) rep.rows.push_back({plans[i], predicted, dam});
    if (cfg.selection == Selection::first_exceed) {
      if (!chosen && dam > cfg.delta) {
        chosen = i;
        best_dam = dam;
        if (!scan_all) break;
      }
    } else if (dam > best_dam) {
      best_dam = dam;
      chosen = i;
    }
  }
  if (chosen && !(best_dam > cfg.delta)) chosen.reset();
  if (!chosen) return std::nullopt;
  rep.chosen = *chosen;
  rep.chosen_dam = best_dam;
  return plans[*chosen];
}

std::optional<AttackPlan> scan(const StateVec& s, const CpConfig& cfg, const ActionSpace& space,
                               const Predictor& predictor, const Controller& policy, const Divergence& divergence,
                               DamReport* report, ScanOptions opts) {
  const auto plans = enumerate_strategies(space, cfg);
  return scan(s, cfg, plans, predictor, policy, divergence, report, opts);
}

EpisodeReport run_cp_episode(const Env& env, const Policy& victim, const Predictor& predictor, const CpConfig& cfg,
                             const PerturbConfig& perturb, std::uint64_t seed) {
  cfg.validate();
  const auto plans = enumerate_strategies(env.spec().actions, cfg);
  const Controller policy = victim.controller();
  const Divergence div = [&env](std::span<const double> x) { return env.divergence(x); };
  const AttackExecutor exec(env, victim, perturb, cfg.craft_mode);
  const int budget = cfg.budget();

  EpisodeReport rep;
  rep.seed = seed;
  rep.method = "cp";
  rep.param = cfg.delta;
  EnvState s = env.reset(seed);
  std::deque<Action> pending;
  std::optional<double> trigger;
  while (!s.done) {
    if (pending.empty() && rep.attack_count() + cfg.n <= budget) {
      DamReport dr;
      if (auto plan = scan(s.obs, cfg, plans, predictor, policy, div, &dr)) {
        pending.assign(plan->targets.begin(), plan->targets.end());
        trigger = dr.chosen_dam;
      }
    }
    Action a = Action::discrete(0);
    if (!pending.empty()) {
      AttackRecord rec;
      rec.step = s.t;
      rec.trigger = trigger;
      trigger.reset();
      a = exec.attack(s.obs, pending.front(), rec);
      pending.pop_front();
      rep.attacks.push_back(std::move(rec));
      if (rep.attack_count() > budget) throw std::logic_error("cp: attack budget exceeded");
    } else {
      a = victim.greedy(s.obs);
    }
    StepResult r = env.step(s, a);
    record_step(rep, r);
    s = std::move(r.next);
  }
  return rep;
}

}  // namespace rlattack
