#include "rlattack/episode.hpp"

#include <algorithm>

namespace rlattack {

std::string_view to_string(CraftMode m) { return m == CraftMode::oracle ? "oracle" : "full"; }

CraftMode parse_craft_mode(std::string_view s) {
  if (s == "oracle") return CraftMode::oracle;
  if (s == "full") return CraftMode::full;
  throw ConfigError("unknown craft mode '" + std::string(s) + "' (expected oracle or full)");
}

std::vector<int> EpisodeReport::attacked_steps() const {
  std::vector<int> v;
  v.reserve(attacks.size());
  for (const auto& a : attacks) v.push_back(a.step);
  return v;
}

double EpisodeReport::max_linf() const {
  double m = 0.0;
  for (const auto& a : attacks) m = std::max(m, a.linf);
  return m;
}

double EpisodeReport::mean_linf() const {
  if (attacks.empty()) return 0.0;
  double s = 0.0;
  for (const auto& a : attacks) s += a.linf;
  return s / static_cast<double>(attacks.size());
}

int EpisodeReport::craft_failures() const {
  return static_cast<int>(std::count_if(attacks.begin(), attacks.end(), [](const AttackRecord& a) { return !a.success; }));
}

Action AttackExecutor::attack(const StateVec& obs, const Action& target, AttackRecord& rec) const {
  env_.spec().actions.validate(target);
  rec.target = target;
  if (mode_ == CraftMode::oracle) {
    rec.success = true;
    rec.taken = target;
    return target;
  }
  const CraftResult c = craft(victim_, env_.spec(), obs, target, cfg_);
  rec.success = c.success;
  if (c.success) {
    rec.linf = c.linf;
    rec.l2 = c.l2;
    rec.taken = victim_.greedy(c.perturbed);
  } else {
    rec.taken = victim_.greedy(obs);
  }
  return rec.taken;
}

void record_step(EpisodeReport& rep, const StepResult& r) {
  rep.ret += r.reward;
  ++rep.length;
  if (r.outcome == Outcome::caught) ++rep.caught;
  if (r.outcome == Outcome::missed) ++rep.missed;
  rep.cause = r.cause;
}

}  // namespace rlattack
