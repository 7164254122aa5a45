#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlattack/agent.hpp"
#include "rlattack/env.hpp"
#include "rlattack/perturb.hpp"

namespace rlattack {

/// oracle: the victim is forced to take the target action directly.
/// full: a perturbation is crafted and the victim acts on the perturbed state.
enum class CraftMode { oracle, full };
std::string_view to_string(CraftMode m);
CraftMode parse_craft_mode(std::string_view s);

struct AttackRecord {
  int step = 0;
  Action target = Action::discrete(0);
  Action taken = Action::discrete(0);
  bool success = false;
  double linf = 0.0;  // applied perturbation, normalized units
  double l2 = 0.0;
  /// Method-specific trigger value: DAM for CP, preference gap for ST, gate
  /// probability for the antagonist.
  std::optional<double> trigger;
};

struct EpisodeReport {
  std::uint64_t seed = 0;
  std::string method;
  double param = 0.0;
  double ret = 0.0;
  int length = 0;
  DoneCause cause = DoneCause::running;
  int caught = 0;
  int missed = 0;
  std::vector<AttackRecord> attacks;

  int attack_count() const { return static_cast<int>(attacks.size()); }
  std::vector<int> attacked_steps() const;
  double max_linf() const;
  double mean_linf() const;
  int craft_failures() const;
};

/// Runs one attacked step: returns the action the victim ends up taking
/// and fills in the record.
class AttackExecutor {
 public:
  AttackExecutor(const Env& env, const Policy& victim, PerturbConfig cfg, CraftMode mode)
      : env_(env), victim_(victim), cfg_(cfg), mode_(mode) {}

  Action attack(const StateVec& obs, const Action& target, AttackRecord& rec) const;
  CraftMode mode() const { return mode_; }

 private:
  const Env& env_;
  const Policy& victim_;
  PerturbConfig cfg_;
  CraftMode mode_;
};

/// Accumulates a step's outcome into the report.
void record_step(EpisodeReport& rep, const StepResult& r);

}  // namespace rlattack
