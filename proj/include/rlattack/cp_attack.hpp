#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rlattack/agent.hpp"
#include "rlattack/config.hpp"
#include "rlattack/episode.hpp"
#include "rlattack/predictor.hpp"

namespace rlattack {

enum class Planner { exhaustive, grid };
enum class Selection { first_exceed, max_dam };

struct CpConfig {
  int n = 1;
  int m = 3;
  double delta = 0.0;
  /// Defaults to exhaustive for discrete spaces and grid for continuous ones.
  std::optional<Planner> planner;
  int grid_count = 200;
  double granularity = 0.01;
  /// Full G^N product for continuous N > 1 instead of repeated values.
  bool cartesian = false;
  std::size_t plan_cap = 1'000'000;
  Selection selection = Selection::first_exceed;
  /// Max attacked steps per episode; 0 means N (one plan per episode).
  int episode_budget = 0;
  CraftMode craft_mode = CraftMode::full;

  int budget() const { return episode_budget > 0 ? episode_budget : n; }
  void validate() const;
  static CpConfig from_config(const Config& c);
};

struct AttackPlan {
  std::vector<Action> targets;
  friend bool operator==(const AttackPlan&, const AttackPlan&) = default;
};

std::string to_string(const AttackPlan& p);

/// All candidate N-step strategies, in enumeration order.
std::vector<AttackPlan> enumerate_strategies(const ActionSpace& space, const CpConfig& cfg);

using Divergence = std::function<double(std::span<const double>)>;

struct Assessment {
  double dam = 0.0;
  double predicted_t = 0.0;
  double baseline_t = 0.0;
};

Assessment assess_plan(const Predictor& predictor, const Controller& policy, const StateVec& s,
                       const AttackPlan& plan, int m, const Divergence& divergence);

struct PlanScore {
  AttackPlan plan;
  double predicted_t = 0.0;
  double dam = 0.0;
};

struct DamReport {
  double baseline_t = 0.0;
  /// Every scored plan in enumeration order; filled only for full reports.
  std::vector<PlanScore> rows;
  std::optional<std::size_t> chosen;  // index into the plan list
  double chosen_dam = 0.0;
};

struct ScanOptions {
  /// Score every plan (even after first_exceed has found one) and keep rows.
  bool full_report = false;
};

/// Critical-point scan at state s: returns the plan to execute, or nothing.
std::optional<AttackPlan> scan(const StateVec& s, const CpConfig& cfg, std::span<const AttackPlan> plans,
                               const Predictor& predictor, const Controller& policy, const Divergence& divergence,
                               DamReport* report = nullptr, ScanOptions opts = {});
std::optional<AttackPlan> scan(const StateVec& s, const CpConfig& cfg, const ActionSpace& space,
                               const Predictor& predictor, const Controller& policy, const Divergence& divergence,
                               DamReport* report = nullptr, ScanOptions opts = {});

/// Full attacked episode: scan at each step while no plan is pending and the
/// budget still fits a whole plan, then execute the plan's targets.
EpisodeReport run_cp_episode(const Env& env, const Policy& victim, const Predictor& predictor, const CpConfig& cfg,
                             const PerturbConfig& perturb, std::uint64_t seed);

}  // namespace rlattack
