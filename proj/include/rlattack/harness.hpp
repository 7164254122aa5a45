#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlattack/agent.hpp"
#include "rlattack/antagonist.hpp"
#include "rlattack/config.hpp"
#include "rlattack/cp_attack.hpp"
#include "rlattack/episode.hpp"
#include "rlattack/perturb.hpp"
#include "rlattack/predictor.hpp"

namespace rlattack {

class UnsupportedMethodError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Baselines and method runners. Each returns one report per seed, in order.

std::vector<EpisodeReport> run_clean(const Env& env, const Policy& victim, std::span<const std::uint64_t> seeds);

/// Attacks every step toward the least preferred action.
std::vector<EpisodeReport> run_uniform(const Env& env, const Policy& victim, const PerturbConfig& perturb,
                                       std::span<const std::uint64_t> seeds, CraftMode mode = CraftMode::full);

/// Attacks at steps t with t mod n == 0.
std::vector<EpisodeReport> run_every_n(const Env& env, const Policy& victim, int n, const PerturbConfig& perturb,
                                       std::span<const std::uint64_t> seeds, CraftMode mode = CraftMode::full);

/// Preference gap c(s) = max pi - min pi.
double preference_gap(const Policy& victim, std::span<const double> s);

/// Strategically-timed attack: when c(s) > threshold, target argmin pi.
std::vector<EpisodeReport> run_st(const Env& env, const Policy& victim, double threshold, const PerturbConfig& perturb,
                                  std::span<const std::uint64_t> seeds, CraftMode mode = CraftMode::full);

std::vector<EpisodeReport> run_cp(const Env& env, const Policy& victim, const Predictor& predictor, const CpConfig& cfg,
                                  const PerturbConfig& perturb, std::span<const std::uint64_t> seeds);

std::vector<EpisodeReport> run_antagonist(const Env& env, const Policy& victim, const AntagonistPolicy& ant,
                                          int budget, CraftMode mode, const PerturbConfig& perturb,
                                          std::span<const std::uint64_t> seeds);

// ---------------------------------------------------------------------------

enum class Method { clean, cp, antagonist, uniform, every_n, st };
std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct ExperimentConfig {
  std::string env_id = "lanekeep";
  Config env_cfg;
  std::string victim_path;
  Method method = Method::clean;
  /// Method parameter: delta (cp), threshold c (st), n (every_n), budget
  /// (antagonist).
  double param = 0.0;
  CpConfig cp;
  /// "oracle" or a prediction-model file.
  std::string pm = "oracle";
  /// Trained antagonist file; when empty one is trained per cell.
  std::string ant_path;
  AntTrainConfig ant_train;
  CraftMode craft_mode = CraftMode::full;
  PerturbConfig perturb;
  std::vector<std::uint64_t> seeds = default_seeds();
  std::filesystem::path out = "out";

  /// Keys: env, env.*, victim, method, param, method.*, pm, ant, ant.*,
  /// craft, perturb.*, seeds, out.
  static ExperimentConfig from_config(const Config& c);
  void validate() const;
};

/// Throws unless all configs share victim, env constants, seeds and
/// perturbation settings.
void check_comparable(std::span<const ExperimentConfig> configs);

/// Loaded models for one experiment configuration.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);
  Experiment(ExperimentConfig cfg, std::shared_ptr<const Env> env, Policy victim);

  const ExperimentConfig& config() const { return cfg_; }
  const Env& env() const { return *env_; }
  const Policy& victim() const { return victim_; }

  /// Runs the configured method with its parameter set to `param`.
  std::vector<EpisodeReport> run(double param) const;

 private:
  const Predictor& predictor() const;

  ExperimentConfig cfg_;
  std::shared_ptr<const Env> env_;
  Policy victim_;
  std::unique_ptr<Predictor> predictor_;
  std::optional<AntagonistPolicy> ant_;
};

Policy load_victim(const std::filesystem::path& path, const EnvSpec& spec);
std::unique_ptr<Predictor> load_predictor(const std::string& pm, const Env& env);
void save_antagonist(const AntagonistPolicy& ant, const std::filesystem::path& path);
AntagonistPolicy load_antagonist(const std::filesystem::path& path, const EnvSpec& spec);

// ---------------------------------------------------------------------------

enum class SweepAxis { delta, c, budget, n };
std::string_view to_string(SweepAxis a);
SweepAxis parse_axis(std::string_view s);

struct SweepRow {
  double value = 0.0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_attacks = 0.0;
  std::size_t episodes = 0;
  std::optional<std::string> error;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::delta;
  std::string method;
  std::vector<SweepRow> rows;
  std::vector<EpisodeReport> reports;
};

/// Aggregate statistics of a set of reports (population std).
SweepRow summarize(double value, std::span<const EpisodeReport> reports);

SweepResult sweep(const Experiment& exp, SweepAxis axis, std::span<const double> values);

/// Writes episodes.csv, sweep.json and plotdata.json into `out_dir`.
void write_report(std::vector<EpisodeReport> reports, const SweepResult* sweep,
                  const std::filesystem::path& out_dir);

/// Formats a double with %.17g.
std::string format_double(double v);

/// Rows of an episodes.csv file, for checking written reports.
struct EpisodeRow {
  std::uint64_t seed = 0;
  std::string method;
  double param = 0.0;
  double ret = 0.0;
  int length = 0;
  int attack_count = 0;
  std::string done_cause;
  double max_linf = 0.0;
};
std::vector<EpisodeRow> read_episodes_csv(const std::filesystem::path& path);

}  // namespace rlattack
