#include "rlattack/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rlattack {

namespace {

/// Decides whether to attack at a state; returns the target and an optional
/// trigger value.
using AttackRule = std::function<std::optional<std::pair<Action, std::optional<double>>>(const EnvState&)>;

EpisodeReport scheduled_episode(const Env& env, const Policy& victim, const AttackExecutor& exec,
                                const AttackRule& rule, std::uint64_t seed, std::string method, double param) {
  EpisodeReport rep;
  rep.seed = seed;
  rep.method = std::move(method);
  rep.param = param;
  EnvState s = env.reset(seed);
  while (!s.done) {
    Action a = Action::discrete(0);
    if (auto hit = rule(s)) {
      AttackRecord rec;
      rec.step = s.t;
      rec.trigger = hit->second;
      a = exec.attack(s.obs, hit->first, rec);
      rep.attacks.push_back(std::move(rec));
    } else {
      a = victim.greedy(s.obs);
    }
    StepResult r = env.step(s, a);
    record_step(rep, r);
    s = std::move(r.next);
  }
  return rep;
}

std::vector<EpisodeReport> over_seeds(std::span<const std::uint64_t> seeds,
                                      const std::function<EpisodeReport(std::uint64_t)>& fn) {
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  std::vector<EpisodeReport> out;
  out.reserve(seeds.size());
  for (std::uint64_t s : seeds) out.push_back(fn(s));
  return out;
}

}  // namespace

std::vector<EpisodeReport> run_clean(const Env& env, const Policy& victim, std::span<const std::uint64_t> seeds) {
  const AttackExecutor exec(env, victim, {}, CraftMode::oracle);
  const AttackRule never = [](const EnvState&) { return std::nullopt; };
  return over_seeds(seeds, [&](std::uint64_t seed) { return scheduled_episode(env, victim, exec, never, seed, "clean", 0.0); });
}

std::vector<EpisodeReport> run_uniform(const Env& env, const Policy& victim, const PerturbConfig& perturb,
                                       std::span<const std::uint64_t> seeds, CraftMode mode) {
  const AttackExecutor exec(env, victim, perturb, mode);
  const AttackRule every = [&](const EnvState& s) {
    return std::optional<std::pair<Action, std::optional<double>>>({least_preferred(victim, s.obs), std::nullopt});
  };
  return over_seeds(seeds, [&](std::uint64_t seed) { return scheduled_episode(env, victim, exec, every, seed, "uniform", 0.0); });
}

std::vector<EpisodeReport> run_every_n(const Env& env, const Policy& victim, int n, const PerturbConfig& perturb,
                                       std::span<const std::uint64_t> seeds, CraftMode mode) {
  if (n < 1) throw std::invalid_argument("every_n needs n >= 1");
  const AttackExecutor exec(env, victim, perturb, mode);
  const AttackRule rule = [&](const EnvState& s) -> std::optional<std::pair<Action, std::optional<double>>> {
    if (s.t % n != 0) return std::nullopt;
    return std::pair<Action, std::optional<double>>{least_preferred(victim, s.obs), std::nullopt};
  };
  return over_seeds(seeds, [&](std::uint64_t seed) {
    return scheduled_episode(env, victim, exec, rule, seed, "every_n", static_cast<double>(n));
  });
}

double preference_gap(const Policy& victim, std::span<const double> s) {
  const Eigen::VectorXd p = victim.distribution(s);
  return p.maxCoeff() - p.minCoeff();
}

std::vector<EpisodeReport> run_st(const Env& env, const Policy& victim, double threshold, const PerturbConfig& perturb,
                                  std::span<const std::uint64_t> seeds, CraftMode mode) {
  if (!victim.is_discrete()) {
    throw UnsupportedMethodError("the strategically-timed attack needs a discrete victim policy");
  }
  const AttackExecutor exec(env, victim, perturb, mode);
  const AttackRule rule = [&](const EnvState& s) -> std::optional<std::pair<Action, std::optional<double>>> {
    const Eigen::VectorXd p = victim.distribution(s.obs);
    const double c = p.maxCoeff() - p.minCoeff();
    if (!(c > threshold)) return std::nullopt;
    return std::pair<Action, std::optional<double>>{Action::discrete(argmin_lowest(p)), c};
  };
  return over_seeds(seeds, [&](std::uint64_t seed) { return scheduled_episode(env, victim, exec, rule, seed, "st", threshold); });
}

std::vector<EpisodeReport> run_cp(const Env& env, const Policy& victim, const Predictor& predictor, const CpConfig& cfg,
                                  const PerturbConfig& perturb, std::span<const std::uint64_t> seeds) {
  return over_seeds(seeds, [&](std::uint64_t seed) { return run_cp_episode(env, victim, predictor, cfg, perturb, seed); });
}

std::vector<EpisodeReport> run_antagonist(const Env& env, const Policy& victim, const AntagonistPolicy& ant,
                                          int budget, CraftMode mode, const PerturbConfig& perturb,
                                          std::span<const std::uint64_t> seeds) {
  const AntRunConfig run{.budget = budget, .craft_mode = mode, .mode = AntMode::eval};
  return over_seeds(seeds, [&](std::uint64_t seed) {
    return run_antagonist_episode(env, victim, ant, run, perturb, seed).report;
  });
}

// ---------------------------------------------------------------------------

std::string_view to_string(Method m) {
  switch (m) {
    case Method::clean: return "clean";
    case Method::cp: return "cp";
    case Method::antagonist: return "antagonist";
    case Method::uniform: return "uniform";
    case Method::every_n: return "every_n";
    case Method::st: return "st";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::clean, Method::cp, Method::antagonist, Method::uniform, Method::every_n, Method::st}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  ExperimentConfig e;
  e.env_id = c.get_string("env", e.env_id);
  e.env_cfg = c.subtree("env.");
  e.victim_path = c.get_string("victim", e.victim_path);
  e.method = parse_method(c.get_string("method", "clean"));
  const Config m = c.subtree("method.");
  if (e.method == Method::cp) e.cp = CpConfig::from_config(m);
  e.pm = c.get_string("pm", e.pm);
  e.ant_path = c.get_string("ant", e.ant_path);
  e.ant_train = AntTrainConfig::from_config(c.subtree("ant."));
  e.craft_mode = parse_craft_mode(c.get_string("craft", "full"));
  Config p = c.subtree("perturb.");
  // FGSM is the crafting method of the per-step and every-N baselines.
  if ((e.method == Method::uniform || e.method == Method::every_n) && !p.contains("method")) p.set("method", "fgsm");
  e.perturb = PerturbConfig::from_config(p);
  e.seeds = c.get_seeds("seeds", e.seeds);
  e.out = c.get_string("out", e.out.string());
  switch (e.method) {
    case Method::cp: e.param = m.get_double("delta", e.cp.delta); break;
    case Method::st: e.param = m.get_double("c", 0.5); break;
    case Method::every_n: e.param = static_cast<double>(m.get_int("n", 4)); break;
    case Method::antagonist: e.param = static_cast<double>(m.get_int("budget", e.ant_train.budget)); break;
    default: e.param = 0.0;
  }
  e.cp.craft_mode = e.craft_mode;
  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (victim_path.empty()) throw ConfigError("victim is required");
  perturb.validate();
  switch (method) {
    case Method::cp: cp.validate(); break;
    case Method::every_n:
      if (param < 1) throw ConfigError("method.n must be >= 1");
      break;
    case Method::antagonist:
      if (param < 1) throw ConfigError("method.budget must be >= 1");
      break;
    default: break;
  }
}

void check_comparable(std::span<const ExperimentConfig> configs) {
  if (configs.empty()) return;
  const ExperimentConfig& a = configs.front();
  for (const auto& b : configs.subspan(1)) {
    if (b.victim_path != a.victim_path) throw ConfigError("compared methods must share the victim");
    if (b.env_id != a.env_id || b.env_cfg.entries() != a.env_cfg.entries()) {
      throw ConfigError("compared methods must share env constants");
    }
    if (b.seeds != a.seeds) throw ConfigError("compared methods must share seeds");
    const auto& p = a.perturb;
    const auto& q = b.perturb;
    if (p.eps_inf != q.eps_inf || p.lambda != q.lambda || p.iters != q.iters || p.lr != q.lr || p.kappa != q.kappa ||
        p.tol_cont != q.tol_cont || p.restarts != q.restarts) {
      throw ConfigError("compared methods must share perturbation settings");
    }
  }
}

Policy load_victim(const std::filesystem::path& path, const EnvSpec& spec) {
  Mlp net = load_model(path);
  const int out = spec.actions.is_discrete() ? spec.actions.k : spec.actions.dim;
  if (net.input_dim() != static_cast<int>(spec.state_dim) || net.output_dim() != out) {
    throw DimensionError("victim " + path.string() + " does not match env '" + spec.id + "'");
  }
  if (spec.actions.is_discrete() != (net.head() == Head::softmax)) {
    throw DimensionError("victim " + path.string() + " has the wrong head for env '" + spec.id + "'");
  }
  return Policy(std::move(net), spec.actions.is_discrete() ? -1.0 : spec.actions.lo,
                spec.actions.is_discrete() ? 1.0 : spec.actions.hi);
}

std::unique_ptr<Predictor> load_predictor(const std::string& pm, const Env& env) {
  if (pm == "oracle") return std::make_unique<OraclePredictor>(env);
  return std::make_unique<LearnedPredictor>(load_model(pm), env.spec());
}

void save_antagonist(const AntagonistPolicy& ant, const std::filesystem::path& path) { save_model(ant.net(), path); }

AntagonistPolicy load_antagonist(const std::filesystem::path& path, const EnvSpec& spec) {
  Mlp net = load_model(path);
  if (net.input_dim() != static_cast<int>(spec.state_dim)) {
    throw DimensionError("antagonist " + path.string() + " does not match env '" + spec.id + "'");
  }
  return AntagonistPolicy(std::move(net), spec.actions);
}

Experiment::Experiment(ExperimentConfig cfg)
    : Experiment(cfg, std::shared_ptr<const Env>(make_env(cfg.env_id, cfg.env_cfg)), Policy(Mlp())) {}

Experiment::Experiment(ExperimentConfig cfg, std::shared_ptr<const Env> env, Policy victim)
    : cfg_(std::move(cfg)), env_(std::move(env)), victim_(std::move(victim)) {
  if (victim_.net().sizes().empty()) victim_ = load_victim(cfg_.victim_path, env_->spec());
  if (cfg_.method == Method::cp) predictor_ = load_predictor(cfg_.pm, *env_);
  if (cfg_.method == Method::antagonist && !cfg_.ant_path.empty()) ant_ = load_antagonist(cfg_.ant_path, env_->spec());
  if (cfg_.method == Method::st && !victim_.is_discrete()) {
    throw UnsupportedMethodError("the strategically-timed attack needs a discrete victim policy");
  }
}

const Predictor& Experiment::predictor() const { return *predictor_; }

std::vector<EpisodeReport> Experiment::run(double param) const {
  const Env& env = *env_;
  switch (cfg_.method) {
    case Method::clean: return run_clean(env, victim_, cfg_.seeds);
    case Method::uniform: return run_uniform(env, victim_, cfg_.perturb, cfg_.seeds, cfg_.craft_mode);
    case Method::every_n: {
      if (param < 1 || param != std::floor(param)) throw std::invalid_argument("every_n needs an integer n >= 1");
      return run_every_n(env, victim_, static_cast<int>(param), cfg_.perturb, cfg_.seeds, cfg_.craft_mode);
    }
    case Method::st: return run_st(env, victim_, param, cfg_.perturb, cfg_.seeds, cfg_.craft_mode);
    case Method::cp: {
      CpConfig c = cfg_.cp;
      c.delta = param;
      return run_cp(env, victim_, predictor(), c, cfg_.perturb, cfg_.seeds);
    }
    case Method::antagonist: {
      if (param < 1 || param != std::floor(param)) throw std::invalid_argument("antagonist budget must be an integer >= 1");
      const int budget = static_cast<int>(param);
      if (ant_) return run_antagonist(env, victim_, *ant_, budget, cfg_.craft_mode, cfg_.perturb, cfg_.seeds);
      AntTrainConfig t = cfg_.ant_train;
      t.budget = budget;
      const AntTrainResult trained = train_antagonist(env, victim_, t, cfg_.perturb);
      return run_antagonist(env, victim_, trained.policy, budget, cfg_.craft_mode, cfg_.perturb, cfg_.seeds);
    }
  }
  throw std::logic_error("unhandled method");
}

// ---------------------------------------------------------------------------

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::delta: return "delta";
    case SweepAxis::c: return "c";
    case SweepAxis::budget: return "budget";
    case SweepAxis::n: return "n";
  }
  return "?";
}

SweepAxis parse_axis(std::string_view s) {
  for (SweepAxis a : {SweepAxis::delta, SweepAxis::c, SweepAxis::budget, SweepAxis::n}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

SweepRow summarize(double value, std::span<const EpisodeReport> reports) {
  SweepRow row;
  row.value = value;
  row.episodes = reports.size();
  if (reports.empty()) return row;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    row.mean_return += r.ret;
    row.mean_attacks += r.attack_count();
  }
  row.mean_return /= n;
  row.mean_attacks /= n;
  double var = 0.0;
  for (const auto& r : reports) var += (r.ret - row.mean_return) * (r.ret - row.mean_return);
  row.std_return = std::sqrt(var / n);
  return row;
}

namespace {

Method axis_method(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::delta: return Method::cp;
    case SweepAxis::c: return Method::st;
    case SweepAxis::budget: return Method::antagonist;
    case SweepAxis::n: return Method::every_n;
  }
  return Method::clean;
}

}  // namespace

SweepResult sweep(const Experiment& exp, SweepAxis axis, std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  if (axis_method(axis) != exp.config().method) {
    throw ConfigError("sweep axis '" + std::string(to_string(axis)) + "' does not apply to method '" +
                      std::string(to_string(exp.config().method)) + "'");
  }
  SweepResult res;
  res.axis = axis;
  res.method = std::string(to_string(exp.config().method));
  for (double v : values) {
    try {
      auto reports = exp.run(v);
      res.rows.push_back(summarize(v, reports));
      res.reports.insert(res.reports.end(), reports.begin(), reports.end());
    } catch (const std::exception& e) {
      SweepRow row;
      row.value = v;
      row.error = e.what();
      res.rows.push_back(row);
    }
  }
  return res;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

nlohmann::ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

}  // namespace

void write_report(std::vector<EpisodeReport> reports, const SweepResult* sw, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
  std::stable_sort(reports.begin(), reports.end(), [](const EpisodeReport& a, const EpisodeReport& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.param != b.param) return a.param < b.param;
    return a.seed < b.seed;
  });

  std::ostringstream csv;
  csv << "seed,method,param,return,length,attack_count,done_cause,max_linf\n";
  for (const auto& r : reports) {
    csv << r.seed << ',' << r.method << ',' << format_double(r.param) << ',' << format_double(r.ret) << ',' << r.length
        << ',' << r.attack_count() << ',' << to_string(r.cause) << ',' << format_double(r.max_linf()) << '\n';
  }
  write_text(out_dir / "episodes.csv", csv.str());

  nlohmann::ordered_json sj;
  nlohmann::ordered_json pj;
  if (sw != nullptr) {
    sj["axis"] = std::string(to_string(sw->axis));
    sj["method"] = sw->method;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    nlohmann::ordered_json xs = nlohmann::ordered_json::array();
    nlohmann::ordered_json ys = nlohmann::ordered_json::array();
    nlohmann::ordered_json es = nlohmann::ordered_json::array();
    nlohmann::ordered_json as = nlohmann::ordered_json::array();
    for (const auto& row : sw->rows) {
      nlohmann::ordered_json r;
      r["value"] = num(row.value);
      r["mean_return"] = row.mean_return;
      r["std_return"] = row.std_return;
      r["mean_attacks"] = row.mean_attacks;
      r["episodes"] = row.episodes;
      if (row.error) r["error"] = *row.error;
      rows.push_back(r);
      if (row.error) continue;
      xs.push_back(num(row.value));
      ys.push_back(row.mean_return);
      es.push_back(row.std_return);
      as.push_back(row.mean_attacks);
    }
    sj["rows"] = rows;
    nlohmann::ordered_json fig;
    fig["name"] = sw->method + "_return_vs_" + std::string(to_string(sw->axis));
    fig["x_label"] = std::string(to_string(sw->axis));
    fig["y_label"] = "accumulated reward";
    fig["x"] = xs;
    fig["y"] = ys;
    fig["err"] = es;
    nlohmann::ordered_json fig2;
    fig2["name"] = sw->method + "_attacks_vs_" + std::string(to_string(sw->axis));
    fig2["x_label"] = std::string(to_string(sw->axis));
    fig2["y_label"] = "attacked steps per episode";
    fig2["x"] = xs;
    fig2["y"] = as;
    fig2["err"] = nlohmann::ordered_json::array();
    pj["figures"] = nlohmann::ordered_json::array({fig, fig2});
  } else {
    sj["axis"] = nullptr;
    sj["rows"] = nlohmann::ordered_json::array();
    pj["figures"] = nlohmann::ordered_json::array();
  }
  write_text(out_dir / "sweep.json", sj.dump(2) + "\n");
  write_text(out_dir / "plotdata.json", pj.dump(2) + "\n");
}

std::vector<EpisodeRow> read_episodes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "seed,method,param,return,length,attack_count,done_cause,max_linf") {
    throw std::runtime_error(path.string() + ": unexpected header");
  }
  std::vector<EpisodeRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    EpisodeRow r;
    r.seed = std::stoull(f[0]);
    r.method = f[1];
    r.param = std::stod(f[2]);
    r.ret = std::stod(f[3]);
    r.length = std::stoi(f[4]);
    r.attack_count = std::stoi(f[5]);
    r.done_cause = f[6];
    r.max_linf = std::stod(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rlattack
