#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rlattack/harness.hpp"

using namespace rlattack;
using nlohmann::ordered_json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

Config base_config(const Globals& g) { return g.config.empty() ? Config{} : Config::load(g.config); }

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw ConfigError("not a number: '" + cell + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "'");
}

Action parse_action(const ActionSpace& space, const std::string& text) {
  if (space.is_discrete()) {
    std::size_t used = 0;
    const int i = std::stoi(text, &used);
    if (used != text.size()) throw ConfigError("bad action '" + text + "'");
    Action a = Action::discrete(i);
    space.validate(a);
    return a;
  }
  Action a = Action::continuous(parse_doubles(text));
  space.validate(a);
  return a;
}

ordered_json action_json(const Action& a) {
  if (a.is_discrete()) return a.index();
  return a.values();
}

ordered_json report_json(const EpisodeReport& r) {
  ordered_json j;
  j["seed"] = r.seed;
  j["method"] = r.method;
  j["param"] = r.param;
  j["return"] = r.ret;
  j["length"] = r.length;
  j["done_cause"] = std::string(to_string(r.cause));
  j["attack_count"] = r.attack_count();
  j["attacked_steps"] = r.attacked_steps();
  j["mean_linf"] = r.mean_linf();
  j["max_linf"] = r.max_linf();
  ordered_json attacks = ordered_json::array();
  for (const auto& a : r.attacks) {
    ordered_json x;
    x["step"] = a.step;
    x["target"] = action_json(a.target);
    x["taken"] = action_json(a.taken);
    x["success"] = a.success;
    x["linf"] = a.linf;
    x["l2"] = a.l2;
    if (a.trigger) x["trigger"] = *a.trigger;
    attacks.push_back(x);
  }
  j["attacks"] = attacks;
  return j;
}

void write_json(const std::string& path, const ordered_json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::string require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw ConfigError(std::string("--out is required for ") + what);
  return g.out;
}

// ---------------------------------------------------------------------------

struct TrainAgentArgs {
  std::string env = "lanekeep";
  std::string algo = "bc";
  int episodes = 0;
  int epochs = 0;
  int iterations = 0;
};

int train_agent(const Globals& g, const TrainAgentArgs& a) {
  const Config cfg = base_config(g);
  const auto env = make_env(a.env, cfg.subtree("env."));
  const std::string out = require_out(g, "train-agent");
  const std::uint64_t seed = g.seed.value_or(1);
  std::optional<Policy> policy;
  if (a.algo == "bc") {
    BcConfig bc;
    bc.seed = seed;
    bc.fit.seed = seed;
    bc.episodes = static_cast<int>(cfg.get_int("bc.episodes", a.episodes > 0 ? a.episodes : bc.episodes));
    bc.fit.epochs = static_cast<int>(cfg.get_int("bc.epochs", a.epochs > 0 ? a.epochs : bc.fit.epochs));
    bc.explore = cfg.get_double("bc.explore", bc.explore);
    policy = train_bc(*env, bc).policy;
  } else if (a.algo == "reinforce") {
    ReinforceConfig rc;
    rc.seed = seed;
    rc.iterations = static_cast<int>(cfg.get_int("reinforce.iterations", a.iterations > 0 ? a.iterations : rc.iterations));
    rc.lr = cfg.get_double("reinforce.lr", rc.lr);
    policy = train_reinforce(*env, rc).policy;
  } else {
    throw ConfigError("unknown algo '" + a.algo + "' (bc|reinforce)");
  }
  save_model(policy->net(), out);
  const EvalStats st = evaluate(*policy, *env, default_seeds());
  std::printf("saved %s  mean_return=%.4f crash_rate=%.3f", out.c_str(), st.mean_return, st.crash_rate);
  if (st.catch_rate) std::printf(" catch_rate=%.3f", *st.catch_rate);
  std::printf("\n");
  return 0;
}

struct TrainPmArgs {
  std::string env = "lanekeep";
  std::string policy;
  int steps = 20000;
  double noise = 0.3;
  std::string activation = "tanh";
  int epochs = 0;
  std::string data;
};

int train_pm_cmd(const Globals& g, const TrainPmArgs& a) {
  const Config cfg = base_config(g);
  const auto env = make_env(a.env, cfg.subtree("env."));
  const std::string out = require_out(g, "train-pm");
  const std::uint64_t seed = g.seed.value_or(1);
  Controller ctl;
  std::optional<Policy> victim;
  if (a.policy.empty()) {
    ctl = [&](std::span<const double> s) { return env->expert(s); };
  } else {
    victim = load_victim(a.policy, env->spec());
    ctl = victim->controller();
  }
  const TransitionDataset data = collect_transitions(*env, ctl, a.steps, a.noise, seed);
  if (!a.data.empty()) save_dataset_csv(data, a.data);
  PmConfig pc;
  pc.activation = parse_activation(a.activation);
  pc.fit.seed = seed;
  if (a.epochs > 0) pc.fit.epochs = a.epochs;
  const PmTrainResult res = train_pm(data, env->spec(), pc);
  save_model(res.model.net(), out);
  std::printf("saved %s  transitions=%zu train_mse=%.6g test_mse=%.6g\n", out.c_str(), data.size(), res.train_mse,
              res.test_mse.value_or(std::nan("")));
  return 0;
}

struct TrainAntArgs {
  std::string env = "catch";
  std::string victim;
  int budget = 0;
  int episodes = 0;
  int iterations = 0;
  std::string craft;
  std::string curve;
};

int train_ant_cmd(const Globals& g, const TrainAntArgs& a) {
  Config cfg = base_config(g);
  const auto env = make_env(a.env, cfg.subtree("env."));
  const std::string out = require_out(g, "train-ant");
  const Policy victim = load_victim(a.victim, env->spec());
  Config ac = cfg.subtree("ant.");
  if (a.budget > 0) ac.set("budget", std::to_string(a.budget));
  if (a.episodes > 0) ac.set("episodes_per_iter", std::to_string(a.episodes));
  if (a.iterations > 0) ac.set("iterations", std::to_string(a.iterations));
  if (!a.craft.empty()) ac.set("craft", a.craft);
  if (g.seed) ac.set("seed", std::to_string(*g.seed));
  const AntTrainConfig tc = AntTrainConfig::from_config(ac);
  const PerturbConfig pc = PerturbConfig::from_config(cfg.subtree("perturb."));
  const AntTrainResult res = train_antagonist(*env, victim, tc, pc);
  save_antagonist(res.policy, out);
  const std::string curve = a.curve.empty() ? out + ".curve.csv" : a.curve;
  std::ofstream c(curve);
  if (!c) throw std::runtime_error("cannot write " + curve);
  c << "iteration,mean_return,mean_attacks_per_episode\n";
  for (const auto& p : res.curve) {
    c << p.iteration << ',' << format_double(p.mean_return) << ',' << format_double(p.mean_attacks) << '\n';
  }
  const auto reports = run_antagonist(*env, victim, res.policy, tc.budget, tc.craft_mode, pc, default_seeds());
  const SweepRow row = summarize(tc.budget, reports);
  std::printf("saved %s and %s  eval mean_return=%.4f mean_attacks=%.3f\n", out.c_str(), curve.c_str(),
              row.mean_return, row.mean_attacks);
  return 0;
}

// Flags of `attack`/`sweep` that map onto experiment config keys.
struct ExperimentFlags {
  std::string env;
  std::string policy;
  std::string pm;
  std::string ant;
  std::string craft;
  std::string seeds;
  std::vector<std::pair<std::string, std::string>> method_keys;
  std::optional<double> eps;
  std::string perturb_method;

  void apply(Config& c, const Globals& g) const {
    if (!env.empty()) c.set("env", env);
    if (!policy.empty()) c.set("victim", policy);
    if (!pm.empty()) c.set("pm", pm);
    if (!ant.empty()) c.set("ant", ant);
    if (!craft.empty()) c.set("craft", craft);
    if (!seeds.empty()) c.set("seeds", seeds);
    else if (g.seed) c.set("seeds", std::to_string(*g.seed));
    for (const auto& [k, v] : method_keys) c.set("method." + k, v);
    if (eps) c.set("perturb.eps_inf", format_double(*eps));
    if (!perturb_method.empty()) c.set("perturb.method", perturb_method);
  }
};

void add_experiment_flags(CLI::App* sub, ExperimentFlags& f, std::vector<std::pair<const char*, std::string>>& raw) {
  sub->add_option("--env", f.env, "environment id");
  sub->add_option("--policy,--victim", f.policy, "victim model file");
  sub->add_option("--pm", f.pm, "oracle or a prediction-model file");
  sub->add_option("--ant", f.ant, "trained antagonist file");
  sub->add_option("--craft", f.craft, "oracle|full");
  sub->add_option("--seeds", f.seeds, "seed list, e.g. 1..20 or 1,2,3");
  sub->add_option("--eps", f.eps, "perturbation budget (normalized linf)");
  sub->add_option("--perturb-method", f.perturb_method, "cw|fgsm");
  static const char* keys[] = {"n", "m", "delta", "selection", "planner", "budget", "c", "every", "grid_count"};
  raw.clear();
  for (const char* k : keys) raw.emplace_back(k, std::string());
  for (auto& [k, v] : raw) sub->add_option(std::string("--") + k, v, std::string("method.") + k);
}

void collect_method_keys(ExperimentFlags& f, const std::vector<std::pair<const char*, std::string>>& raw) {
  for (const auto& [k, v] : raw) {
    if (v.empty()) continue;
    // every_n's period shares the key `n` with the CP plan length.
    f.method_keys.emplace_back(std::string(k) == "every" ? "n" : k, v);
  }
}

int attack_cmd(const Globals& g, const std::string& method, const ExperimentFlags& f) {
  Config c = base_config(g);
  c.set("method", method);
  f.apply(c, g);
  const ExperimentConfig ec = ExperimentConfig::from_config(c);
  const Experiment exp(ec);
  const auto reports = exp.run(ec.param);
  const SweepRow row = summarize(ec.param, reports);
  ordered_json j;
  j["env"] = ec.env_id;
  j["method"] = std::string(to_string(ec.method));
  j["param"] = ec.param;
  j["craft"] = std::string(to_string(ec.craft_mode));
  j["mean_return"] = row.mean_return;
  j["std_return"] = row.std_return;
  j["mean_attacks"] = row.mean_attacks;
  ordered_json eps = ordered_json::array();
  for (const auto& r : reports) eps.push_back(report_json(r));
  j["episodes"] = eps;
  write_json(g.out.empty() ? "report.json" : g.out, j);
  std::printf("%s param=%s mean_return=%.4f std=%.4f mean_attacks=%.3f episodes=%zu\n",
              std::string(to_string(ec.method)).c_str(), format_double(ec.param).c_str(), row.mean_return,
              row.std_return, row.mean_attacks, row.episodes);
  return 0;
}

int sweep_cmd(const Globals& g, const std::string& method, const std::string& axis, const std::string& values,
              const ExperimentFlags& f) {
  Config c = base_config(g);
  if (!method.empty()) c.set("method", method);
  f.apply(c, g);
  const ExperimentConfig ec = ExperimentConfig::from_config(c);
  const Experiment exp(ec);
  const SweepAxis ax = parse_axis(axis);
  const auto vals = parse_doubles(values);
  const SweepResult res = sweep(exp, ax, vals);
  const std::filesystem::path out = g.out.empty() ? ec.out : std::filesystem::path(g.out);
  write_report(res.reports, &res, out);
  int failed = 0;
  std::printf("%-12s %12s %10s %12s\n", axis.c_str(), "mean_return", "std", "mean_attacks");
  for (const auto& r : res.rows) {
    if (r.error) {
      ++failed;
      std::printf("%-12g error: %s\n", r.value, r.error->c_str());
    } else {
      std::printf("%-12g %12.4f %10.4f %12.3f\n", r.value, r.mean_return, r.std_return,
                  r.mean_attacks);
    }
  }
  std::printf("wrote %s\n", out.string().c_str());
  return failed == 0 ? 0 : 1;
}

int eval_cmd(const Globals& g, const std::string& env_id, const std::string& policy_path, const std::string& seeds) {
  const Config cfg = base_config(g);
  const auto env = make_env(env_id, cfg.subtree("env."));
  std::vector<std::uint64_t> s = seeds.empty() ? default_seeds() : parse_seed_list(seeds);
  if (seeds.empty() && g.seed) s = {*g.seed};
  EvalStats st;
  if (policy_path.empty() || policy_path == "expert") {
    st = evaluate(*env, [&](std::span<const double> x) { return env->expert(x); }, s);
  } else {
    st = evaluate(load_victim(policy_path, env->spec()), *env, s);
  }
  ordered_json j;
  j["env"] = env_id;
  j["policy"] = policy_path.empty() ? "expert" : policy_path;
  j["mean_return"] = st.mean_return;
  j["std_return"] = st.std_return;
  j["mean_length"] = st.mean_length;
  j["crash_rate"] = st.crash_rate;
  if (st.catch_rate) j["catch_rate"] = *st.catch_rate;
  ordered_json eps = ordered_json::array();
  for (std::size_t i = 0; i < st.episodes.size(); ++i) {
    const auto& e = st.episodes[i];
    eps.push_back({{"seed", s[i]}, {"return", e.ret}, {"length", e.length}, {"done_cause", std::string(to_string(e.cause))}});
  }
  j["episodes"] = eps;
  write_json(g.out, j);
  return 0;
}

struct CraftArgs {
  std::string env = "catch";
  std::string victim;
  std::string state;
  std::string target;
  std::string method = "cw";
  std::optional<double> eps;
};

int craft_cmd(const Globals& g, const CraftArgs& a) {
  const Config cfg = base_config(g);
  const auto env = make_env(a.env, cfg.subtree("env."));
  const Policy victim = load_victim(a.victim, env->spec());
  const auto vals = parse_doubles(a.state);
  const StateVec s(vals.begin(), vals.end());
  if (s.size() != env->spec().state_dim) throw DimensionError("state has the wrong length for " + a.env);
  PerturbConfig pc = PerturbConfig::from_config(cfg.subtree("perturb."));
  pc.method = parse_craft_method(a.method);
  if (a.eps) pc.eps_inf = *a.eps;
  pc.validate();
  const Action target = parse_action(env->spec().actions, a.target);
  const CraftResult r = craft(victim, env->spec(), s, target, pc);
  ordered_json j;
  j["method"] = std::string(to_string(pc.method));
  j["target"] = action_json(target);
  j["success"] = r.success;
  j["delta"] = r.delta;
  j["perturbed"] = r.perturbed;
  j["linf"] = r.linf;
  j["l2"] = r.l2;
  j["iters_used"] = r.iters_used;
  j["greedy_before"] = action_json(victim.greedy(s));
  j["greedy_after"] = action_json(victim.greedy(r.perturbed));
  write_json(g.out, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial attacks on RL agents: critical point, antagonist, crafting and baselines"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed");
  app.add_option("--out", g.out, "output path");
  app.fallthrough();

  int rc = 0;

  TrainAgentArgs ta;
  auto* sub_ta = app.add_subcommand("train-agent", "train a victim policy");
  sub_ta->add_option("--env", ta.env);
  sub_ta->add_option("--algo", ta.algo, "bc|reinforce");
  sub_ta->add_option("--episodes", ta.episodes, "BC rollout episodes");
  sub_ta->add_option("--epochs", ta.epochs, "BC epochs");
  sub_ta->add_option("--iterations", ta.iterations, "REINFORCE iterations");
  sub_ta->callback([&] { rc = train_agent(g, ta); });

  TrainPmArgs tp;
  auto* sub_tp = app.add_subcommand("train-pm", "collect transitions and train a prediction model");
  sub_tp->add_option("--env", tp.env);
  sub_tp->add_option("--policy", tp.policy, "rollout policy file (default: env expert)");
  sub_tp->add_option("--steps", tp.steps, "transitions to collect");
  sub_tp->add_option("--noise", tp.noise, "exploration noise / epsilon");
  sub_tp->add_option("--activation", tp.activation, "tanh|relu");
  sub_tp->add_option("--epochs", tp.epochs);
  sub_tp->add_option("--data", tp.data, "also write the dataset CSV here");
  sub_tp->callback([&] { rc = train_pm_cmd(g, tp); });

  TrainAntArgs tn;
  auto* sub_tn = app.add_subcommand("train-ant", "train an antagonist policy");
  sub_tn->add_option("--env", tn.env);
  sub_tn->add_option("--victim", tn.victim)->required();
  sub_tn->add_option("--budget", tn.budget, "attack budget N");
  sub_tn->add_option("--episodes", tn.episodes, "episodes per iteration");
  sub_tn->add_option("--iterations", tn.iterations);
  sub_tn->add_option("--craft", tn.craft, "oracle|full");
  sub_tn->add_option("--curve", tn.curve, "learning curve CSV (default: <out>.curve.csv)");
  sub_tn->callback([&] { rc = train_ant_cmd(g, tn); });

  std::string attack_method;
  ExperimentFlags af;
  std::vector<std::pair<const char*, std::string>> araw;
  auto* sub_at = app.add_subcommand("attack", "run one attack method over the seeds and write report.json");
  sub_at->add_option("method", attack_method, "cp|antagonist|uniform|every_n|st|clean")->required();
  add_experiment_flags(sub_at, af, araw);
  sub_at->callback([&] {
    collect_method_keys(af, araw);
    rc = attack_cmd(g, attack_method, af);
  });

  std::string sweep_method, sweep_axis, sweep_values;
  ExperimentFlags sf;
  std::vector<std::pair<const char*, std::string>> sraw;
  auto* sub_sw = app.add_subcommand("sweep", "sweep a method parameter and write episodes.csv, sweep.json, plotdata.json");
  sub_sw->add_option("--method", sweep_method, "cp|antagonist|every_n|st");
  sub_sw->add_option("--axis", sweep_axis, "delta|c|budget|n")->required();
  sub_sw->add_option("--values", sweep_values, "comma-separated axis values")->required();
  add_experiment_flags(sub_sw, sf, sraw);
  sub_sw->callback([&] {
    collect_method_keys(sf, sraw);
    rc = sweep_cmd(g, sweep_method, sweep_axis, sweep_values, sf);
  });

  std::string ev_env = "lanekeep", ev_policy, ev_seeds;
  auto* sub_ev = app.add_subcommand("eval", "evaluate a policy (or the expert) without attacks");
  sub_ev->add_option("--env", ev_env);
  sub_ev->add_option("--policy", ev_policy, "model file or 'expert'");
  sub_ev->add_option("--seeds", ev_seeds);
  sub_ev->callback([&] { rc = eval_cmd(g, ev_env, ev_policy, ev_seeds); });

  CraftArgs ca;
  auto* sub_cr = app.add_subcommand("craft", "craft one perturbation and print it as JSON");
  sub_cr->add_option("--env", ca.env);
  sub_cr->add_option("--victim", ca.victim)->required();
  sub_cr->add_option("--state", ca.state, "comma-separated state")->required();
  sub_cr->add_option("--target", ca.target, "action index or comma-separated values")->required();
  sub_cr->add_option("--method", ca.method, "cw|fgsm");
  sub_cr->add_option("--eps", ca.eps);
  sub_cr->callback([&] { rc = craft_cmd(g, ca); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
