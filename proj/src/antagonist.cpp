#include "rlattack/antagonist.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rlattack {

namespace {

int target_dim(const ActionSpace& a) { return a.is_discrete() ? a.k : a.dim; }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

void fit_value(Mlp& value, const std::vector<const AntStep*>& rows, const std::vector<double>& returns,
               OptimizerState& st, const AntTrainConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) return;
  Eigen::MatrixXd x(value.input_dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = rows[static_cast<std::size_t>(j)]->s[static_cast<std::size_t>(i)];
  }
  const OptimizerConfig opt{.kind = OptimizerConfig::Kind::adam, .lr = cfg.value_lr};
  for (int k = 0; k < cfg.value_steps; ++k) {
    const Eigen::MatrixXd v = value.logits_batch(x);
    Eigen::MatrixXd up(1, n);
    for (Eigen::Index j = 0; j < n; ++j) up(0, j) = 2.0 * (v(0, j) - returns[static_cast<std::size_t>(j)]) / static_cast<double>(n);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(value.param_count()));
    value.backward_logits_batch(x, up, grad);
    optimizer_step(value.params(), grad, st, opt);
  }
}

}  // namespace

AntagonistPolicy::AntagonistPolicy(Mlp net, ActionSpace actions) : net_(std::move(net)), actions_(actions) {
  if (net_.head() != Head::linear) throw DimensionError("antagonist network needs a linear head");
  if (net_.output_dim() != 1 + target_dim(actions_)) {
    throw DimensionError("antagonist network output does not match the victim's action space");
  }
}

AntagonistPolicy AntagonistPolicy::init(const EnvSpec& spec, const std::vector<int>& hidden, double gate_bias,
                                        std::uint64_t seed) {
  std::vector<int> sizes{static_cast<int>(spec.state_dim)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1 + target_dim(spec.actions));
  Mlp net = Mlp::xavier(sizes, Activation::tanh, Head::linear, seed);
  net.input_normalizer() = range_normalizer(spec);
  // Output biases sit at the end of the parameter vector; index 0 is the gate.
  net.params()(static_cast<Eigen::Index>(net.param_count()) - sizes.back()) = gate_bias;
  return {std::move(net), spec.actions};
}

AntDecision ant_decide(const AntagonistPolicy& ant, std::span<const double> s) {
  const Eigen::VectorXd z = ant.net().forward(s);
  AntDecision d;
  d.p = sigmoid(z(0));
  const ActionSpace& a = ant.actions();
  if (a.is_discrete()) {
    d.target = softmax(z.tail(a.k));
    d.greedy = Action::discrete(argmax_lowest(d.target));
  } else {
    const double mid = 0.5 * (a.lo + a.hi);
    const double half = 0.5 * (a.hi - a.lo);
    d.target = (mid + half * z.tail(a.dim).array().tanh()).matrix();
    d.greedy = Action::continuous(std::vector<double>(d.target.data(), d.target.data() + d.target.size()));
  }
  return d;
}

AntEpisode run_antagonist_episode(const Env& env, const Policy& victim, const AntagonistPolicy& ant,
                                  const AntRunConfig& run, const PerturbConfig& perturb, std::uint64_t seed,
                                  Rng* rng) {
  if (run.budget < 1) throw std::invalid_argument("antagonist budget must be >= 1");
  if (run.mode == AntMode::train && rng == nullptr) throw std::invalid_argument("training episodes need an rng");
  const ActionSpace& space = env.spec().actions;
  const AttackExecutor exec(env, victim, perturb, run.craft_mode);
  AntEpisode out;
  EpisodeReport& rep = out.report;
  rep.seed = seed;
  rep.method = "antagonist";
  rep.param = run.budget;
  int attack_num = 0;
  EnvState s = env.reset(seed);
  while (!s.done) {
    const AntDecision d = ant_decide(ant, s.obs);
    AntStep step;
    step.s = s.obs;
    step.p = d.p;
    step.gate_active = attack_num < run.budget;
    step.target = d.greedy;
    if (run.mode == AntMode::train) {
      if (step.gate_active) step.gate_open = rng->bernoulli(d.p);
      if (space.is_discrete()) {
        const double u = rng->uniform();
        double acc = 0.0;
        int pick = space.k - 1;
        for (int i = 0; i < space.k; ++i) {
          acc += d.target(i);
          if (u < acc) {
            pick = i;
            break;
          }
        }
        step.target = Action::discrete(pick);
      } else {
        std::vector<double> v(static_cast<std::size_t>(space.dim));
        for (int i = 0; i < space.dim; ++i) {
          v[static_cast<std::size_t>(i)] = std::clamp(d.target(i) + run.target_std * rng->normal(), space.lo, space.hi);
        }
        step.target = Action::continuous(std::move(v));
      }
    } else {
      step.gate_open = step.gate_active && d.p > 0.5;
    }

    Action a = Action::discrete(0);
    if (step.gate_open) {
      AttackRecord rec;
      rec.step = s.t;
      rec.trigger = d.p;
      a = exec.attack(s.obs, step.target, rec);
      rep.attacks.push_back(std::move(rec));
      ++attack_num;
      if (attack_num > run.budget) throw std::logic_error("antagonist: attack budget exceeded");
    } else {
      a = victim.greedy(s.obs);
    }
    StepResult r = env.step(s, a);
    step.r_adv = -r.reward;
    step.s_next = r.next.obs;
    record_step(rep, r);
    out.steps.push_back(std::move(step));
    s = std::move(r.next);
  }
  return out;
}

// ---------------------------------------------------------------------------

void AntTrainConfig::validate() const {
  if (budget < 1) throw ConfigError("antagonist budget must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("antagonist gamma must be in [0, 1)");
  if (iterations < 0 || episodes_per_iter < 1) throw ConfigError("antagonist needs episodes_per_iter >= 1");
  if (!(lr > 0.0)) throw ConfigError("antagonist lr must be > 0");
  if (!(target_std > 0.0)) throw ConfigError("antagonist target_std must be > 0");
}

AntTrainConfig AntTrainConfig::from_config(const Config& c) {
  AntTrainConfig t;
  t.budget = static_cast<int>(c.get_int("budget", t.budget));
  t.iterations = static_cast<int>(c.get_int("iterations", t.iterations));
  t.episodes_per_iter = static_cast<int>(c.get_int("episodes_per_iter", t.episodes_per_iter));
  t.gamma = c.get_double("gamma", t.gamma);
  t.lr = c.get_double("lr", t.lr);
  t.gate_entropy = c.get_double("gate_entropy", t.gate_entropy);
  t.target_entropy = c.get_double("target_entropy", t.target_entropy);
  t.target_std = c.get_double("target_std", t.target_std);
  t.gate_bias = c.get_double("gate_bias", t.gate_bias);
  t.value_lr = c.get_double("value_lr", t.value_lr);
  t.value_steps = static_cast<int>(c.get_int("value_steps", t.value_steps));
  t.craft_mode = parse_craft_mode(c.get_string("craft", "oracle"));
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<std::int64_t>(t.seed)));
  t.validate();
  return t;
}

AntTrainResult train_antagonist(const Env& env, const Policy& victim, const AntTrainConfig& cfg,
                                const PerturbConfig& perturb) {
  cfg.validate();
  const EnvSpec& spec = env.spec();
  const ActionSpace& space = spec.actions;
  AntagonistPolicy ant = AntagonistPolicy::init(spec, cfg.hidden, cfg.gate_bias, cfg.seed);
  const int out_dim = ant.net().output_dim();
  OptimizerState opt_state;
  const OptimizerConfig opt{.kind = OptimizerConfig::Kind::adam, .lr = cfg.lr};
  Rng rng(derive_seed(cfg.seed, 0xa97a));
  const AntRunConfig run{.budget = cfg.budget, .craft_mode = cfg.craft_mode, .mode = AntMode::train,
                         .target_std = cfg.target_std};
  std::vector<AntCurvePoint> curve;
  std::uint64_t episode_counter = 0;
  std::vector<int> vsizes{static_cast<int>(spec.state_dim)};
  vsizes.insert(vsizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  vsizes.push_back(1);
  Mlp value = Mlp::xavier(vsizes, Activation::tanh, Head::linear, derive_seed(cfg.seed, 0xba5e));
  value.input_normalizer() = range_normalizer(spec);
  OptimizerState value_state;

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<AntEpisode> batch;
    double ret = 0.0;
    double attacks = 0.0;
    for (int e = 0; e < cfg.episodes_per_iter; ++e) {
      batch.push_back(run_antagonist_episode(env, victim, ant, run, perturb,
                                             derive_seed(cfg.seed, 90000 + episode_counter++), &rng));
      ret += batch.back().report.ret;
      attacks += batch.back().report.attack_count();
    }
    curve.push_back({it, ret / cfg.episodes_per_iter, attacks / cfg.episodes_per_iter});

    // Returns-to-go with a learned state-value baseline.
    std::vector<const AntStep*> rows;
    std::vector<double> returns;
    std::vector<const AntStep*> all;
    std::vector<double> all_returns;
    for (const auto& ep : batch) {
      std::vector<double> r;
      for (const auto& st : ep.steps) r.push_back(st.r_adv);
      const auto g = discounted_returns(r, cfg.gamma);
      for (std::size_t t = 0; t < ep.steps.size(); ++t) {
        all.push_back(&ep.steps[t]);
        all_returns.push_back(g[t]);
        if (!ep.steps[t].gate_active) continue;
        rows.push_back(&ep.steps[t]);
        returns.push_back(g[t]);
      }
    }
    fit_value(value, all, all_returns, value_state, cfg);
    if (rows.empty()) continue;
    std::vector<double> adv(rows.size());
    double var = 0.0;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      adv[j] = returns[j] - value.forward(rows[j]->s)(0);
      var += adv[j] * adv[j];
    }
    const double scale = 1.0 / (std::sqrt(var / static_cast<double>(adv.size())) + 1e-8);

    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(spec.state_dim), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < spec.state_dim; ++i) x(static_cast<Eigen::Index>(i), j) = rows[static_cast<std::size_t>(j)]->s[i];
    }
    const Eigen::MatrixXd z = ant.net().logits_batch(x);
    Eigen::MatrixXd up = Eigen::MatrixXd::Zero(out_dim, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const AntStep& st = *rows[static_cast<std::size_t>(j)];
      const double a = adv[static_cast<std::size_t>(j)] * scale;
      const double p = sigmoid(z(0, j));
      const double gate = st.gate_open ? 1.0 : 0.0;
      // d/dz0 of -(a * log Bernoulli(gate; p) + c * H(p))
      up(0, j) = -a * (gate - p) + cfg.gate_entropy * p * (1.0 - p) * z(0, j);
      if (!st.gate_open) continue;
      if (space.is_discrete()) {
        const Eigen::VectorXd q = softmax(z.col(j).tail(space.k));
        const Eigen::VectorXd logq = q.array().max(1e-300).log().matrix();
        const double h = -q.dot(logq);
        for (int i = 0; i < space.k; ++i) {
          const double onehot = i == st.target.index() ? 1.0 : 0.0;
          up(1 + i, j) = a * (q(i) - onehot) + cfg.target_entropy * q(i) * (logq(i) + h);
        }
      } else {
        const double mid = 0.5 * (space.lo + space.hi);
        const double half = 0.5 * (space.hi - space.lo);
        for (int i = 0; i < space.dim; ++i) {
          const double th = std::tanh(z(1 + i, j));
          const double mu = mid + half * th;
          const double dlogp = (st.target.values()[static_cast<std::size_t>(i)] - mu) /
                               (cfg.target_std * cfg.target_std) * half * (1.0 - th * th);
          up(1 + i, j) = -a * dlogp;
        }
      }
    }
    up /= static_cast<double>(n);
    if (!up.allFinite()) throw TrainingError("antagonist loss became non-finite at iteration " + std::to_string(it));
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ant.net().param_count()));
    ant.net().backward_logits_batch(x, up, grad);
    optimizer_step(ant.net().params(), grad, opt_state, opt);
  }
  return {std::move(ant), std::move(curve)};
}

}  // namespace rlattack
