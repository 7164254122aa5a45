#include "rlattack/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rlattack {

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

int argmin_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) < v(best)) best = static_cast<int>(i);
  }
  return best;
}

Policy::Policy(Mlp net, double action_lo, double action_hi)
    : net_(std::move(net)),
      kind_(net_.head() == Head::softmax ? Kind::discrete : Kind::continuous),
      lo_(action_lo),
      hi_(action_hi) {}

Eigen::VectorXd Policy::distribution(std::span<const double> s) const {
  if (!is_discrete()) throw std::logic_error("distribution() needs a discrete policy");
  return net_.forward(s);
}

Eigen::VectorXd Policy::output(std::span<const double> s) const {
  if (is_discrete()) throw std::logic_error("output() needs a continuous policy");
  return net_.forward(s);
}

Action Policy::act(std::span<const double> s, ActMode mode, Rng* rng) const {
  if (is_discrete()) {
    const Eigen::VectorXd p = net_.forward(s);
    if (mode == ActMode::greedy) return Action::discrete(argmax_lowest(p));
    if (rng == nullptr) throw std::invalid_argument("sampling needs an rng");
    const double u = rng->uniform();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p(i);
      if (u < acc) return Action::discrete(static_cast<int>(i));
    }
    return Action::discrete(static_cast<int>(p.size() - 1));
  }
  const Eigen::VectorXd y = net_.forward(s);
  std::vector<double> a(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) a[static_cast<std::size_t>(i)] = std::clamp(y(i), lo_, hi_);
  return Action::continuous(std::move(a));
}

Controller Policy::controller() const {
  return [p = *this](std::span<const double> s) { return p.greedy(s); };
}

// ---------------------------------------------------------------------------

Normalizer range_normalizer(const EnvSpec& spec) {
  Normalizer n = Normalizer::identity(static_cast<Eigen::Index>(spec.state_dim));
  for (std::size_t i = 0; i < spec.state_dim; ++i) {
    n.mean(static_cast<Eigen::Index>(i)) = 0.5 * (spec.lo[i] + spec.hi[i]);
    n.std(static_cast<Eigen::Index>(i)) = 0.5 * (spec.hi[i] - spec.lo[i]);
  }
  return n;
}

namespace {

std::vector<int> topology(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

BcResult train_bc(const Env& env, const Controller& expert, const BcConfig& cfg) {
  const EnvSpec& spec = env.spec();
  const bool discrete = spec.actions.is_discrete();
  const int out_dim = discrete ? spec.actions.k : spec.actions.dim;
  std::vector<StateVec> states;
  std::vector<Action> labels;
  Rng rng(derive_seed(cfg.seed, 0xbc));

  for (int e = 0; e < cfg.episodes; ++e) {
    EnvState s = env.reset(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(e)));
    while (!s.done) {
      Action label = expert(s.obs);
      states.push_back(s.obs);
      labels.push_back(label);
      Action act = label;
      if (discrete) {
        if (rng.bernoulli(cfg.explore)) {
          act = Action::discrete(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.actions.k))));
        }
      } else {
        std::vector<double> a = label.values();
        for (double& v : a) v = std::clamp(v + cfg.explore * rng.normal(), spec.actions.lo, spec.actions.hi);
        act = Action::continuous(std::move(a));
      }
      s = env.step(s, act).next;
    }
  }

  const auto n = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(spec.state_dim), n);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(out_dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& st = states[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < st.size(); ++i) x(static_cast<Eigen::Index>(i), j) = st[i];
    const Action& a = labels[static_cast<std::size_t>(j)];
    if (discrete) {
      y(a.index(), j) = 1.0;
    } else {
      for (int i = 0; i < out_dim; ++i) y(i, j) = a.values()[static_cast<std::size_t>(i)];
    }
  }

  Mlp net = Mlp::xavier(topology(static_cast<int>(spec.state_dim), cfg.hidden, out_dim), cfg.activation,
                        discrete ? Head::softmax : Head::tanh, cfg.seed);
  net.input_normalizer() = Normalizer::fit(x, 1e-6);
  FitLog log;
  if (discrete) {
    log = fit(net, x, y, Loss::cross_entropy, cfg.fit);
  } else {
    // Keep regression targets strictly inside the tanh range.
    Eigen::MatrixXd yt = y.cwiseMax(-0.995).cwiseMin(0.995);
    log = fit(net, x, yt, Loss::mse, cfg.fit);
  }
  return {Policy(std::move(net), spec.actions.lo, spec.actions.hi), std::move(log),
          static_cast<std::size_t>(n)};
}

BcResult train_bc(const Env& env, const BcConfig& cfg) {
  return train_bc(env, [&env](std::span<const double> s) { return env.expert(s); }, cfg);
}

// ---------------------------------------------------------------------------

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

ReinforceResult train_reinforce(const Env& env, const ReinforceConfig& cfg) {
  const EnvSpec& spec = env.spec();
  if (!spec.actions.is_discrete()) throw std::invalid_argument("REINFORCE trainer needs a discrete env");
  const int k = spec.actions.k;
  Mlp net = Mlp::xavier(topology(static_cast<int>(spec.state_dim), cfg.hidden, k), Activation::tanh,
                        Head::softmax, cfg.seed);
  net.input_normalizer() = range_normalizer(spec);
  OptimizerState opt_state;
  const OptimizerConfig opt{.kind = OptimizerConfig::Kind::adam, .lr = cfg.lr};
  Rng rng(derive_seed(cfg.seed, 0x7e1f));
  std::vector<double> curve;
  std::uint64_t episode_counter = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<StateVec> states;
    std::vector<int> actions;
    std::vector<double> returns;
    double total_return = 0.0;
    Policy current(net);
    for (int e = 0; e < cfg.episodes_per_iter; ++e) {
      EnvState s = env.reset(derive_seed(cfg.seed, 50000 + episode_counter++));
      std::vector<double> rewards;
      while (!s.done) {
        const Action a = current.act(s.obs, ActMode::sample, &rng);
        states.push_back(s.obs);
        actions.push_back(a.index());
        StepResult r = env.step(s, a);
        rewards.push_back(r.reward);
        total_return += r.reward;
        s = r.next;
      }
      auto g = discounted_returns(rewards, cfg.gamma);
      returns.insert(returns.end(), g.begin(), g.end());
    }
    curve.push_back(total_return / cfg.episodes_per_iter);

    const auto n = static_cast<Eigen::Index>(states.size());
    if (n == 0) continue;
    const double baseline = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(n);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(spec.state_dim), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < spec.state_dim; ++i) {
        x(static_cast<Eigen::Index>(i), j) = states[static_cast<std::size_t>(j)][i];
      }
    }
    const Eigen::MatrixXd z = net.logits_batch(x);
    Eigen::MatrixXd up(k, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd p = softmax(z.col(j));
      const double adv = returns[static_cast<std::size_t>(j)] - baseline;
      const Eigen::VectorXd logp = p.array().max(1e-300).log().matrix();
      const double entropy = -p.dot(logp);
      for (int a = 0; a < k; ++a) {
        const double onehot = a == actions[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
        // d/dz of -(adv * log pi(a) + c * H)
        up(a, j) = adv * (p(a) - onehot) + cfg.entropy_coef * p(a) * (logp(a) + entropy);
      }
    }
    up /= static_cast<double>(n);
    if (!up.allFinite()) throw TrainingError("REINFORCE loss became non-finite at iteration " + std::to_string(it));
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.params().size());
    net.backward_logits_batch(x, up, grad);
    optimizer_step(net.params(), grad, opt_state, opt);
  }
  return {Policy(std::move(net)), std::move(curve)};
}

// ---------------------------------------------------------------------------

EpisodeOutcome run_episode(const Env& env, const Controller& controller, std::uint64_t seed) {
  EpisodeOutcome out;
  EnvState s = env.reset(seed);
  while (!s.done) {
    StepResult r = env.step(s, controller(s.obs));
    out.ret += r.reward;
    ++out.length;
    if (r.outcome == Outcome::caught) ++out.caught;
    if (r.outcome == Outcome::missed) ++out.missed;
    out.cause = r.cause;
    s = std::move(r.next);
  }
  return out;
}

EvalStats evaluate(const Env& env, const Controller& controller, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw std::invalid_argument("evaluate needs at least one seed");
  EvalStats st;
  int caught = 0;
  int landings = 0;
  int crashes = 0;
  for (std::uint64_t seed : seeds) {
    EpisodeOutcome o = run_episode(env, controller, seed);
    st.mean_return += o.ret;
    st.mean_length += o.length;
    caught += o.caught;
    landings += o.caught + o.missed;
    if (o.cause == DoneCause::crash || o.cause == DoneCause::miss) ++crashes;
    st.episodes.push_back(o);
  }
  const double n = static_cast<double>(seeds.size());
  st.mean_return /= n;
  st.mean_length /= n;
  double var = 0.0;
  for (const auto& o : st.episodes) var += (o.ret - st.mean_return) * (o.ret - st.mean_return);
  st.std_return = std::sqrt(var / n);
  st.crash_rate = crashes / n;
  if (landings > 0) st.catch_rate = static_cast<double>(caught) / landings;
  return st;
}

EvalStats evaluate(const Policy& policy, const Env& env, std::span<const std::uint64_t> seeds) {
  return evaluate(env, policy.controller(), seeds);
}

}  // namespace rlattack
