#include "rlattack/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace rlattack {

std::string_view to_string(CraftMethod m) { return m == CraftMethod::cw ? "cw" : "fgsm"; }

CraftMethod parse_craft_method(std::string_view s) {
  if (s == "cw") return CraftMethod::cw;
  if (s == "fgsm") return CraftMethod::fgsm;
  throw ConfigError("unknown crafting method '" + std::string(s) + "' (expected cw or fgsm)");
}

PerturbConfig PerturbConfig::from_config(const Config& c) {
  PerturbConfig p;
  p.eps_inf = c.get_double("eps_inf", p.eps_inf);
  p.lambda = c.get_double("lambda", p.lambda);
  p.iters = static_cast<int>(c.get_int("iters", p.iters));
  p.lr = c.get_double("lr", p.lr);
  p.kappa = c.get_double("kappa", p.kappa);
  p.tol_cont = c.get_double("tol_cont", p.tol_cont);
  p.restarts = static_cast<int>(c.get_int("restarts", p.restarts));
  p.method = parse_craft_method(c.get_string("method", std::string(to_string(p.method))));
  p.validate();
  return p;
}

void PerturbConfig::validate() const {
  if (!(eps_inf >= 0.0)) throw ConfigError("perturb.eps_inf must be >= 0");
  if (iters < 1) throw ConfigError("perturb.iters must be >= 1");
  if (!(tol_cont > 0.0)) throw ConfigError("perturb.tol_cont must be > 0");
  if (!(lr > 0.0)) throw ConfigError("perturb.lr must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("perturb.lambda must be >= 0");
  if (restarts < 0) throw ConfigError("perturb.restarts must be >= 0");
}

double normalized_linf(const EnvSpec& spec, std::span<const double> delta) {
  const auto w = spec.range_widths();
  double m = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) m = std::max(m, std::abs(delta[i]) / w[i]);
  return m;
}

double normalized_l2(const EnvSpec& spec, std::span<const double> delta) {
  const auto w = spec.range_widths();
  double acc = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) acc += (delta[i] / w[i]) * (delta[i] / w[i]);
  return std::sqrt(acc);
}

bool hits_target(const Policy& victim, std::span<const double> s, const Action& target, double tol_cont) {
  const Action a = victim.greedy(s);
  if (a.is_discrete()) return a.index() == target.index();
  const auto& y = a.values();
  const auto& t = target.values();
  double err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - t[i]));
  return err <= tol_cont;
}

Action least_preferred(const Policy& victim, std::span<const double> s) {
  if (victim.is_discrete()) return Action::discrete(argmin_lowest(victim.distribution(s)));
  const Eigen::VectorXd y = victim.output(s);
  const double mid = 0.5 * (victim.action_lo() + victim.action_hi());
  std::vector<double> a(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    a[static_cast<std::size_t>(i)] = y(i) >= mid ? victim.action_lo() : victim.action_hi();
  }
  return Action::continuous(std::move(a));
}

namespace {

// Projected perturbation problem in normalized coordinates u = delta / width.
class Box {
 public:
  Box(const EnvSpec& spec, const StateVec& s, double eps) : spec_(spec), s_(s), w_(spec.range_widths()), eps_(eps) {
    if (s.size() != spec.state_dim) throw DimensionError("state has wrong dimension for crafting");
  }

  std::size_t dim() const { return s_.size(); }
  double width(std::size_t i) const { return w_[i]; }

  /// Projects u onto the eps ball and the state ranges; returns s + delta.
  StateVec place(Eigen::VectorXd& u) const {
    StateVec x(s_.size());
    for (std::size_t i = 0; i < s_.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double ui = std::clamp(u(ii), -eps_, eps_);
      double xi = std::clamp(s_[i] + ui * w_[i], spec_.lo[i], spec_.hi[i]);
      while (std::abs(xi - s_[i]) / w_[i] > eps_) xi = std::nextafter(xi, s_[i]);
      x[i] = xi;
      u(ii) = (xi - s_[i]) / w_[i];
    }
    return x;
  }

  CraftResult result(const StateVec& x, bool success, int iters) const {
    CraftResult r;
    r.perturbed = x;
    r.delta.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.delta[i] = x[i] - s_[i];
    r.linf = normalized_linf(spec_, r.delta);
    r.l2 = normalized_l2(spec_, r.delta);
    r.success = success;
    r.iters_used = iters;
    return r;
  }

 private:
  const EnvSpec& spec_;
  const StateVec& s_;
  std::vector<double> w_;
  double eps_;
};

template <typename GradFn, typename HitFn>
CraftResult projected_descent(const Box& box, const StateVec& s, const PerturbConfig& cfg, GradFn grad_x,
                              HitFn hit) {
  if (hit(s)) return box.result(s, true, 0);
  const auto n = static_cast<Eigen::Index>(box.dim());
  const OptimizerConfig opt{.kind = OptimizerConfig::Kind::adam, .lr = cfg.lr};
  Rng rng(0x5eed);
  std::optional<CraftResult> first;
  int total = 0;
  for (int run = 0; run <= cfg.restarts; ++run) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    if (run > 0) {
      for (Eigen::Index i = 0; i < n; ++i) u(i) = rng.uniform(-cfg.eps_inf, cfg.eps_inf);
    }
    StateVec x = box.place(u);
    OptimizerState st;
    for (int it = 1; it <= cfg.iters; ++it) {
      const Eigen::VectorXd gx = grad_x(x);
      Eigen::VectorXd g(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        g(i) = gx(i) * box.width(static_cast<std::size_t>(i)) + 2.0 * cfg.lambda * u(i);
      }
      optimizer_step(u, g, st, opt);
      x = box.place(u);
      ++total;
      if (hit(x)) return box.result(x, true, total);
    }
    if (!first) first = box.result(x, hit(x), cfg.iters);
  }
  first->iters_used = total;
  return *first;
}

}  // namespace

CraftResult craft_discrete(const Policy& victim, const EnvSpec& spec, const StateVec& s, int target,
                           const PerturbConfig& cfg) {
  if (!victim.is_discrete()) throw std::invalid_argument("craft_discrete needs a discrete victim");
  if (target < 0 || target >= victim.action_count()) throw std::out_of_range("target action out of range");
  const Box box(spec, s, cfg.eps_inf);
  const Action t = Action::discrete(target);
  const Mlp& net = victim.net();
  auto grad = [&](const StateVec& x) -> Eigen::VectorXd {
    const Eigen::VectorXd z = net.logits(x);
    int other = -1;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (i == target) continue;
      if (other < 0 || z(i) > z(other)) other = static_cast<int>(i);
    }
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.size()));
    if (z(other) - z(target) <= -cfg.kappa) return gx;
    std::vector<double> up(static_cast<std::size_t>(z.size()), 0.0);
    up[static_cast<std::size_t>(other)] = 1.0;
    up[static_cast<std::size_t>(target)] = -1.0;
    return net.backward_logits(x, up).d_input;
  };
  auto hit = [&](const StateVec& x) { return hits_target(victim, x, t, cfg.tol_cont); };
  return projected_descent(box, s, cfg, grad, hit);
}

CraftResult craft_continuous(const Policy& victim, const EnvSpec& spec, const StateVec& s,
                             const std::vector<double>& target, const PerturbConfig& cfg) {
  if (victim.is_discrete()) throw std::invalid_argument("craft_continuous needs a continuous victim");
  if (static_cast<int>(target.size()) != victim.action_count()) throw DimensionError("target has wrong dimension");
  for (double v : target) {
    if (!(v >= victim.action_lo() && v <= victim.action_hi())) throw std::out_of_range("target outside action bounds");
  }
  const Box box(spec, s, cfg.eps_inf);
  const Action t = Action::continuous(target);
  const Mlp& net = victim.net();
  auto grad = [&](const StateVec& x) -> Eigen::VectorXd {
    const Eigen::VectorXd y = net.forward(x);
    std::vector<double> up(target.size());
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = 2.0 * (y(static_cast<Eigen::Index>(i)) - target[i]);
    return net.backward(x, up).d_input;
  };
  auto hit = [&](const StateVec& x) { return hits_target(victim, x, t, cfg.tol_cont); };
  return projected_descent(box, s, cfg, grad, hit);
}

CraftResult fgsm_targeted(const Policy& victim, const EnvSpec& spec, const StateVec& s, const Action& target,
                          double eps) {
  const Box box(spec, s, eps);
  const Mlp& net = victim.net();
  Eigen::VectorXd gx;
  double tol = std::numeric_limits<double>::infinity();
  if (victim.is_discrete()) {
    const int a = target.index();
    if (a < 0 || a >= victim.action_count()) throw std::out_of_range("target action out of range");
    // d/dz of -log softmax(z)_a
    Eigen::VectorXd up = softmax(net.logits(s));
    up(a) -= 1.0;
    gx = net.backward_logits(s, std::span<const double>(up.data(), static_cast<std::size_t>(up.size()))).d_input;
  } else {
    const Eigen::VectorXd y = net.forward(s);
    const auto& t = target.values();
    if (static_cast<Eigen::Index>(t.size()) != y.size()) throw DimensionError("target has wrong dimension");
    std::vector<double> up(t.size());
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = 2.0 * (y(static_cast<Eigen::Index>(i)) - t[i]);
    gx = net.backward(s, up).d_input;
    tol = 0.05;
  }
  Eigen::VectorXd u(gx.size());
  for (Eigen::Index i = 0; i < gx.size(); ++i) u(i) = gx(i) > 0 ? -eps : (gx(i) < 0 ? eps : 0.0);
  const StateVec x = box.place(u);
  return box.result(x, hits_target(victim, x, target, tol), 1);
}

CraftResult craft(const Policy& victim, const EnvSpec& spec, const StateVec& s, const Action& target,
                  const PerturbConfig& cfg) {
  if (cfg.method == CraftMethod::fgsm) {
    CraftResult r = fgsm_targeted(victim, spec, s, target, cfg.eps_inf);
    r.success = hits_target(victim, r.perturbed, target, cfg.tol_cont);
    return r;
  }
  if (victim.is_discrete()) return craft_discrete(victim, spec, s, target.index(), cfg);
  return craft_continuous(victim, spec, s, target.values(), cfg);
}

}  // namespace rlattack
