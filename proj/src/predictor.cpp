#include "rlattack/predictor.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rlattack/rng.hpp"

namespace rlattack {

int encoded_action_dim(const ActionSpace& space) {
  return space.is_discrete() ? space.k : space.dim;
}

Eigen::VectorXd encode_action(const ActionSpace& space, const Action& a) {
  space.validate(a);
  if (space.is_discrete()) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(space.k);
    v(a.index()) = 1.0;
    return v;
  }
  return Eigen::Map<const Eigen::VectorXd>(a.values().data(), static_cast<Eigen::Index>(a.values().size()));
}

LearnedPredictor::LearnedPredictor(Mlp net, EnvSpec spec) : net_(std::move(net)), spec_(std::move(spec)) {
  const int expected_in = static_cast<int>(spec_.state_dim) + encoded_action_dim(spec_.actions);
  if (net_.input_dim() != expected_in || net_.output_dim() != static_cast<int>(spec_.state_dim)) {
    throw DimensionError("prediction model topology does not match env '" + spec_.id + "'");
  }
  if (!net_.target_normalizer()) {
    net_.target_normalizer() = Normalizer::identity(static_cast<Eigen::Index>(spec_.state_dim));
  }
}

Eigen::VectorXd LearnedPredictor::input(const StateVec& s, const Action& a) const {
  if (s.size() != spec_.state_dim) throw DimensionError("predictor state has wrong dimension");
  const Eigen::VectorXd enc = encode_action(spec_.actions, a);
  Eigen::VectorXd x(static_cast<Eigen::Index>(s.size()) + enc.size());
  for (std::size_t i = 0; i < s.size(); ++i) x(static_cast<Eigen::Index>(i)) = s[i];
  x.tail(enc.size()) = enc;
  return x;
}

Eigen::VectorXd LearnedPredictor::predict_normalized(const StateVec& s, const Action& a) const {
  const Eigen::VectorXd x = input(s, a);
  return net_.forward(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

StateVec LearnedPredictor::predict_next(const StateVec& s, const Action& a) const {
  const Eigen::VectorXd y = target_normalizer().denormalize(predict_normalized(s, a));
  return spec_.clamp(StateVec(y.data(), y.data() + y.size()));
}

// ---------------------------------------------------------------------------

std::size_t TransitionDataset::test_count() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const Transition& t) { return t.test; }));
}

TransitionDataset collect_transitions(const Env& env, const Controller& policy, int n_steps, double noise,
                                      std::uint64_t seed) {
  if (n_steps < 1) throw std::invalid_argument("collect_transitions needs n_steps >= 1");
  const EnvSpec& spec = env.spec();
  TransitionDataset data;
  data.state_dim = spec.state_dim;
  data.actions = spec.actions;
  data.rows.reserve(static_cast<std::size_t>(n_steps));
  Rng rng(derive_seed(seed, 0xda7a));
  std::uint64_t episode = 0;
  EnvState s = env.reset(derive_seed(seed, episode++));
  while (static_cast<int>(data.rows.size()) < n_steps) {
    Action a = policy(s.obs);
    if (spec.actions.is_discrete()) {
      if (noise > 0 && rng.bernoulli(noise)) {
        a = Action::discrete(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.actions.k))));
      }
    } else if (noise > 0) {
      std::vector<double> v = a.values();
      for (double& x : v) x = std::clamp(x + noise * rng.normal(), spec.actions.lo, spec.actions.hi);
      a = Action::continuous(std::move(v));
    }
    StepResult r = env.step(s, a);
    data.rows.push_back({s.obs, a, r.next.obs, false});
    s = r.done ? env.reset(derive_seed(seed, episode++)) : std::move(r.next);
  }

  std::vector<std::size_t> order(data.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle(derive_seed(seed, 0x5b11));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
  const std::size_t n_test = data.rows.size() / 5;
  for (std::size_t i = 0; i < n_test; ++i) data.rows[order[i]].test = true;
  return data;
}

void save_dataset_csv(const TransitionDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out.precision(17);
  const std::size_t d = data.state_dim;
  const int na = data.actions.is_discrete() ? 1 : data.actions.dim;
  for (std::size_t i = 0; i < d; ++i) out << "s_" << i << ',';
  for (int i = 0; i < na; ++i) out << "a_" << i << ',';
  for (std::size_t i = 0; i < d; ++i) out << "sn_" << i << ',';
  out << "split\n";
  for (const auto& t : data.rows) {
    for (double v : t.s) out << v << ',';
    if (t.a.is_discrete()) {
      out << t.a.index() << ',';
    } else {
      for (double v : t.a.values()) out << v << ',';
    }
    for (double v : t.s_next) out << v << ',';
    out << (t.test ? "test" : "train") << '\n';
  }
  if (!out) throw std::runtime_error("error writing dataset " + path.string());
}

TransitionDataset load_dataset_csv(const std::filesystem::path& path, const EnvSpec& spec) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  TransitionDataset data;
  data.state_dim = spec.state_dim;
  data.actions = spec.actions;
  const std::size_t d = spec.state_dim;
  const std::size_t na = spec.actions.is_discrete() ? 1 : static_cast<std::size_t>(spec.actions.dim);
  const std::size_t cols = 2 * d + na + 1;
  std::string line;
  std::getline(in, line);  // header
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != cols) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(cols) + " columns");
    }
    Transition t;
    std::size_t c = 0;
    for (std::size_t i = 0; i < d; ++i) t.s.push_back(std::stod(f[c++]));
    if (spec.actions.is_discrete()) {
      t.a = Action::discrete(std::stoi(f[c++]));
    } else {
      std::vector<double> a;
      for (std::size_t i = 0; i < na; ++i) a.push_back(std::stod(f[c++]));
      t.a = Action::continuous(std::move(a));
    }
    for (std::size_t i = 0; i < d; ++i) t.s_next.push_back(std::stod(f[c++]));
    t.test = f[c] == "test";
    data.rows.push_back(std::move(t));
  }
  return data;
}

// ---------------------------------------------------------------------------

namespace {

void to_matrices(const TransitionDataset& data, const ActionSpace& space, bool want_test, Eigen::MatrixXd& x,
                 Eigen::MatrixXd& y) {
  const auto d = static_cast<Eigen::Index>(data.state_dim);
  const auto da = static_cast<Eigen::Index>(encoded_action_dim(space));
  std::vector<const Transition*> rows;
  for (const auto& t : data.rows) {
    if (t.test == want_test) rows.push_back(&t);
  }
  x.resize(d + da, static_cast<Eigen::Index>(rows.size()));
  y.resize(d, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    for (Eigen::Index i = 0; i < d; ++i) {
      x(i, col) = rows[j]->s[static_cast<std::size_t>(i)];
      y(i, col) = rows[j]->s_next[static_cast<std::size_t>(i)];
    }
    x.block(d, col, da, 1) = encode_action(space, rows[j]->a);
  }
}

}  // namespace

double pm_mse(const LearnedPredictor& pm, const TransitionDataset& data, bool test_split) {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  to_matrices(data, pm.spec().actions, test_split, x, y);
  if (x.cols() == 0) throw std::invalid_argument("split is empty");
  const Eigen::MatrixXd pred = pm.net().forward_batch(x);
  const Eigen::MatrixXd target = pm.target_normalizer().normalize_cols(y);
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

PmTrainResult train_pm(const TransitionDataset& data, const EnvSpec& spec, const PmConfig& cfg) {
  if (data.rows.empty()) throw std::invalid_argument("train_pm needs a non-empty dataset");
  if (data.state_dim != spec.state_dim) throw DimensionError("dataset does not match env state size");
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  to_matrices(data, spec.actions, false, x, y);
  if (x.cols() == 0) throw std::invalid_argument("train_pm needs at least one training row");

  std::vector<int> sizes{static_cast<int>(x.rows())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(static_cast<int>(spec.state_dim));
  Mlp net = Mlp::xavier(sizes, cfg.activation, Head::linear, cfg.fit.seed);
  net.input_normalizer() = Normalizer::fit(x, 1e-8);
  // Discrete one-hot columns are left unscaled.
  if (spec.actions.is_discrete()) {
    net.input_normalizer().mean.tail(spec.actions.k).setZero();
    net.input_normalizer().std.tail(spec.actions.k).setOnes();
  }
  const Normalizer target = Normalizer::fit(y, 1e-8);
  net.target_normalizer() = target;
  FitLog log = fit(net, x, target.normalize_cols(y), Loss::mse, cfg.fit);

  PmTrainResult out{LearnedPredictor(std::move(net), spec), 0.0, std::nullopt, std::move(log)};
  out.train_mse = pm_mse(out.model, data, false);
  if (data.test_count() > 0) out.test_mse = pm_mse(out.model, data, true);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<StateVec> rollout(const Predictor& predictor, const Controller& policy, const StateVec& start,
                              std::span<const Action> prefix, int horizon) {
  if (horizon < 1) throw std::invalid_argument("rollout horizon must be >= 1");
  if (static_cast<int>(prefix.size()) > horizon) {
    throw std::invalid_argument("attack prefix is longer than the rollout horizon");
  }
  std::vector<StateVec> states;
  states.reserve(static_cast<std::size_t>(horizon));
  StateVec s = start;
  for (int i = 0; i < horizon; ++i) {
    const Action a = i < static_cast<int>(prefix.size()) ? prefix[static_cast<std::size_t>(i)] : policy(s);
    s = predictor.predict_next(s, a);
    states.push_back(s);
  }
  return states;
}

}  // namespace rlattack
