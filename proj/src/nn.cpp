#include "rlattack/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rlattack/rng.hpp"

namespace rlattack {

// ---------------------------------------------------------------------------
// Normalizer

Normalizer Normalizer::identity(Eigen::Index n) {
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& samples, double min_std) {
  const Eigen::Index d = samples.rows();
  Normalizer n = identity(d);
  if (samples.cols() == 0) return n;
  n.mean = samples.rowwise().mean();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double var = (samples.row(i).array() - n.mean(i)).square().mean();
    const double s = std::sqrt(var);
    n.std(i) = s > min_std ? s : 1.0;
  }
  return n;
}

Eigen::VectorXd Normalizer::normalize(const Eigen::VectorXd& x) const {
  return ((x - mean).array() / std.array()).matrix();
}

Eigen::VectorXd Normalizer::denormalize(const Eigen::VectorXd& z) const {
  return (z.array() * std.array()).matrix() + mean;
}

Eigen::MatrixXd Normalizer::normalize_cols(const Eigen::MatrixXd& x) const {
  return (x.colwise() - mean).array().colwise() / std.array();
}

// ---------------------------------------------------------------------------
// Mlp

std::size_t mlp_param_count(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    n += static_cast<std::size_t>(sizes[l - 1] + 1) * static_cast<std::size_t>(sizes[l]);
  }
  return n;
}

Mlp::Mlp(std::vector<int> sizes, std::vector<Activation> hidden, Head head)
    : sizes_(std::move(sizes)), hidden_(std::move(hidden)), head_(head) {
  if (sizes_.size() < 2) throw DimensionError("Mlp needs at least input and output sizes");
  for (int s : sizes_) {
    if (s < 1) throw DimensionError("Mlp layer sizes must be positive");
  }
  if (hidden_.size() != sizes_.size() - 2) {
    throw DimensionError("Mlp needs one activation per hidden layer");
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mlp_param_count(sizes_)));
  input_norm_ = Normalizer::identity(sizes_.front());
}

Mlp::Mlp(std::vector<int> sizes, Activation hidden, Head head)
    : Mlp(sizes, std::vector<Activation>(sizes.size() >= 2 ? sizes.size() - 2 : 0, hidden), head) {}

Mlp Mlp::xavier(std::vector<int> sizes, Activation hidden, Head head, std::uint64_t seed) {
  Mlp net(std::move(sizes), hidden, head);
  Rng rng(derive_seed(seed, 0x8a71e5));
  Eigen::Index off = 0;
  for (std::size_t l = 1; l < net.sizes_.size(); ++l) {
    const int fan_in = net.sizes_[l - 1];
    const int fan_out = net.sizes_[l];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < fan_in * fan_out; ++i) net.params_(off++) = rng.uniform(-limit, limit);
    off += fan_out;  // biases stay zero
  }
  return net;
}

void Mlp::check_input(std::size_t n) const {
  if (sizes_.empty()) throw DimensionError("Mlp is empty");
  if (static_cast<int>(n) != input_dim()) {
    throw DimensionError("Mlp input has dimension " + std::to_string(n) + ", expected " +
                         std::to_string(input_dim()));
  }
}

Mlp::Tape Mlp::run(const Eigen::MatrixXd& x) const {
  check_input(static_cast<std::size_t>(x.rows()));
  Tape tape;
  tape.acts.reserve(sizes_.size() - 1);
  tape.acts.push_back(input_norm_.normalize_cols(x));
  Eigen::Index off = 0;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + off, out, in);
    off += static_cast<Eigen::Index>(in) * out;
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + off, out);
    off += out;
    Eigen::MatrixXd z = w * tape.acts.back();
    z.colwise() += b;
    if (l + 1 == layers) {
      tape.out = std::move(z);
    } else if (hidden_[l] == Activation::tanh) {
      tape.acts.push_back(z.array().tanh().matrix());
    } else {
      tape.acts.push_back(z.cwiseMax(0.0));
    }
  }
  return tape;
}

Eigen::MatrixXd Mlp::apply_head(Head head, const Eigen::MatrixXd& z) {
  switch (head) {
    case Head::linear: return z;
    case Head::tanh: return z.array().tanh().matrix();
    case Head::softmax: {
      Eigen::MatrixXd y(z.rows(), z.cols());
      for (Eigen::Index j = 0; j < z.cols(); ++j) y.col(j) = softmax(z.col(j));
      return y;
    }
  }
  return z;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

Eigen::MatrixXd Mlp::logits_batch(const Eigen::MatrixXd& x) const { return run(x).out; }

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  return apply_head(head_, run(x).out);
}

Eigen::VectorXd Mlp::logits(std::span<const double> x) const {
  check_input(x.size());
  Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return run(Eigen::MatrixXd(v)).out.col(0);
}

Eigen::VectorXd Mlp::forward(std::span<const double> x) const {
  return apply_head(head_, logits(x)).col(0);
}

Eigen::MatrixXd Mlp::backward_logits_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream,
                                           Eigen::VectorXd& d_params) const {
  if (upstream.rows() != output_dim() || upstream.cols() != x.cols()) {
    throw DimensionError("upstream gradient shape does not match network output");
  }
  if (d_params.size() != params_.size()) d_params = Eigen::VectorXd::Zero(params_.size());
  Tape tape = run(x);
  const std::size_t layers = sizes_.size() - 1;

  // Offsets of each layer's weight block.
  std::vector<Eigen::Index> offsets(layers);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(sizes_[l] + 1) * sizes_[l + 1];
  }

  Eigen::MatrixXd delta = upstream;  // d/d(pre-activation) of layer l
  for (std::size_t li = layers; li-- > 0;) {
    const int in = sizes_[li];
    const int out = sizes_[li + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets[li], out, in);
    Eigen::Map<Eigen::MatrixXd> dw(d_params.data() + offsets[li], out, in);
    Eigen::Map<Eigen::VectorXd> db(d_params.data() + offsets[li] + static_cast<Eigen::Index>(in) * out,
                                   out);
    const Eigen::MatrixXd& a_in = tape.acts[li];
    dw.noalias() += delta * a_in.transpose();
    db.noalias() += delta.rowwise().sum();
    Eigen::MatrixXd d_in = w.transpose() * delta;
    if (li > 0) {
      const Eigen::MatrixXd& a = tape.acts[li];
      if (hidden_[li - 1] == Activation::tanh) {
        d_in.array() *= (1.0 - a.array().square());
      } else {
        d_in.array() *= (a.array() > 0.0).cast<double>();
      }
    }
    delta = std::move(d_in);
  }
  // delta is now d/d(normalized input); map back to raw units.
  return delta.array().colwise() / input_norm_.std.array();
}

Gradients Mlp::backward_logits(std::span<const double> x, std::span<const double> upstream) const {
  check_input(x.size());
  if (static_cast<int>(upstream.size()) != output_dim()) {
    throw DimensionError("upstream has dimension " + std::to_string(upstream.size()) +
                         ", expected " + std::to_string(output_dim()));
  }
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::Map<const Eigen::VectorXd> uv(upstream.data(), static_cast<Eigen::Index>(upstream.size()));
  Gradients g;
  g.d_params = Eigen::VectorXd::Zero(params_.size());
  g.d_input = backward_logits_batch(Eigen::MatrixXd(xv), Eigen::MatrixXd(uv), g.d_params).col(0);
  return g;
}

Gradients Mlp::backward(std::span<const double> x, std::span<const double> upstream) const {
  if (static_cast<int>(upstream.size()) != output_dim()) {
    throw DimensionError("upstream has dimension " + std::to_string(upstream.size()) +
                         ", expected " + std::to_string(output_dim()));
  }
  Eigen::Map<const Eigen::VectorXd> u(upstream.data(), static_cast<Eigen::Index>(upstream.size()));
  Eigen::VectorXd through = u;
  if (head_ != Head::linear) {
    const Eigen::VectorXd y = forward(x);
    if (head_ == Head::tanh) {
      through = (u.array() * (1.0 - y.array().square())).matrix();
    } else {
      through = (y.array() * (u.array() - y.dot(u))).matrix();
    }
  }
  return backward_logits(x, std::span<const double>(through.data(), static_cast<std::size_t>(through.size())));
}

// ---------------------------------------------------------------------------
// Optimizer

void optimizer_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
                    OptimizerState& state, const OptimizerConfig& cfg) {
  if (grads.size() != params.size()) throw DimensionError("gradient length differs from params");
  if (!grads.allFinite()) throw TrainingError("non-finite gradient; optimizer step rejected");
  if (cfg.kind == OptimizerConfig::Kind::sgd) {
    params -= cfg.lr * grads;
    return;
  }
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params.array() -= cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

// ---------------------------------------------------------------------------
// Supervised fitting

FitLog fit(Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, Loss loss,
           const FitConfig& cfg) {
  if (inputs.cols() != targets.cols()) throw DimensionError("inputs and targets differ in count");
  if (targets.rows() != net.output_dim()) throw DimensionError("target dimension mismatch");
  if (loss == Loss::cross_entropy && net.head() != Head::softmax) {
    throw DimensionError("cross-entropy training needs a softmax head");
  }
  FitLog log;
  const Eigen::Index n = inputs.cols();
  if (n == 0) return log;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(cfg.seed, 0xf17));
  OptimizerState state;
  OptimizerConfig opt = cfg.opt;
  const Eigen::Index batch = std::max<Eigen::Index>(1, cfg.batch);
  Eigen::VectorXd grad(net.params().size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      Eigen::MatrixXd xb(inputs.rows(), m);
      Eigen::MatrixXd yb(targets.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j) {
        xb.col(j) = inputs.col(order[static_cast<std::size_t>(start + j)]);
        yb.col(j) = targets.col(order[static_cast<std::size_t>(start + j)]);
      }
      const Eigen::MatrixXd z = net.logits_batch(xb);
      Eigen::MatrixXd up;
      if (loss == Loss::cross_entropy) {
        const Eigen::MatrixXd p = Mlp::apply_head(Head::softmax, z);
        total += -(yb.array() * (p.array().max(1e-300)).log()).sum();
        up = (p - yb) / static_cast<double>(m);
      } else {
        const Eigen::MatrixXd y = Mlp::apply_head(net.head(), z);
        const Eigen::MatrixXd diff = y - yb;
        total += diff.squaredNorm();
        up = 2.0 * diff / static_cast<double>(m * targets.rows());
        if (net.head() == Head::tanh) up.array() *= (1.0 - y.array().square());
      }
      grad.setZero();
      net.backward_logits_batch(xb, up, grad);
      optimizer_step(net.params(), grad, state, opt);
    }
    const double mean_loss =
        loss == Loss::cross_entropy ? total / static_cast<double>(n)
                                    : total / static_cast<double>(n * targets.rows());
    if (!std::isfinite(mean_loss)) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << epoch << "; loss trace:";
      for (double l : log.epoch_loss) msg << ' ' << l;
      throw TrainingError(msg.str());
    }
    log.epoch_loss.push_back(mean_loss);
    opt.lr *= cfg.lr_decay;
  }
  return log;
}

// ---------------------------------------------------------------------------
// Serialization. All integers and doubles are written little-endian.

namespace {

constexpr std::array<char, 8> kMagic = {'R', 'L', 'A', 'T', 'K', 'M', 'L', 'P'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void vec(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw ModelFormatError(path_ + ": truncated model file");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Eigen::VectorXd vec(Eigen::Index n) {
    need(static_cast<std::size_t>(n) * 8);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  std::array<char, 8> magic() {
    need(8);
    std::array<char, 8> m{};
    std::memcpy(m.data(), buf_.data() + pos_, 8);
    pos_ += 8;
    return m;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::vector<char> buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const Mlp& net, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) w.u32(static_cast<std::uint32_t>(s));
  for (Activation a : net.activations()) w.u8(static_cast<std::uint8_t>(a));
  w.u8(static_cast<std::uint8_t>(net.head()));
  w.vec(net.input_normalizer().mean);
  w.vec(net.input_normalizer().std);
  const auto& tn = net.target_normalizer();
  w.u8(tn ? 1 : 0);
  if (tn) {
    w.vec(tn->mean);
    w.vec(tn->std);
  }
  w.u64(net.param_count());
  w.vec(net.params());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw std::runtime_error("error writing model file " + path.string());
}

Mlp load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf), path.string());

  if (r.magic() != kMagic) throw ModelFormatError(path.string() + ": not a model file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw ModelFormatError(path.string() + ": unsupported model format version " +
                           std::to_string(version) + " (expected " +
                           std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint32_t n_sizes = r.u32();
  if (n_sizes < 2 || n_sizes > 64) throw ModelFormatError(path.string() + ": bad layer count");
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) {
    const std::uint32_t v = r.u32();
    if (v == 0 || v > (1u << 20)) throw ModelFormatError(path.string() + ": bad layer size");
    s = static_cast<int>(v);
  }
  std::vector<Activation> acts(n_sizes - 2);
  for (auto& a : acts) {
    const std::uint8_t v = r.u8();
    if (v > 1) throw ModelFormatError(path.string() + ": bad activation code");
    a = static_cast<Activation>(v);
  }
  const std::uint8_t head = r.u8();
  if (head > 2) throw ModelFormatError(path.string() + ": bad head code");
  Mlp net(sizes, acts, static_cast<Head>(head));
  net.input_normalizer().mean = r.vec(sizes.front());
  net.input_normalizer().std = r.vec(sizes.front());
  if (r.u8() == 1) {
    Normalizer tn;
    tn.mean = r.vec(sizes.back());
    tn.std = r.vec(sizes.back());
    net.target_normalizer() = tn;
  }
  const std::uint64_t count = r.u64();
  if (count != net.param_count()) {
    throw ModelFormatError(path.string() + ": parameter count does not match topology");
  }
  net.params() = r.vec(static_cast<Eigen::Index>(count));
  if (!r.at_end()) throw ModelFormatError(path.string() + ": trailing bytes after parameters");
  return net;
}

Mlp load_model(const std::filesystem::path& path, const std::vector<int>& expected_sizes) {
  Mlp net = load_model(path);
  if (net.sizes() != expected_sizes) {
    auto fmt = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "-" : "") + std::to_string(v[i]);
      return s;
    };
    throw DimensionError(path.string() + ": stored topology " + fmt(net.sizes()) +
                         " does not match expected " + fmt(expected_sizes));
  }
  return net;
}

std::uint64_t params_hash(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < net.params().size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(net.params()(i));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace rlattack
