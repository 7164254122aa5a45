#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace rlattack {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation : std::uint8_t { tanh = 0, relu = 1 };
enum class Head : std::uint8_t { linear = 0, softmax = 1, tanh = 2 };

/// Per-dimension affine standardization z = (x - mean) / std.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  static Normalizer identity(Eigen::Index n);
  /// Fits mean/std over the columns of `samples`. Dimensions whose spread is
  /// below `min_std` get std = 1 so constant inputs stay well defined.
  static Normalizer fit(const Eigen::MatrixXd& samples, double min_std = 1e-8);

  Eigen::Index size() const { return mean.size(); }
  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd normalize_cols(const Eigen::MatrixXd& x) const;
};

struct Gradients {
  Eigen::VectorXd d_params;
  Eigen::VectorXd d_input;
};

/// Fully connected network with a flat parameter vector.
///
/// Layer l stores its weight matrix (fan_out x fan_in, column-major)
/// followed by its bias. Inputs pass through the input normalizer before
/// the first layer; gradients with respect to the input are reported in raw
/// (un-normalized) units.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized network. `hidden` holds one activation per hidden layer.
  Mlp(std::vector<int> sizes, std::vector<Activation> hidden, Head head);
  Mlp(std::vector<int> sizes, Activation hidden, Head head);

  /// Xavier-uniform weights and zero biases drawn from `seed`.
  static Mlp xavier(std::vector<int> sizes, Activation hidden, Head head, std::uint64_t seed);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }
  const std::vector<int>& sizes() const { return sizes_; }
  const std::vector<Activation>& activations() const { return hidden_; }
  Head head() const { return head_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Normalizer& input_normalizer() { return input_norm_; }
  const Normalizer& input_normalizer() const { return input_norm_; }
  /// Optional statistics for regression targets (stored with the model).
  std::optional<Normalizer>& target_normalizer() { return target_norm_; }
  const std::optional<Normalizer>& target_normalizer() const { return target_norm_; }

  /// Network output after the head.
  Eigen::VectorXd forward(std::span<const double> x) const;
  /// Output of the last affine layer, before the head.
  Eigen::VectorXd logits(std::span<const double> x) const;

  /// Gradients of <upstream, forward(x)>.
  Gradients backward(std::span<const double> x, std::span<const double> upstream) const;
  /// Gradients of <upstream, logits(x)>.
  Gradients backward_logits(std::span<const double> x, std::span<const double> upstream) const;

  /// Batched pre-head outputs; columns of `x` are raw samples.
  Eigen::MatrixXd logits_batch(const Eigen::MatrixXd& x) const;
  /// Batched head outputs.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;
  /// Adds the parameter gradient of sum_j <upstream_j, logits(x_j)> into
  /// `d_params` and returns the raw-input gradients (one column per sample).
  Eigen::MatrixXd backward_logits_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream,
                                        Eigen::VectorXd& d_params) const;

  static Eigen::MatrixXd apply_head(Head head, const Eigen::MatrixXd& z);

 private:
  struct Tape {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = normalized input, then hidden outputs
    Eigen::MatrixXd out;                // pre-head output
  };
  Tape run(const Eigen::MatrixXd& x) const;
  void check_input(std::size_t n) const;

  std::vector<int> sizes_;
  std::vector<Activation> hidden_;
  Head head_ = Head::linear;
  Eigen::VectorXd params_;
  Normalizer input_norm_;
  std::optional<Normalizer> target_norm_;
};

std::size_t mlp_param_count(const std::vector<int>& sizes);

/// Numerically stable softmax of one vector.
Eigen::VectorXd softmax(const Eigen::VectorXd& z);

// ---------------------------------------------------------------------------

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;
};

/// One optimizer update in place. Throws TrainingError (and leaves params
/// untouched) when the gradient has a non-finite component.
void optimizer_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
                    OptimizerState& state, const OptimizerConfig& cfg);

// ---------------------------------------------------------------------------

enum class Loss { mse, cross_entropy };

struct FitConfig {
  int epochs = 100;
  int batch = 64;
  OptimizerConfig opt;
  /// Multiplicative learning-rate decay applied after each epoch.
  double lr_decay = 1.0;
  std::uint64_t seed = 1;
};

struct FitLog {
  std::vector<double> epoch_loss;
};

/// Minibatch training. For Loss::mse the targets are compared with the head
/// output; for Loss::cross_entropy `targets` holds one-hot columns and the
/// head must be softmax. Throws TrainingError on a non-finite loss.
FitLog fit(Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, Loss loss,
           const FitConfig& cfg);

// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const Mlp& net, const std::filesystem::path& path);
Mlp load_model(const std::filesystem::path& path);
/// Loads and checks that the stored topology equals `expected_sizes`.
Mlp load_model(const std::filesystem::path& path, const std::vector<int>& expected_sizes);

/// FNV-1a over the parameter bytes; used to prove a model was not modified.
std::uint64_t params_hash(const Mlp& net);

}  // namespace rlattack
