#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace gcslab {

enum class Activation { Linear, Relu, LeakyRelu, Softmax, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Negative slope of the leaky ReLU hidden activation.
inline constexpr double kLeakyReluSlope = 0.01;
/// Probability clamp inside the cross-entropy losses (log(0) safety).
inline constexpr double kProbClamp = 1e-12;

struct LayerSpec {
  int in = 0;
  int out = 0;
  bool bias = true;
  Activation act = Activation::Linear;
};

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // size out, or empty when the layer has no bias
  Activation act = Activation::Linear;

  bool has_bias() const { return b.size() > 0; }
};

/// Plain feed-forward network. Samples are matrix columns.
struct Mlp {
  std::vector<Layer> layers;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().w.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().w.rows()); }
  long weight_count() const;

  /// Flat parameter vector (weights row-major per layer, then bias), used
  /// by the CKF trainer and checkpoints.
  void get_params(Eigen::Ref<Eigen::VectorXd> out) const;
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& in);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  void validate() const;  // throws on inconsistent shapes / misplaced activations
};

/// Weights ~ U(+-sqrt(6/(fan_in+fan_out))), biases zero; deterministic per seed.
Mlp glorot_init(const std::vector<LayerSpec>& arch, std::uint64_t seed);

/// Per-layer cached activations for the backward pass. a[0] is the input;
/// a[l+1] the post-activation output of layer l; z[l] its pre-activation.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::MatrixXd> z;

  const Eigen::MatrixXd& output() const { return a.back(); }
};

Eigen::MatrixXd forward_cached(const Mlp& net, const Eigen::MatrixXd& x, ForwardCache& cache);

struct Gradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;

  void init_like(const Mlp& net);
  void scale(double s);
};

/// Reverse pass from dL/d(pre-activation of the last layer); returns
/// dL/d(input). Gradients accumulate into `grads` (call init_like first).
Eigen::MatrixXd backward_from_output_preact(const Mlp& net, const ForwardCache& cache,
                                            const Eigen::MatrixXd& grad_z_last, Gradients& grads);

/// Mean categorical cross-entropy over the batch, natural log.
/// Targets are one-hot columns; posteriors clamped at kProbClamp.
double categorical_ce(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& posteriors);

/// Mean binary cross-entropy (log-likelihood) with the 1/m inner
/// normalization, natural log. Targets in {0,1}.
double binary_ce(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& posteriors);

/// dL/d(pre-activation) of the output layer for softmax+CE and
/// sigmoid+LL respectively (exact fused forms).
Eigen::MatrixXd ce_softmax_output_grad(const Eigen::MatrixXd& targets,
                                       const Eigen::MatrixXd& posteriors);
Eigen::MatrixXd ll_sigmoid_output_grad(const Eigen::MatrixXd& targets,
                                       const Eigen::MatrixXd& posteriors);

/// Adam optimizer state over one network's weight set.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;

  void init_like(const Mlp& net);
};

void adam_step(AdamState& state, Mlp& net, const Gradients& grads);

/// Versioned text checkpoint (architecture header + %.17g weights);
/// round-trips exactly.
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

}  // namespace gcslab
