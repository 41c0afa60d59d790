#pragma once

#include <cstdint>
#include <string>

#include "gcslab/constellation.hpp"
#include "gcslab/neural.hpp"

namespace gcslab {

/// Input/output space of the autoencoder. Mi: one-hot input of size M,
/// softmax posterior of size M, categorical CE. Gmi: m-bit input, sigmoid
/// posterior of size m, binary CE.
enum class AeMode { Mi, Gmi };

std::string to_string(AeMode mode);
AeMode ae_mode_from_string(const std::string& s);

/// Encoder + decoder pair for geometric shaping. The encoder maps the M
/// distinct inputs to 2-D (I,Q) outputs; the constellation is those
/// outputs scaled to unit mean power over all M points, so it is the same
/// for every batch drawn in an epoch.
struct Autoencoder {
  AeMode mode = AeMode::Mi;
  int order = 0;  // M
  Mlp encoder;
  Mlp decoder;

  int bits_per_symbol() const;
  long weight_count() const { return encoder.weight_count() + decoder.weight_count(); }

  /// Joint flat parameter vector (encoder first, then decoder).
  Eigen::VectorXd get_params() const;
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& params);

  /// in_dim x M matrix whose column i is the encoder input for symbol i
  /// (one-hot e_i in MI mode, the m bits of i in GMI mode, MSB first).
  Eigen::MatrixXd distinct_inputs() const;

  /// Forward state kept for the encoder backward pass.
  struct EncoderCache {
    ForwardCache fc;
    Eigen::MatrixXd raw;     // 2 x M pre-normalization outputs
    double norm_factor = 1;  // sqrt(mean |raw_i|^2)
  };

  Constellation constellation() const;
  Constellation constellation_cached(EncoderCache& cache) const;

  /// Accumulates encoder weight gradients given dL/d(normalized points)
  /// as a 2 x M matrix (rows: Re, Im). Exact through the normalization.
  void encoder_backward(const EncoderCache& cache, const Eigen::MatrixXd& grad_points,
                        Gradients& grads) const;

  /// Decoder posterior columns for a batch of received symbols
  /// (2 x B input: rows Re, Im).
  Eigen::MatrixXd decoder_forward(const Eigen::MatrixXd& y) const;

  void validate() const;
};

/// MI-mode architecture: encoder M->2 linear without bias; decoder
/// 2 -> M/2 leaky ReLU -> M softmax, both with bias.
Autoencoder make_mi_autoencoder(int order, std::uint64_t seed);

/// GMI-mode architecture: encoder m -> 4 hidden ReLU layers -> 2 linear;
/// decoder 2 -> 4 hidden ReLU layers -> m sigmoid; all layers biased.
/// hidden_width defaults to 256.
Autoencoder make_gmi_autoencoder(int order, std::uint64_t seed, int hidden_width = 256);

/// Checkpoint bundle for a whole autoencoder (two gcslab-mlp sections).
void save_autoencoder(const Autoencoder& ae, const std::string& path);
Autoencoder load_autoencoder(const std::string& path);

}  // namespace gcslab
