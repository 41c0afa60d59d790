#include "gcslab/autoencoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gcslab {

std::string to_string(AeMode mode) { return mode == AeMode::Mi ? "MI" : "GMI"; }

AeMode ae_mode_from_string(const std::string& s) {
  if (s == "MI" || s == "mi") return AeMode::Mi;
  if (s == "GMI" || s == "gmi") return AeMode::Gmi;
  throw std::invalid_argument("unknown autoencoder mode: " + s);
}

int Autoencoder::bits_per_symbol() const {
  int m = 0;
  while ((1 << m) < order) ++m;
  if ((1 << m) != order) throw std::logic_error("autoencoder order is not a power of two");
  return m;
}

Eigen::VectorXd Autoencoder::get_params() const {
  Eigen::VectorXd out(weight_count());
  encoder.get_params(out.head(encoder.weight_count()));
  decoder.get_params(out.tail(decoder.weight_count()));
  return out;
}

void Autoencoder::set_params(const Eigen::Ref<const Eigen::VectorXd>& params) {
  if (params.size() != weight_count()) throw std::invalid_argument("set_params: size mismatch");
  encoder.set_params(params.head(encoder.weight_count()));
  decoder.set_params(params.tail(decoder.weight_count()));
}

Eigen::MatrixXd Autoencoder::distinct_inputs() const {
  const int m = bits_per_symbol();
  if (mode == AeMode::Mi) return Eigen::MatrixXd::Identity(order, order);
  Eigen::MatrixXd in(m, order);
  for (int i = 0; i < order; ++i)
    for (int b = 0; b < m; ++b) in(b, i) = static_cast<double>((i >> (m - 1 - b)) & 1);
  return in;
}

Constellation Autoencoder::constellation() const {
  EncoderCache cache;
  return constellation_cached(cache);
}

Constellation Autoencoder::constellation_cached(EncoderCache& cache) const {
  cache.raw = forward_cached(encoder, distinct_inputs(), cache.fc);
  if (cache.raw.rows() != 2) throw std::logic_error("encoder must output 2 dimensions");
  const double mean_power = cache.raw.array().square().colwise().sum().mean();
  if (mean_power <= 0.0) throw std::runtime_error("encoder collapsed to the origin");
  cache.norm_factor = std::sqrt(mean_power);

  Constellation c;
  c.points.resize(order);
  for (int i = 0; i < order; ++i)
    c.points[i] = cdouble(cache.raw(0, i), cache.raw(1, i)) / cache.norm_factor;
  return c;
}

void Autoencoder::encoder_backward(const EncoderCache& cache, const Eigen::MatrixXd& grad_points,
                                   Gradients& grads) const {
  // x = z / s with s = sqrt(mean_i |z_i|^2):
  // dL/dz = (g - x <g,x>/M) / s, where <g,x> sums over all entries.
  const double s = cache.norm_factor;
  const Eigen::MatrixXd x = cache.raw / s;
  const double gx = (grad_points.array() * x.array()).sum();
  const Eigen::MatrixXd grad_raw = (grad_points - x * (gx / static_cast<double>(order))) / s;
  backward_from_output_preact(encoder, cache.fc, grad_raw, grads);
}

Eigen::MatrixXd Autoencoder::decoder_forward(const Eigen::MatrixXd& y) const {
  return decoder.forward(y);
}

void Autoencoder::validate() const {
  encoder.validate();
  decoder.validate();
  const int m = bits_per_symbol();
  const int enc_in = mode == AeMode::Mi ? order : m;
  const int dec_out = mode == AeMode::Mi ? order : m;
  if (encoder.input_dim() != enc_in) throw std::invalid_argument("encoder input dim mismatch");
  if (encoder.output_dim() != 2) throw std::invalid_argument("encoder must output 2 dims");
  if (decoder.input_dim() != 2) throw std::invalid_argument("decoder must take 2 dims");
  if (decoder.output_dim() != dec_out) throw std::invalid_argument("decoder output dim mismatch");
  const Activation out_act = decoder.layers.back().act;
  if (mode == AeMode::Mi && out_act != Activation::Softmax)
    throw std::invalid_argument("MI-mode decoder must end in softmax");
  if (mode == AeMode::Gmi && out_act != Activation::Sigmoid)
    throw std::invalid_argument("GMI-mode decoder must end in sigmoid");
}

Autoencoder make_mi_autoencoder(int order, std::uint64_t seed) {
  if (order < 4) throw std::invalid_argument("make_mi_autoencoder: order too small");
  Autoencoder ae;
  ae.mode = AeMode::Mi;
  ae.order = order;
  ae.encoder = glorot_init({{order, 2, false, Activation::Linear}}, seed);
  ae.decoder = glorot_init(
      {
          {2, order / 2, true, Activation::LeakyRelu},
          {order / 2, order, true, Activation::Softmax},
      },
      seed + 1);
  ae.validate();
  return ae;
}

Autoencoder make_gmi_autoencoder(int order, std::uint64_t seed, int hidden_width) {
  Autoencoder ae;
  ae.mode = AeMode::Gmi;
  ae.order = order;
  const int m = ae.bits_per_symbol();
  const int h = hidden_width;
  ae.encoder = glorot_init(
      {
          {m, h, true, Activation::Relu},
          {h, h, true, Activation::Relu},
          {h, h, true, Activation::Relu},
          {h, h, true, Activation::Relu},
          {h, 2, true, Activation::Linear},
      },
      seed);
  ae.decoder = glorot_init(
      {
          {2, h, true, Activation::Relu},
          {h, h, true, Activation::Relu},
          {h, h, true, Activation::Relu},
          {h, h, true, Activation::Relu},
          {h, m, true, Activation::Sigmoid},
      },
      seed + 1);
  ae.validate();
  return ae;
}

void save_autoencoder(const Autoencoder& ae, const std::string& path) {
  save_mlp(ae.encoder, path + ".enc");
  save_mlp(ae.decoder, path + ".dec");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_autoencoder: cannot open " + path);
  out << "gcslab-ae v1\n" << to_string(ae.mode) << " " << ae.order << "\n";
}

Autoencoder load_autoencoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_autoencoder: cannot open " + path);
  std::string magic, version, mode;
  int order = 0;
  in >> magic >> version >> mode >> order;
  if (magic != "gcslab-ae" || version != "v1")
    throw std::runtime_error("load_autoencoder: unrecognized format");
  Autoencoder ae;
  ae.mode = ae_mode_from_string(mode);
  ae.order = order;
  ae.encoder = load_mlp(path + ".enc");
  ae.decoder = load_mlp(path + ".dec");
  ae.validate();
  return ae;
}

}  // namespace gcslab
