#include "gcslab/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gcslab {

double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
double watt_to_dbm(double watt) { return 10.0 * std::log10(watt / 1e-3); }

void NlinParams::validate() const {
  if (sigma_ase_sq <= 0.0) throw std::invalid_argument("NlinParams: sigma_ase_sq must be positive");
}

double nlin_variance(double launch_power_w, const Moments& mom, const NlinParams& np) {
  if (launch_power_w <= 0.0) throw std::invalid_argument("nlin_variance: launch power must be positive");
  const double p3 = launch_power_w * launch_power_w * launch_power_w;
  const double f = np.chi0 + np.chi1 * (mom.mu4 - 2.0) + np.chi2 * (mom.mu6 - 9.0 * mom.mu4 + 12.0);
  return p3 * f;
}

double total_noise_variance(double launch_power_w, const Moments& mom, const NlinParams& np) {
  return np.sigma_ase_sq + nlin_variance(launch_power_w, mom, np);
}

void QuantizerParams::validate() const {
  if (enob < 1) throw std::invalid_argument("QuantizerParams: enob must be >= 1");
}

std::array<double, 2> peak_amplitude(const Constellation& c) {
  if (c.points.empty()) throw std::invalid_argument("peak_amplitude: empty constellation");
  double max_re = c.points[0].real();
  double max_im = c.points[0].imag();
  for (const auto& x : c.points) {
    max_re = std::max(max_re, x.real());
    max_im = std::max(max_im, x.imag());
  }
  return {1.2 * max_re, 1.2 * max_im};
}

namespace {

double hard_quantize_axis(double v, double a_peak, int enob) {
  // Mid-rise uniform quantizer, 2^ENOB levels over [-a_peak, +a_peak].
  const double levels = std::pow(2.0, enob);
  const double delta = 2.0 * a_peak / levels;
  const double clipped = std::clamp(v, -a_peak, a_peak);
  double q = (std::floor(clipped / delta) + 0.5) * delta;
  const double top = a_peak - 0.5 * delta;
  return std::clamp(q, -top, top);
}

}  // namespace

std::vector<cdouble> quantize(std::span<const cdouble> x_seq, const QuantizerParams& qp,
                              std::array<double, 2> a_peak, Rng& rng) {
  qp.validate();
  if (a_peak[0] <= 0.0 || a_peak[1] <= 0.0)
    throw std::invalid_argument("quantize: a_peak must be positive");
  std::vector<cdouble> y(x_seq.begin(), x_seq.end());
  if (qp.mode == QuantizerMode::HardQuantizer) {
    for (auto& v : y)
      v = {hard_quantize_axis(v.real(), a_peak[0], qp.enob),
           hard_quantize_axis(v.imag(), a_peak[1], qp.enob)};
    return y;
  }
  const double half = std::pow(2.0, qp.enob - 1);
  const double sI = a_peak[0] / half;
  const double sQ = a_peak[1] / half;
  for (auto& v : y) {
    const double nI = sI * rng.uniform(-1.0, 1.0);
    const double nQ = sQ * rng.uniform(-1.0, 1.0);
    v += cdouble(nI, nQ);
  }
  return y;
}

std::vector<cdouble> awgn(std::span<const cdouble> x_seq, double snr_db, Rng& rng) {
  const double var = std::pow(10.0, -snr_db / 10.0);
  std::vector<cdouble> y(x_seq.begin(), x_seq.end());
  for (auto& v : y) v += rng.cnormal(var);
  return y;
}

std::vector<cdouble> AwgnChannel::propagate(std::span<const cdouble> x_seq, const Constellation&,
                                            Rng& rng, PropagationPurpose purpose, bool track_grad) {
  count(purpose);
  if (track_grad) tracked_size_ = x_seq.size();
  return awgn(x_seq, snr_db_, rng);
}

ChannelGrad AwgnChannel::adjoint(std::span<const cdouble> grad_y) {
  if (tracked_size_ != grad_y.size()) throw std::logic_error("awgn adjoint: no tracked propagate");
  return ChannelGrad{std::vector<cdouble>(grad_y.begin(), grad_y.end()), {}};
}

NlinChannel::NlinChannel(NlinParams np, double launch_power_dbm,
                         std::optional<QuantizerParams> quantizer)
    : params_(np),
      launch_power_dbm_(launch_power_dbm),
      launch_power_w_(dbm_to_watt(launch_power_dbm)),
      quantizer_(quantizer) {
  params_.validate();
  if (quantizer_) quantizer_->validate();
}

std::vector<cdouble> NlinChannel::propagate(std::span<const cdouble> x_seq,
                                            const Constellation& ctx, Rng& rng,
                                            PropagationPurpose purpose, bool track_grad) {
  count(purpose);
  const Moments mom = moments(ctx);
  const double sigma_sq_norm = total_noise_variance(launch_power_w_, mom, params_) / launch_power_w_;
  const double sigma_ch = std::sqrt(sigma_sq_norm);

  std::array<double, 2> a_peak{1.0, 1.0};
  std::array<int, 2> argmax{0, 0};
  if (quantizer_) {
    for (int i = 1; i < ctx.order(); ++i) {
      if (ctx.points[i].real() > ctx.points[argmax[0]].real()) argmax[0] = i;
      if (ctx.points[i].imag() > ctx.points[argmax[1]].imag()) argmax[1] = i;
    }
    a_peak = peak_amplitude(ctx);
    if (a_peak[0] <= 0.0 || a_peak[1] <= 0.0)
      throw std::runtime_error("nlin channel: constellation peak amplitude must be positive");
  }

  tracked_.valid = track_grad;
  tracked_.hard_mode = quantizer_ && quantizer_->mode == QuantizerMode::HardQuantizer;
  if (track_grad) {
    tracked_.channel_eps.assign(x_seq.size(), {});
    tracked_.u.assign(quantizer_ ? x_seq.size() : 0, {});
    tracked_.sigma_ch = sigma_ch;
    tracked_.mom = mom;
    tracked_.a_peak = a_peak;
    tracked_.argmax_index = argmax;
    tracked_.points = ctx.points;
  }

  const double half = quantizer_ ? std::pow(2.0, quantizer_->enob - 1) : 1.0;
  const double sI = a_peak[0] / half;
  const double sQ = a_peak[1] / half;
  const bool additive = quantizer_ && quantizer_->mode == QuantizerMode::AdditiveUniformNoise;

  std::vector<cdouble> y(x_seq.begin(), x_seq.end());
  for (std::size_t k = 0; k < y.size(); ++k) {
    std::array<double, 4> u{};
    if (additive) {
      u[0] = rng.uniform(-1.0, 1.0);
      u[1] = rng.uniform(-1.0, 1.0);
      y[k] += cdouble(sI * u[0], sQ * u[1]);  // DAC, before sqrt(P) modulation
    } else if (tracked_.hard_mode) {
      y[k] = {hard_quantize_axis(y[k].real(), a_peak[0], quantizer_->enob),
              hard_quantize_axis(y[k].imag(), a_peak[1], quantizer_->enob)};
    }

    const cdouble eps = rng.cnormal(1.0);
    y[k] += sigma_ch * eps;

    if (additive) {
      u[2] = rng.uniform(-1.0, 1.0);
      u[3] = rng.uniform(-1.0, 1.0);
      y[k] += cdouble(sI * u[2], sQ * u[3]);  // ADC, after 1/sqrt(P) detection
    } else if (tracked_.hard_mode) {
      y[k] = {hard_quantize_axis(y[k].real(), a_peak[0], quantizer_->enob),
              hard_quantize_axis(y[k].imag(), a_peak[1], quantizer_->enob)};
    }

    if (track_grad) {
      tracked_.channel_eps[k] = eps;
      if (quantizer_) tracked_.u[k] = u;
    }
  }
  return y;
}

ChannelGrad NlinChannel::adjoint(std::span<const cdouble> grad_y) {
  if (!tracked_.valid || tracked_.channel_eps.size() != grad_y.size())
    throw std::logic_error("nlin adjoint: no tracked propagate");

  ChannelGrad out;
  out.x.assign(grad_y.begin(), grad_y.end());  // additive chain: direct path is identity
  out.points.assign(tracked_.points.size(), cdouble{0.0, 0.0});

  // Noise-scale path: sigma_ch depends on mu4/mu6 of the constellation.
  double g_sigma = 0.0;
  for (std::size_t k = 0; k < grad_y.size(); ++k) {
    g_sigma += grad_y[k].real() * tracked_.channel_eps[k].real() +
               grad_y[k].imag() * tracked_.channel_eps[k].imag();
  }
  const double p2 = launch_power_w_ * launch_power_w_;
  const double dsig_dmu4 = p2 * (params_.chi1 - 9.0 * params_.chi2) / (2.0 * tracked_.sigma_ch);
  const double dsig_dmu6 = p2 * params_.chi2 / (2.0 * tracked_.sigma_ch);
  const double g_mu4 = g_sigma * dsig_dmu4;
  const double g_mu6 = g_sigma * dsig_dmu6;

  const double M = static_cast<double>(tracked_.points.size());
  for (std::size_t i = 0; i < tracked_.points.size(); ++i) {
    const cdouble x = tracked_.points[i];
    const double a2 = std::norm(x);
    // d mu4/dx_i and d mu6/dx_i at unit mean power
    out.points[i] += x * (g_mu4 * 4.0 / M * (a2 - tracked_.mom.mu4) +
                          g_mu6 * 6.0 / M * (a2 * a2 - tracked_.mom.mu6));
  }

  // Dynamic-range path: both converter stages scale with A_peak, which
  // tracks the constellation's max Re / max Im point.
  if (quantizer_ && !tracked_.hard_mode) {
    const double half = std::pow(2.0, quantizer_->enob - 1);
    double gA_I = 0.0, gA_Q = 0.0;
    for (std::size_t k = 0; k < grad_y.size(); ++k) {
      const auto& u = tracked_.u[k];
      gA_I += grad_y[k].real() * (u[0] + u[2]);
      gA_Q += grad_y[k].imag() * (u[1] + u[3]);
    }
    gA_I /= half;
    gA_Q /= half;
    out.points[tracked_.argmax_index[0]] += cdouble(1.2 * gA_I, 0.0);
    out.points[tracked_.argmax_index[1]] += cdouble(0.0, 1.2 * gA_Q);
  }
  return out;
}

ChannelGrad NonDifferentiableChannel::adjoint(std::span<const cdouble>) {
  throw std::runtime_error("channel '" + name() +
                           "' does not expose an adjoint; backpropagation training requires a "
                           "differentiable channel");
}

}  // namespace gcslab
