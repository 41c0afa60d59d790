#include "gcslab/ssfm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "gcslab/fft.hpp"

namespace gcslab {
namespace {

constexpr double kLightSpeed = 299792458.0;      // m/s
constexpr double kPlanck = 6.62607015e-34;       // J s
constexpr double kPi = std::numbers::pi_v<double>;

using Field = std::vector<std::vector<cdouble>>;  // [pol][sample]

}  // namespace

int FiberLinkParams::steps_per_span() const {
  return static_cast<int>(std::lround(span_length_km / step_size_km));
}

double FiberLinkParams::beta2_s2_per_m() const {
  const double d_si = dispersion_ps_nm_km * 1e-6;  // s/m^2
  const double lambda = kLightSpeed / carrier_freq_hz;
  return -d_si * lambda * lambda / (2.0 * kPi * kLightSpeed);
}

double FiberLinkParams::alpha_np_per_m() const {
  return alpha_db_km * std::log(10.0) / 10.0 / 1000.0;
}

double FiberLinkParams::ase_variance_per_span() const {
  const double gain_lin = std::pow(10.0, amp_gain_db() / 10.0);
  const double nf_lin = std::pow(10.0, noise_figure_db / 10.0);
  const double psd_per_pol = nf_lin * gain_lin * kPlanck * carrier_freq_hz / 2.0;
  return psd_per_pol * sample_rate_hz();
}

void FiberLinkParams::validate() const {
  if (symbol_rate_hz <= 0 || carrier_freq_hz <= 0 || channel_spacing_hz <= 0 ||
      span_length_km <= 0 || step_size_km <= 0 || gamma_per_w_km < 0 || alpha_db_km < 0)
    throw std::invalid_argument("fiber link: parameters must be positive");
  if (wdm_channels < 1 || wdm_channels % 2 == 0)
    throw std::invalid_argument("fiber link: wdm_channels must be odd (center channel at baseband)");
  if (n_pol != 1 && n_pol != 2) throw std::invalid_argument("fiber link: n_pol must be 1 or 2");
  if (n_spans < 1) throw std::invalid_argument("fiber link: n_spans must be >= 1");
  if (sps < 2) throw std::invalid_argument("fiber link: sps must be >= 2");
  const double steps = span_length_km / step_size_km;
  if (std::abs(steps - std::lround(steps)) > 1e-9)
    throw std::invalid_argument("fiber link: step_size_km must divide span_length_km");
  if (rrc_rolloff <= 0.0 || rrc_rolloff > 1.0)
    throw std::invalid_argument("fiber link: rrc_rolloff must be in (0,1]");
  const double half_band = 0.5 * (wdm_channels - 1) * channel_spacing_hz +
                           0.5 * (1.0 + rrc_rolloff) * symbol_rate_hz;
  if (half_band > 0.5 * sample_rate_hz())
    throw std::invalid_argument("fiber link: WDM band exceeds the simulation bandwidth (aliasing)");
}

std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps) {
  if (rolloff <= 0.0 || rolloff > 1.0) throw std::invalid_argument("rrc_taps: rolloff must be in (0,1]");
  if (span_symbols < 1 || sps < 1) throw std::invalid_argument("rrc_taps: bad span/sps");
  const int n = span_symbols * sps + 1;  // odd
  const int center = n / 2;
  std::vector<double> h(n);
  const double b = rolloff;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - center) / sps;  // in symbol periods
    double v;
    if (std::abs(t) < 1e-12) {
      v = 1.0 + b * (4.0 / kPi - 1.0);
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
      v = (b / std::sqrt(2.0)) *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) +
           (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
    } else {
      const double num = std::sin(kPi * t * (1.0 - b)) + 4.0 * b * t * std::cos(kPi * t * (1.0 + b));
      const double den = kPi * t * (1.0 - 16.0 * b * b * t * t);
      v = num / den;
    }
    h[i] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double scale = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= scale;
  return h;
}

namespace {

/// Zero-phase RRC frequency response on the N-point grid: FFT of the tap
/// vector with its center placed at sample 0 (real and even by symmetry).
std::vector<double> rrc_frequency_response(const FiberLinkParams& lp, std::size_t n) {
  const std::vector<double> taps = rrc_taps(lp.rrc_rolloff, lp.rrc_span_symbols, lp.sps);
  if (taps.size() > n)
    throw std::invalid_argument("signal too short for the RRC span");
  std::vector<cdouble> buf(n, cdouble{0.0, 0.0});
  const int center = static_cast<int>(taps.size()) / 2;
  for (int i = 0; i < static_cast<int>(taps.size()); ++i) {
    const long idx = (static_cast<long>(i) - center + static_cast<long>(n)) % static_cast<long>(n);
    buf[idx] = taps[i];
  }
  fft_inplace(buf);
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = buf[i].real();  // imaginary part is ~1e-16
  return h;
}

long channel_shift_bins(const FiberLinkParams& lp, int channel, std::size_t n) {
  const double df = lp.sample_rate_hz() / static_cast<double>(n);
  const double offset = (channel - (lp.wdm_channels - 1) / 2) * lp.channel_spacing_hz;
  return std::lround(offset / df);
}

std::vector<cdouble> circular_shift(const std::vector<cdouble>& v, long bins) {
  const long n = static_cast<long>(v.size());
  std::vector<cdouble> out(v.size());
  for (long i = 0; i < n; ++i) out[((i + bins) % n + n) % n] = v[i];
  return out;
}

double per_pol_launch_power(const FiberLinkParams& lp, double launch_power_w) {
  return launch_power_w / static_cast<double>(lp.n_pol);
}

}  // namespace

ComplexSignal wdm_transmit(const WdmSymbols& symbols, const FiberLinkParams& lp,
                           double launch_power_w) {
  lp.validate();
  if (static_cast<int>(symbols.size()) != lp.wdm_channels)
    throw std::invalid_argument("wdm_transmit: need one symbol stream per WDM channel");
  if (launch_power_w <= 0.0) throw std::invalid_argument("wdm_transmit: launch power must be positive");
  const std::size_t n_sym = symbols[0][0].size();
  for (const auto& ch : symbols)
    for (int p = 0; p < lp.n_pol; ++p)
      if (ch[p].size() != n_sym) throw std::invalid_argument("wdm_transmit: unequal stream lengths");
  if (n_sym == 0) throw std::invalid_argument("wdm_transmit: empty streams");

  const std::size_t n = n_sym * static_cast<std::size_t>(lp.sps);
  const std::vector<double> h = rrc_frequency_response(lp, n);
  const double g = std::sqrt(per_pol_launch_power(lp, launch_power_w) * lp.sps);

  ComplexSignal out;
  out.sps = lp.sps;
  out.reference_power_w = launch_power_w;
  out.pol.assign(lp.n_pol, std::vector<cdouble>(n, cdouble{0.0, 0.0}));

  std::vector<cdouble> spectrum_sum(n);
  for (int p = 0; p < lp.n_pol; ++p) {
    std::fill(spectrum_sum.begin(), spectrum_sum.end(), cdouble{0.0, 0.0});
    for (int ch = 0; ch < lp.wdm_channels; ++ch) {
      std::vector<cdouble> x(n, cdouble{0.0, 0.0});
      for (std::size_t k = 0; k < n_sym; ++k) x[k * lp.sps] = symbols[ch][p][k] * g;
      fft_inplace(x);
      for (std::size_t i = 0; i < n; ++i) x[i] *= h[i];
      const long bins = channel_shift_bins(lp, ch, n);
      if (bins != 0) x = circular_shift(x, bins);
      for (std::size_t i = 0; i < n; ++i) spectrum_sum[i] += x[i];
    }
    std::vector<cdouble> t = spectrum_sum;
    ifft_inplace(t);
    out.pol[p] = std::move(t);
  }
  return out;
}

namespace {

struct StepOperators {
  std::vector<cdouble> disp_half;       // exp(+j beta2/2 w^2 h/2)
  std::vector<cdouble> disp_half_conj;  // adjoint phase
  double atten = 1.0;                   // per-step amplitude factor
  double nl_factor = 0.0;               // (8/9 for dual pol) * gamma * L_eff, rad/W
  double amp_gain = 1.0;                // per-span amplitude gain
  double ase_var = 0.0;                 // per-pol ASE variance per span
  int steps_per_span = 0;
};

StepOperators make_step_operators(const FiberLinkParams& lp, std::size_t n) {
  StepOperators ops;
  const double h_m = lp.step_size_km * 1000.0;
  const double beta2 = lp.beta2_s2_per_m();
  const auto freqs = fft_frequencies(n, lp.sample_rate_hz());
  ops.disp_half.resize(n);
  ops.disp_half_conj.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 2.0 * kPi * freqs[i];
    const double phase = 0.5 * beta2 * w * w * (0.5 * h_m);
    ops.disp_half[i] = std::polar(1.0, phase);
    ops.disp_half_conj[i] = std::conj(ops.disp_half[i]);
  }
  const double alpha = lp.alpha_np_per_m();
  ops.atten = std::exp(-0.5 * alpha * h_m);
  const double leff = alpha > 0.0 ? (1.0 - std::exp(-alpha * h_m)) / alpha : h_m;
  const double manakov = lp.n_pol == 2 ? 8.0 / 9.0 : 1.0;
  ops.nl_factor = manakov * (lp.gamma_per_w_km / 1000.0) * leff;
  ops.amp_gain = std::pow(10.0, lp.amp_gain_db() / 20.0);
  ops.ase_var = lp.ase_enabled ? lp.ase_variance_per_span() : 0.0;
  ops.steps_per_span = lp.steps_per_span();
  return ops;
}

void apply_freq_phase(std::vector<cdouble>& a, const std::vector<cdouble>& phase) {
  fft_inplace(a);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= phase[i];
  ifft_inplace(a);
}

void nonlinear_rotate(Field& a, double nl_factor) {
  const std::size_t n = a[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    double power = 0.0;
    for (const auto& pol : a) power += std::norm(pol[i]);
    const cdouble rot = std::polar(1.0, nl_factor * power);
    for (auto& pol : a) pol[i] *= rot;
  }
}

void ssfm_step(Field& a, const StepOperators& ops) {
  for (auto& pol : a) apply_freq_phase(pol, ops.disp_half);
  nonlinear_rotate(a, ops.nl_factor);
  for (auto& pol : a) apply_freq_phase(pol, ops.disp_half);
  if (ops.atten != 1.0)
    for (auto& pol : a)
      for (auto& v : pol) v *= ops.atten;
}

}  // namespace

ComplexSignal ssfm_propagate(const ComplexSignal& tx, const FiberLinkParams& lp, Rng& rng,
                             int checkpoint_every, SsfmCheckpoints* save,
                             PropagationCounter* counter, PropagationPurpose purpose) {
  lp.validate();
  if (static_cast<int>(tx.pol.size()) != lp.n_pol)
    throw std::invalid_argument("ssfm_propagate: polarization count mismatch");
  if (checkpoint_every < 1) throw std::invalid_argument("ssfm_propagate: checkpoint_every must be >= 1");
  const std::size_t n = tx.samples();
  for (const auto& pol : tx.pol)
    if (pol.size() != n) throw std::invalid_argument("ssfm_propagate: unequal polarization lengths");

  if (counter) {
    (purpose == PropagationPurpose::Train ? counter->train : counter->validation)
        .fetch_add(1, std::memory_order_relaxed);
  }

  const StepOperators ops = make_step_operators(lp, n);
  Field a = tx.pol;

  if (save) {
    save->checkpoint_every = checkpoint_every;
    save->params = lp;
    save->fields.clear();
    save->ase.clear();
  }

  for (int span = 0; span < lp.n_spans; ++span) {
    for (int step = 0; step < ops.steps_per_span; ++step) {
      if (save && step % checkpoint_every == 0) save->fields.push_back(a);
      ssfm_step(a, ops);
    }
    // EDFA: gain restores the span loss, then ASE is injected.
    std::vector<std::vector<cdouble>> span_noise;
    if (save) span_noise.assign(lp.n_pol, {});
    for (int p = 0; p < lp.n_pol; ++p) {
      for (auto& v : a[p]) v *= ops.amp_gain;
      if (ops.ase_var > 0.0) {
        if (save) span_noise[p].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const cdouble noise = rng.cnormal(ops.ase_var);
          a[p][i] += noise;
          if (save) span_noise[p][i] = noise;
        }
      }
    }
    if (save) save->ase.push_back(std::move(span_noise));
  }

  ComplexSignal out;
  out.sps = tx.sps;
  out.reference_power_w = tx.reference_power_w;
  out.pol = std::move(a);
  return out;
}

ReceiverOutput wdm_receiver(const ComplexSignal& rx, const FiberLinkParams& lp,
                            const WdmSymbols* reference) {
  lp.validate();
  const std::size_t n = rx.samples();
  if (n == 0 || n % lp.sps != 0) throw std::invalid_argument("wdm_receiver: bad signal length");
  const std::size_t n_sym = n / lp.sps;

  const std::vector<double> h = rrc_frequency_response(lp, n);
  const auto freqs = fft_frequencies(n, lp.sample_rate_hz());
  const double beta2 = lp.beta2_s2_per_m();
  const double total_m = lp.n_spans * lp.span_length_km * 1000.0;
  std::vector<cdouble> cd_comp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 2.0 * kPi * freqs[i];
    cd_comp[i] = std::polar(1.0, -0.5 * beta2 * w * w * total_m);
  }

  const double g = std::sqrt(per_pol_launch_power(lp, rx.reference_power_w) * lp.sps);
  const int center = (lp.wdm_channels - 1) / 2;

  ReceiverOutput out;
  for (int p = 0; p < lp.n_pol && p < 2; ++p) {
    std::vector<cdouble> a = rx.pol[p];
    fft_inplace(a);
    for (std::size_t i = 0; i < n; ++i) a[i] *= cd_comp[i] * h[i];
    ifft_inplace(a);
    std::vector<cdouble> sym(n_sym);
    for (std::size_t k = 0; k < n_sym; ++k) sym[k] = a[k * lp.sps] / g;

    if (reference) {
      const auto& ref = (*reference)[center][p];
      if (ref.size() != n_sym) throw std::invalid_argument("wdm_receiver: reference length mismatch");
      cdouble acc{0.0, 0.0};
      for (std::size_t k = 0; k < n_sym; ++k) acc += sym[k] * std::conj(ref[k]);
      const double theta = std::arg(acc);
      const cdouble rot = std::polar(1.0, -theta);
      for (auto& v : sym) v *= rot;
      out.derotation_rad[p] = theta;
    }
    out.symbols[p] = std::move(sym);
  }
  return out;
}

std::vector<std::vector<cdouble>> ssfm_adjoint(
    const SsfmCheckpoints& cp, const std::vector<std::vector<cdouble>>& grad_rx_field) {
  const FiberLinkParams& lp = cp.params;
  if (static_cast<int>(grad_rx_field.size()) != lp.n_pol)
    throw std::invalid_argument("ssfm_adjoint: polarization count mismatch");
  if (cp.fields.empty()) throw std::invalid_argument("ssfm_adjoint: no checkpoints");
  const std::size_t n = grad_rx_field[0].size();
  if (cp.fields[0][0].size() != n)
    throw std::invalid_argument("ssfm_adjoint: checkpoint/gradient length mismatch");

  const StepOperators ops = make_step_operators(lp, n);
  const int k = cp.checkpoint_every;
  const int steps = ops.steps_per_span;
  const int segs_per_span = (steps + k - 1) / k;
  if (static_cast<int>(cp.fields.size()) != lp.n_spans * segs_per_span)
    throw std::invalid_argument("ssfm_adjoint: checkpoint/step mismatch");

  Field grad = grad_rx_field;

  for (int span = lp.n_spans - 1; span >= 0; --span) {
    // EDFA adjoint: additive ASE passes the gradient through, gain scales it.
    for (auto& pol : grad)
      for (auto& v : pol) v *= ops.amp_gain;

    for (int seg = segs_per_span - 1; seg >= 0; --seg) {
      const int step_begin = seg * k;
      const int step_end = std::min(steps, step_begin + k);
      // Recompute this segment forward, caching the field entering each
      // nonlinear rotation and its phase.
      Field a = cp.fields[span * segs_per_span + seg];
      std::vector<Field> pre_nl(step_end - step_begin);
      std::vector<std::vector<double>> phases(step_end - step_begin);
      for (int s = step_begin; s < step_end; ++s) {
        for (auto& pol : a) apply_freq_phase(pol, ops.disp_half);
        const int j = s - step_begin;
        pre_nl[j] = a;
        phases[j].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          double power = 0.0;
          for (const auto& pol : a) power += std::norm(pol[i]);
          phases[j][i] = ops.nl_factor * power;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const cdouble rot = std::polar(1.0, phases[j][i]);
          for (auto& pol : a) pol[i] *= rot;
        }
        for (auto& pol : a) apply_freq_phase(pol, ops.disp_half);
        if (ops.atten != 1.0)
          for (auto& pol : a)
            for (auto& v : pol) v *= ops.atten;
      }

      // Walk the segment's steps in reverse.
      for (int s = step_end - 1; s >= step_begin; --s) {
        const int j = s - step_begin;
        if (ops.atten != 1.0)
          for (auto& pol : grad)
            for (auto& v : pol) v *= ops.atten;
        for (auto& pol : grad) apply_freq_phase(pol, ops.disp_half_conj);
        // Nonlinear rotation adjoint: with y_p = z_p e^{j phi},
        // phi = c sum_p |z_p|^2:  G_z,p = e^{-j phi} G_y,p - 2 c z_p S,
        // S = sum_p Im(conj(G_y,p) y_p).
        const Field& z = pre_nl[j];
        for (std::size_t i = 0; i < n; ++i) {
          const cdouble rot = std::polar(1.0, -phases[j][i]);
          double s_im = 0.0;
          for (std::size_t p = 0; p < grad.size(); ++p) {
            const cdouble y = z[p][i] * std::conj(rot);  // z * e^{+j phi}
            s_im += std::imag(std::conj(grad[p][i]) * y);
          }
          for (std::size_t p = 0; p < grad.size(); ++p)
            grad[p][i] = grad[p][i] * rot - 2.0 * ops.nl_factor * z[p][i] * s_im;
        }
        for (auto& pol : grad) apply_freq_phase(pol, ops.disp_half_conj);
      }
    }
  }
  return grad;
}

SsfmChannel::SsfmChannel(FiberLinkParams lp, double launch_power_dbm, bool enable_adjoint,
                         int checkpoint_every)
    : lp_(lp),
      launch_power_dbm_(launch_power_dbm),
      launch_power_w_(dbm_to_watt(launch_power_dbm)),
      enable_adjoint_(enable_adjoint),
      checkpoint_every_(checkpoint_every) {
  lp_.validate();
}

std::vector<cdouble> SsfmChannel::propagate(std::span<const cdouble> x_seq,
                                            const Constellation& ctx, Rng& rng,
                                            PropagationPurpose purpose, bool track_grad) {
  const std::size_t n_sym = x_seq.size();
  if (n_sym == 0) throw std::invalid_argument("ssfm channel: empty batch");
  const int center = (lp_.wdm_channels - 1) / 2;

  WdmSymbols symbols(lp_.wdm_channels);
  for (int ch = 0; ch < lp_.wdm_channels; ++ch) {
    for (int p = 0; p < lp_.n_pol; ++p) {
      if (ch == center && p == 0) {
        symbols[ch][p].assign(x_seq.begin(), x_seq.end());
      } else {
        symbols[ch][p].resize(n_sym);
        for (auto& v : symbols[ch][p])
          v = ctx.points[rng.integer(static_cast<std::uint64_t>(ctx.order()))];
      }
    }
  }

  const ComplexSignal tx = wdm_transmit(symbols, lp_, launch_power_w_);
  const bool save = track_grad && enable_adjoint_;
  tracked_.valid = save;
  const ComplexSignal rx = ssfm_propagate(tx, lp_, rng, checkpoint_every_,
                                          save ? &tracked_.cp : nullptr, &counter(), purpose);
  const ReceiverOutput rec = wdm_receiver(rx, lp_, &symbols);
  if (save) {
    tracked_.theta = rec.derotation_rad;
    tracked_.n_symbols = n_sym;
  }
  return rec.symbols[0];
}

ChannelGrad SsfmChannel::adjoint(std::span<const cdouble> grad_y) {
  if (!enable_adjoint_)
    throw std::runtime_error(
        "channel 'ssfm' was built without adjoint support; backpropagation training requires a "
        "differentiable channel");
  if (!tracked_.valid || grad_y.size() != tracked_.n_symbols)
    throw std::logic_error("ssfm adjoint: no tracked propagate");

  const std::size_t n_sym = tracked_.n_symbols;
  const std::size_t n = n_sym * static_cast<std::size_t>(lp_.sps);
  const std::vector<double> h = rrc_frequency_response(lp_, n);
  const auto freqs = fft_frequencies(n, lp_.sample_rate_hz());
  const double beta2 = lp_.beta2_s2_per_m();
  const double total_m = lp_.n_spans * lp_.span_length_km * 1000.0;
  const double g = std::sqrt(per_pol_launch_power(lp_, launch_power_w_) * lp_.sps);

  // Receiver adjoint (pol X carries the loss, pol Y gradient is zero).
  Field grad_field(lp_.n_pol, std::vector<cdouble>(n, cdouble{0.0, 0.0}));
  {
    const cdouble rot = std::polar(1.0, tracked_.theta[0]);  // adjoint of derotation
    std::vector<cdouble>& gp = grad_field[0];
    for (std::size_t k = 0; k < n_sym; ++k) gp[k * lp_.sps] = grad_y[k] * rot / g;
    fft_inplace(gp);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 2.0 * kPi * freqs[i];
      const cdouble cd_adj = std::polar(1.0, +0.5 * beta2 * w * w * total_m);
      gp[i] *= h[i] * cd_adj;
    }
    ifft_inplace(gp);
  }

  // Fiber adjoint via the checkpoints.
  Field grad_tx = ssfm_adjoint(tracked_.cp, grad_field);

  // Transmitter adjoint for the center channel, X polarization.
  std::vector<cdouble>& gp = grad_tx[0];
  fft_inplace(gp);
  for (std::size_t i = 0; i < n; ++i) gp[i] *= h[i];
  ifft_inplace(gp);

  ChannelGrad out;
  out.x.resize(n_sym);
  for (std::size_t k = 0; k < n_sym; ++k) out.x[k] = gp[k * lp_.sps] * g;
  return out;
}

}  // namespace gcslab
