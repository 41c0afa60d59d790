#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gcslab/channel.hpp"
#include "gcslab/constellation.hpp"
#include "gcslab/rng.hpp"

namespace gcslab {

/// Dual-polarization WDM link description (Table-I style values).
struct FiberLinkParams {
  double symbol_rate_hz = 32e9;
  double carrier_freq_hz = 193.41e12;
  int wdm_channels = 5;
  double channel_spacing_hz = 50e9;
  int n_pol = 2;
  int n_spans = 10;
  double span_length_km = 100.0;
  double gamma_per_w_km = 1.3;
  double dispersion_ps_nm_km = 16.464;
  double alpha_db_km = 0.2;
  double noise_figure_db = 5.0;  // amplifier gain is fixed at alpha*L
  bool ase_enabled = true;
  int sps = 16;
  double step_size_km = 0.1;
  double rrc_rolloff = 0.01;
  int rrc_span_symbols = 64;

  int steps_per_span() const;
  double beta2_s2_per_m() const;     // from the dispersion parameter
  double alpha_np_per_m() const;     // power attenuation in neper/m
  double amp_gain_db() const { return alpha_db_km * span_length_km; }
  double sample_rate_hz() const { return sps * symbol_rate_hz; }
  /// ASE variance per polarization over the simulation bandwidth, per span.
  double ase_variance_per_span() const;

  void validate() const;  // positivity, sps >= 2, step divides span, aliasing guard
};

/// Waveform between the processing blocks: one sequence per polarization
/// holding the coupled WDM field at the simulation sample rate.
struct ComplexSignal {
  std::vector<std::vector<cdouble>> pol;
  int sps = 1;
  double reference_power_w = 1.0;  // launch power per WDM channel

  std::size_t samples() const { return pol.empty() ? 0 : pol[0].size(); }
};

/// Unit-energy root-raised-cosine taps; odd count span_symbols*sps + 1.
std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps);

/// Per-channel per-polarization symbol streams, indexed [channel][pol].
using WdmSymbols = std::vector<std::array<std::vector<cdouble>, 2>>;

/// Pulse shaping, per-channel launch-power scaling (P_s split evenly
/// between polarizations) and WDM coupling. All filtering is circular.
ComplexSignal wdm_transmit(const WdmSymbols& symbols, const FiberLinkParams& lp,
                           double launch_power_w);

/// Forward-run state retained for the checkpointed adjoint: the field
/// every `checkpoint_every` steps plus the per-span ASE realizations.
struct SsfmCheckpoints {
  int checkpoint_every = 10;
  std::vector<std::vector<std::vector<cdouble>>> fields;  // [checkpoint][pol][sample]
  std::vector<std::vector<std::vector<cdouble>>> ase;     // [span][pol][sample]
  FiberLinkParams params;
};

/// Symmetric split-step propagation over the whole link: per step a
/// half-step of dispersion, the Manakov (8/9 gamma) nonlinear phase over
/// the step's effective length, another dispersion half-step and the step
/// attenuation; per span an EDFA with gain alpha*L and NF-determined ASE.
/// Always increments `counter` (when given) by one propagation.
ComplexSignal ssfm_propagate(const ComplexSignal& tx, const FiberLinkParams& lp, Rng& rng,
                             int checkpoint_every = 10, SsfmCheckpoints* save = nullptr,
                             PropagationCounter* counter = nullptr,
                             PropagationPurpose purpose = PropagationPurpose::Train);

struct ReceiverOutput {
  std::array<std::vector<cdouble>, 2> symbols;  // center channel, per pol
  std::array<double, 2> derotation_rad{0.0, 0.0};
};

/// Full-band CD inverse, center-channel RRC matched filter, downsample to
/// one sample per symbol, 1/sqrt(P_pol) rescale and (when reference
/// symbols are supplied) static phase de-rotation arg E[y x*] per pol.
ReceiverOutput wdm_receiver(const ComplexSignal& rx, const FiberLinkParams& lp,
                            const WdmSymbols* reference = nullptr);

/// Reverse-mode gradient through the fiber: gradient of a scalar
/// receiver-side loss w.r.t. the fiber input field, recomputing
/// intra-checkpoint segments forward then stepping backward. The same
/// noise realizations recorded in `cp` are replayed.
std::vector<std::vector<cdouble>> ssfm_adjoint(const SsfmCheckpoints& cp,
                                               const std::vector<std::vector<cdouble>>& grad_rx_field);

/// Training channel wrapping the full chain. The batch is the center
/// channel's X polarization; the Y polarization and all other WDM
/// channels carry interferer symbols drawn uniformly from the current
/// constellation. Adjoint (when enabled) returns gradients at the batch
/// symbols via the checkpointed fiber adjoint and the linear TX/RX
/// adjoints, with the de-rotation phase frozen at its forward value.
class SsfmChannel final : public Channel {
 public:
  SsfmChannel(FiberLinkParams lp, double launch_power_dbm, bool enable_adjoint = true,
              int checkpoint_every = 10);

  std::vector<cdouble> propagate(std::span<const cdouble> x_seq, const Constellation& ctx, Rng& rng,
                                 PropagationPurpose purpose, bool track_grad) override;
  bool differentiable() const override { return enable_adjoint_; }
  ChannelGrad adjoint(std::span<const cdouble> grad_y) override;
  std::string name() const override { return "ssfm"; }
  std::optional<double> launch_power_dbm() const override { return launch_power_dbm_; }

  const FiberLinkParams& link() const { return lp_; }

 private:
  FiberLinkParams lp_;
  double launch_power_dbm_;
  double launch_power_w_;
  bool enable_adjoint_;
  int checkpoint_every_;

  struct Tracked {
    SsfmCheckpoints cp;
    std::array<double, 2> theta{};
    std::size_t n_symbols = 0;
    bool valid = false;
  } tracked_;
};

}  // namespace gcslab
