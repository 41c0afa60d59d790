#pragma once

#include <array>
#include <atomic>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcslab/constellation.hpp"
#include "gcslab/rng.hpp"

namespace gcslab {

/// Run-scoped tally of channel propagations. Training and validation
/// passes are counted separately so the Table-IV style accounting is not
/// polluted by the every-5th-epoch validation traffic.
struct PropagationCounter {
  std::atomic<long long> train{0};
  std::atomic<long long> validation{0};

  long long total() const { return train.load() + validation.load(); }
};

enum class PropagationPurpose { Train, Validation };

/// Eq.(9)-style noise model parameters. sigma_ase_sq and the chi terms
/// are in absolute (watt) units with launch power in watts; the channel
/// realizes the total variance in the normalized (post 1/sqrt(P)) domain.
struct NlinParams {
  double sigma_ase_sq = 6.4851e-6;  // per pol, receiver band, Table-I link
  double chi0 = 3.27e3;             // W^-2, SSFM-calibrated default
  double chi1 = -4.77e2;            // multiplies (mu4 - 2)
  double chi2 = 5.29e1;             // multiplies (mu6 - 9*mu4 + 12)

  void validate() const;
};

/// sigma_NLIN^2 = P^3 * (chi0 + chi1*(mu4-2) + chi2*(mu6-9*mu4+12)).
double nlin_variance(double launch_power_w, const Moments& mom, const NlinParams& np);
/// Total sigma_n^2 = sigma_ASE^2 + sigma_NLIN^2.
double total_noise_variance(double launch_power_w, const Moments& mom, const NlinParams& np);

enum class QuantizerMode { AdditiveUniformNoise, HardQuantizer };

/// DAC/ADC converter model. a_peak is derived from the instantaneous
/// constellation, not stored here.
struct QuantizerParams {
  int enob = 8;
  QuantizerMode mode = QuantizerMode::AdditiveUniformNoise;

  void validate() const;
};

/// A_peak = 1.2 * (max_i Re x_i, max_i Im x_i).
std::array<double, 2> peak_amplitude(const Constellation& c);

/// One converter stage. Additive mode adds per-axis uniform noise on
/// (-A/2^(ENOB-1), +A/2^(ENOB-1)); hard mode applies a mid-rise quantizer
/// with 2^ENOB levels clipped to +-A per axis.
std::vector<cdouble> quantize(std::span<const cdouble> x_seq, const QuantizerParams& qp,
                              std::array<double, 2> a_peak, Rng& rng);

/// y = x + n with circular Gaussian n of variance 10^(-snr_db/10).
std::vector<cdouble> awgn(std::span<const cdouble> x_seq, double snr_db, Rng& rng);

/// Adjoint outputs of a differentiable channel: gradient w.r.t. the batch
/// inputs plus (when the noise statistics depend on the constellation)
/// gradient w.r.t. the M constellation points.
struct ChannelGrad {
  std::vector<cdouble> x;
  std::vector<cdouble> points;
};

/// Training-channel interface. propagate() counts one channel propagation.
/// `ctx` is the current constellation: NLIN noise statistics and converter
/// dynamic range follow it, and the SSFM channel draws interferer symbols
/// from it.
class Channel {
 public:
  virtual ~Channel() = default;

  virtual std::vector<cdouble> propagate(std::span<const cdouble> x_seq, const Constellation& ctx,
                                         Rng& rng, PropagationPurpose purpose,
                                         bool track_grad = false) = 0;
  virtual bool differentiable() const = 0;
  /// Adjoint of the last tracked propagate(). Throws if the channel is not
  /// differentiable or nothing was tracked.
  virtual ChannelGrad adjoint(std::span<const cdouble> grad_y) = 0;
  virtual std::string name() const = 0;
  virtual std::optional<double> launch_power_dbm() const { return std::nullopt; }
  virtual std::optional<double> quant_bits() const { return std::nullopt; }

  PropagationCounter& counter() { return counter_; }
  const PropagationCounter& counter() const { return counter_; }

 protected:
  void count(PropagationPurpose purpose) {
    (purpose == PropagationPurpose::Train ? counter_.train : counter_.validation)
        .fetch_add(1, std::memory_order_relaxed);
  }

 private:
  PropagationCounter counter_;
};

class AwgnChannel final : public Channel {
 public:
  explicit AwgnChannel(double snr_db) : snr_db_(snr_db) {}

  std::vector<cdouble> propagate(std::span<const cdouble> x_seq, const Constellation& ctx, Rng& rng,
                                 PropagationPurpose purpose, bool track_grad) override;
  bool differentiable() const override { return true; }
  ChannelGrad adjoint(std::span<const cdouble> grad_y) override;
  std::string name() const override { return "awgn"; }
  double snr_db() const { return snr_db_; }

 private:
  double snr_db_;
  std::size_t tracked_size_ = 0;
};

/// NLIN channel at one sample per symbol, optionally wrapped by DAC and
/// ADC converter stages (DAC before the sqrt(P) modulation, ADC after
/// the 1/sqrt(P) detection). Reparameterized gradients flow through the
/// moment-dependent noise scale and the peak-amplitude-dependent
/// quantization noise, matching what backpropagating through the model
/// graph would produce.
class NlinChannel final : public Channel {
 public:
  NlinChannel(NlinParams np, double launch_power_dbm,
              std::optional<QuantizerParams> quantizer = std::nullopt);

  std::vector<cdouble> propagate(std::span<const cdouble> x_seq, const Constellation& ctx, Rng& rng,
                                 PropagationPurpose purpose, bool track_grad) override;
  bool differentiable() const override { return true; }
  ChannelGrad adjoint(std::span<const cdouble> grad_y) override;
  std::string name() const override { return quantizer_ ? "nlin+quant" : "nlin"; }
  std::optional<double> launch_power_dbm() const override { return launch_power_dbm_; }
  std::optional<double> quant_bits() const override {
    if (quantizer_) return static_cast<double>(quantizer_->enob);
    return std::nullopt;
  }

  double launch_power_w() const { return launch_power_w_; }
  const NlinParams& params() const { return params_; }

 private:
  NlinParams params_;
  double launch_power_dbm_;
  double launch_power_w_;
  std::optional<QuantizerParams> quantizer_;

  // reparameterization state of the last tracked propagate
  struct Tracked {
    std::vector<cdouble> channel_eps;       // unit-variance channel noise draws
    std::vector<std::array<double, 4>> u;   // DAC I,Q and ADC I,Q uniform draws in (-1,1)
    double sigma_ch = 0.0;                  // realized channel noise std (normalized domain)
    Moments mom;
    std::array<double, 2> a_peak{};
    std::array<int, 2> argmax_index{};      // constellation index of max Re / max Im
    std::vector<cdouble> points;
    bool valid = false;
    bool hard_mode = false;
  } tracked_;
};

/// Wrapper that hides the adjoint of an inner channel; used to exercise
/// gradient-free training paths and the BP capability error.
class NonDifferentiableChannel final : public Channel {
 public:
  explicit NonDifferentiableChannel(std::unique_ptr<Channel> inner) : inner_(std::move(inner)) {}

  std::vector<cdouble> propagate(std::span<const cdouble> x_seq, const Constellation& ctx, Rng& rng,
                                 PropagationPurpose purpose, bool /*track_grad*/) override {
    auto y = inner_->propagate(x_seq, ctx, rng, purpose, false);
    count(purpose);
    return y;
  }
  bool differentiable() const override { return false; }
  ChannelGrad adjoint(std::span<const cdouble>) override;
  std::string name() const override { return inner_->name() + " (black box)"; }
  std::optional<double> launch_power_dbm() const override { return inner_->launch_power_dbm(); }
  std::optional<double> quant_bits() const override { return inner_->quant_bits(); }

 private:
  std::unique_ptr<Channel> inner_;
};

double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);

}  // namespace gcslab
