#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcslab/autoencoder.hpp"
#include "gcslab/channel.hpp"
#include "gcslab/metrics.hpp"

namespace gcslab {

/// One optimization run's sampling and cadence parameters. Zero values
/// resolve to the mode defaults: MI N=256*M B=32*M; GMI N=32*M with the
/// balanced per-symbol composition and B=N (fixed) or B=M when adaptive.
struct TrainSchedule {
  AeMode mode = AeMode::Mi;
  int epochs = 100;
  int validation_every = 5;
  long sample_set_size = 0;
  long batch_size = 0;
  long validation_symbols = 50000;
  bool adaptive_batch = false;
  double plateau_delta = 1e-3;
  int plateau_patience = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::string stage_name;

  long resolved_sample_set_size(int order) const;
  long resolved_batch_size(int order) const;
  void validate(int order) const;
};

/// Policy and iteration counts of the alternating RL trainer.
struct RlPolicyState {
  double policy_var = 0.01;
  int encoder_iters = 20;
  int decoder_iters = 20;
  bool mean_baseline = false;
};

/// Cubature Kalman filter hyperparameters (state is run-internal).
struct CkfOptions {
  double process_noise_q = 1e-8;
  double measurement_noise_r = 1e-6;
  double initial_covariance_p0 = 1e-4;
};

struct TrainResult {
  Autoencoder ae;
  std::vector<MetricRecord> records;
  std::vector<long> batch_doubling_epochs;
  long long encoder_phase_propagations = 0;  // RL: one per encoder iteration
  long long decoder_phase_propagations = 0;  // RL: one per decoder iteration
  long ckf_recondition_events = 0;
  long epochs_run = 0;
  double final_loss = 0.0;
};

/// Sample-set indices for one epoch. MI mode: N i.i.d. uniform draws.
/// GMI mode: every symbol exactly N/M times, shuffled.
std::vector<int> make_sample_set(AeMode mode, int order, long n, Rng& rng);

/// Backpropagation: per batch one channel propagation, exact gradients
/// through decoder, channel adjoint and encoder normalization, one Adam
/// step on the joint weight set. Throws if the channel has no adjoint.
TrainResult train_bp(Autoencoder ae, Channel& channel, const TrainSchedule& schedule);

/// Alternating RL: per epoch `decoder_iters` decoder-only BP iterations,
/// then `encoder_iters` encoder iterations with a Gaussian perturbation
/// policy and the score-function surrogate gradient. One propagation per
/// iteration; the two phases are tallied separately.
TrainResult train_rl(Autoencoder ae, Channel& channel, const TrainSchedule& schedule,
                     const RlPolicyState& policy);

/// Cubature Kalman filter over the joint weight vector: 2*N_w cubature
/// points per batch (one propagation each, common random numbers within
/// the batch), innovation update against the concatenated target vectors.
TrainResult train_ckf(Autoencoder ae, Channel& channel, const TrainSchedule& schedule,
                      const CkfOptions& options);

/// Plateau-driven batch-size doubling for GMI training: doubles when the
/// loss has not improved by more than `delta` for `patience` epochs;
/// signals stop when that happens at the full sample-set batch size.
class AdaptiveBatchController {
 public:
  AdaptiveBatchController(long initial_batch, long sample_set_size, double delta, int patience);

  struct Decision {
    long batch_size;
    bool doubled = false;
    bool stop = false;
  };

  Decision observe(double loss);
  long batch_size() const { return batch_; }

 private:
  long batch_;
  long sample_set_;
  double delta_;
  int patience_;
  double best_loss_;
  int stale_epochs_ = 0;
  bool has_best_ = false;
};

enum class TrainerKind { Bp, Rl, Ckf };

std::string to_string(TrainerKind k);
TrainerKind trainer_kind_from_string(const std::string& s);

struct StagePlan {
  std::string name;
  Channel* channel = nullptr;
  TrainSchedule schedule;
};

/// Pre-train/train orchestration: stages run in order on the same weight
/// set; records are tagged with the stage name and epoch numbering is
/// global across stages.
TrainResult two_stage(Autoencoder ae, TrainerKind kind, std::span<StagePlan> stages,
                      const RlPolicyState& policy, const CkfOptions& options);

/// Decoder-free validation through module `metrics`: extracts the
/// constellation, transmits fresh symbols, estimates sigma_G and measures
/// MI (and GMI with the identity labeling in GMI mode).
MetricRecord validate(const Autoencoder& ae, Channel& channel, long n_symbols, Rng& rng);

}  // namespace gcslab
