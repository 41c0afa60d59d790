#include "gcslab/trainers.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gcslab {

long TrainSchedule::resolved_sample_set_size(int order) const {
  if (sample_set_size > 0) return sample_set_size;
  return mode == AeMode::Mi ? 256L * order : 32L * order;
}

long TrainSchedule::resolved_batch_size(int order) const {
  if (batch_size > 0) return batch_size;
  if (mode == AeMode::Mi) return 32L * order;
  return adaptive_batch ? order : resolved_sample_set_size(order);
}

void TrainSchedule::validate(int order) const {
  if (epochs < 1) throw std::invalid_argument("schedule: epochs must be >= 1");
  const long n = resolved_sample_set_size(order);
  const long b = resolved_batch_size(order);
  if (b < 1 || n < 1 || n % b != 0)
    throw std::invalid_argument("schedule: batch size must divide the sample set size");
  if (mode == AeMode::Gmi && n % order != 0)
    throw std::invalid_argument("schedule: GMI sample set must balance all symbols");
  if (validation_symbols < 1) throw std::invalid_argument("schedule: validation_symbols must be >= 1");
}

std::vector<int> make_sample_set(AeMode mode, int order, long n, Rng& rng) {
  std::vector<int> idx(n);
  if (mode == AeMode::Mi) {
    for (auto& v : idx) v = static_cast<int>(rng.integer(static_cast<std::uint64_t>(order)));
  } else {
    if (n % order != 0) throw std::invalid_argument("make_sample_set: GMI set must balance symbols");
    const long per_symbol = n / order;
    long at = 0;
    for (int i = 0; i < order; ++i)
      for (long r = 0; r < per_symbol; ++r) idx[at++] = i;
    rng.shuffle(idx.begin(), idx.end());
  }
  return idx;
}

namespace {

Eigen::MatrixXd make_targets(AeMode mode, const Autoencoder& ae, std::span<const int> idx) {
  const long b = static_cast<long>(idx.size());
  if (mode == AeMode::Mi) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(ae.order, b);
    for (long k = 0; k < b; ++k) t(idx[k], k) = 1.0;
    return t;
  }
  const int m = ae.bits_per_symbol();
  Eigen::MatrixXd t(m, b);
  for (long k = 0; k < b; ++k)
    for (int p = 0; p < m; ++p) t(p, k) = static_cast<double>((idx[k] >> (m - 1 - p)) & 1);
  return t;
}

Eigen::MatrixXd to_decoder_input(std::span<const cdouble> y) {
  Eigen::MatrixXd in(2, static_cast<long>(y.size()));
  for (long k = 0; k < in.cols(); ++k) {
    in(0, k) = y[k].real();
    in(1, k) = y[k].imag();
  }
  return in;
}

Eigen::VectorXd per_sample_loss(AeMode mode, const Eigen::MatrixXd& targets,
                                const Eigen::MatrixXd& s) {
  Eigen::VectorXd l = Eigen::VectorXd::Zero(s.cols());
  if (mode == AeMode::Mi) {
    for (long c = 0; c < s.cols(); ++c)
      for (long r = 0; r < s.rows(); ++r)
        if (targets(r, c) != 0.0) l[c] -= targets(r, c) * std::log(std::max(s(r, c), kProbClamp));
  } else {
    const double m = static_cast<double>(s.rows());
    for (long c = 0; c < s.cols(); ++c) {
      double acc = 0.0;
      for (long r = 0; r < s.rows(); ++r) {
        const double u = targets(r, c);
        const double v = s(r, c);
        acc -= u * std::log(std::max(v, kProbClamp)) +
               (1.0 - u) * std::log(std::max(1.0 - v, kProbClamp));
      }
      l[c] = acc / m;
    }
  }
  return l;
}

struct BatchWork {
  Autoencoder::EncoderCache enc_cache;
  ForwardCache dec_cache;
  Gradients enc_grads, dec_grads;
};

/// Full forward + backward + Adam step for one batch; returns the loss.
double bp_batch(Autoencoder& ae, Channel& channel, std::span<const int> idx, Rng& rng,
                AdamState& opt_enc, AdamState& opt_dec, BatchWork& work) {
  const long b = static_cast<long>(idx.size());
  const Constellation c = ae.constellation_cached(work.enc_cache);

  std::vector<cdouble> x(b);
  for (long k = 0; k < b; ++k) x[k] = c.points[idx[k]];
  const std::vector<cdouble> y =
      channel.propagate(x, c, rng, PropagationPurpose::Train, /*track_grad=*/true);

  const Eigen::MatrixXd s = forward_cached(ae.decoder, to_decoder_input(y), work.dec_cache);
  const Eigen::MatrixXd targets = make_targets(ae.mode, ae, idx);
  const double loss = ae.mode == AeMode::Mi ? categorical_ce(targets, s) : binary_ce(targets, s);
  const Eigen::MatrixXd gz = ae.mode == AeMode::Mi ? ce_softmax_output_grad(targets, s)
                                                   : ll_sigmoid_output_grad(targets, s);

  work.dec_grads.init_like(ae.decoder);
  const Eigen::MatrixXd gy = backward_from_output_preact(ae.decoder, work.dec_cache, gz, work.dec_grads);

  std::vector<cdouble> grad_y(b);
  for (long k = 0; k < b; ++k) grad_y[k] = {gy(0, k), gy(1, k)};
  const ChannelGrad cg = channel.adjoint(grad_y);

  Eigen::MatrixXd grad_points = Eigen::MatrixXd::Zero(2, ae.order);
  for (long k = 0; k < b; ++k) {
    grad_points(0, idx[k]) += cg.x[k].real();
    grad_points(1, idx[k]) += cg.x[k].imag();
  }
  for (std::size_t i = 0; i < cg.points.size(); ++i) {
    grad_points(0, static_cast<long>(i)) += cg.points[i].real();
    grad_points(1, static_cast<long>(i)) += cg.points[i].imag();
  }

  work.enc_grads.init_like(ae.encoder);
  ae.encoder_backward(work.enc_cache, grad_points, work.enc_grads);

  adam_step(opt_enc, ae.encoder, work.enc_grads);
  adam_step(opt_dec, ae.decoder, work.dec_grads);
  return loss;
}

void fill_channel_fields(MetricRecord& r, const Channel& channel) {
  r.launch_power_dbm = channel.launch_power_dbm();
  r.quant_bits = channel.quant_bits();
}

}  // namespace

MetricRecord validate(const Autoencoder& ae, Channel& channel, long n_symbols, Rng& rng) {
  const Constellation c = ae.constellation();
  std::vector<int> idx(n_symbols);
  for (auto& v : idx) v = static_cast<int>(rng.integer(static_cast<std::uint64_t>(ae.order)));
  std::vector<cdouble> x(n_symbols);
  for (long k = 0; k < n_symbols; ++k) x[k] = c.points[idx[k]];
  const std::vector<cdouble> y = channel.propagate(x, c, rng, PropagationPurpose::Validation, false);
  const GaussianReceiverState rx = estimate_noise_var(x, y);

  MetricRecord r;
  r.channel_propagations = channel.counter().train.load();
  r.mi_bits = mi_mismatched_indexed(idx, y, c, rx);
  if (ae.mode == AeMode::Gmi)
    r.gmi_bits = gmi_mismatched_indexed(idx, y, c, identity_labeling(ae.order), rx);
  fill_channel_fields(r, channel);
  return r;
}

AdaptiveBatchController::AdaptiveBatchController(long initial_batch, long sample_set_size,
                                                 double delta, int patience)
    : batch_(initial_batch),
      sample_set_(sample_set_size),
      delta_(delta),
      patience_(patience),
      best_loss_(0.0) {
  if (initial_batch < 1 || sample_set_size < initial_batch || patience < 1)
    throw std::invalid_argument("adaptive batch: bad controller parameters");
}

AdaptiveBatchController::Decision AdaptiveBatchController::observe(double loss) {
  Decision d{batch_, false, false};
  if (!has_best_ || loss < best_loss_ - delta_) {
    best_loss_ = loss;
    has_best_ = true;
    stale_epochs_ = 0;
    return d;
  }
  ++stale_epochs_;
  if (stale_epochs_ < patience_) return d;
  if (batch_ >= sample_set_) {
    d.stop = true;
    return d;
  }
  batch_ = std::min(batch_ * 2, sample_set_);
  stale_epochs_ = 0;
  has_best_ = false;  // fresh plateau window at the new batch size
  d.batch_size = batch_;
  d.doubled = true;
  return d;
}

TrainResult train_bp(Autoencoder ae, Channel& channel, const TrainSchedule& schedule) {
  ae.validate();
  schedule.validate(ae.order);
  if (!channel.differentiable())
    throw std::runtime_error("train_bp: channel '" + channel.name() +
                             "' does not provide an adjoint (gradient) capability; use the RL or "
                             "CKF trainer instead");

  const int M = ae.order;
  const long n = schedule.resolved_sample_set_size(M);
  long b = schedule.resolved_batch_size(M);

  Rng sample_rng = Rng::substream(schedule.seed, 1);
  Rng channel_rng = Rng::substream(schedule.seed, 2);
  Rng val_rng = Rng::substream(schedule.seed, 3);

  AdamState opt_enc, opt_dec;
  opt_enc.learning_rate = schedule.learning_rate;
  opt_dec.learning_rate = schedule.learning_rate;
  opt_enc.init_like(ae.encoder);
  opt_dec.init_like(ae.decoder);

  AdaptiveBatchController controller(b, n, schedule.plateau_delta, schedule.plateau_patience);
  BatchWork work;

  TrainResult result;
  long epoch = 1;
  for (; epoch <= schedule.epochs; ++epoch) {
    const std::vector<int> set = make_sample_set(schedule.mode, M, n, sample_rng);
    const long n_batches = n / b;
    double epoch_loss = 0.0;
    for (long bi = 0; bi < n_batches; ++bi) {
      epoch_loss += bp_batch(ae, channel,
                             std::span<const int>(set.data() + bi * b, static_cast<std::size_t>(b)),
                             channel_rng, opt_enc, opt_dec, work);
    }
    epoch_loss /= static_cast<double>(n_batches);
    result.final_loss = epoch_loss;

    if (schedule.validation_every > 0 && epoch % schedule.validation_every == 0) {
      MetricRecord r = validate(ae, channel, schedule.validation_symbols, val_rng);
      r.epoch = epoch;
      r.stage = schedule.stage_name;
      result.records.push_back(r);
    }
    if (schedule.adaptive_batch) {
      const auto decision = controller.observe(epoch_loss);
      if (decision.doubled) {
        b = decision.batch_size;
        result.batch_doubling_epochs.push_back(epoch);
      }
      if (decision.stop) break;
    }
  }
  result.epochs_run = std::min<long>(epoch, schedule.epochs);

  if (result.records.empty() || result.records.back().epoch != result.epochs_run) {
    MetricRecord r = validate(ae, channel, schedule.validation_symbols, val_rng);
    r.epoch = result.epochs_run;
    r.stage = schedule.stage_name;
    result.records.push_back(r);
  }
  result.ae = std::move(ae);
  return result;
}

TrainResult train_rl(Autoencoder ae, Channel& channel, const TrainSchedule& schedule,
                     const RlPolicyState& policy) {
  ae.validate();
  schedule.validate(ae.order);
  if (policy.policy_var <= 0.0)
    throw std::invalid_argument("train_rl: policy variance must be positive (the score function "
                                "diverges as it approaches zero)");
  if (policy.encoder_iters < 1 || policy.decoder_iters < 0)
    throw std::invalid_argument("train_rl: bad iteration counts");

  const int M = ae.order;
  const long n = schedule.resolved_sample_set_size(M);
  const long b = schedule.resolved_batch_size(M);

  Rng sample_rng = Rng::substream(schedule.seed, 1);
  Rng channel_rng = Rng::substream(schedule.seed, 2);
  Rng val_rng = Rng::substream(schedule.seed, 3);
  Rng policy_rng = Rng::substream(schedule.seed, 4);

  AdamState opt_enc, opt_dec;
  opt_enc.learning_rate = schedule.learning_rate;
  opt_dec.learning_rate = schedule.learning_rate;
  opt_enc.init_like(ae.encoder);
  opt_dec.init_like(ae.decoder);

  TrainResult result;
  for (long epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const std::vector<int> set = make_sample_set(schedule.mode, M, n, sample_rng);
    const long n_batches = n / b;
    auto batch_of = [&](long it) {
      return std::span<const int>(set.data() + (it % n_batches) * b, static_cast<std::size_t>(b));
    };

    // Decoder phase: plain decoder BP on received symbols, encoder frozen.
    for (int it = 0; it < policy.decoder_iters; ++it) {
      const auto idx = batch_of(it);
      const Constellation c = ae.constellation();
      std::vector<cdouble> x(b);
      for (long k = 0; k < b; ++k) x[k] = c.points[idx[k]];
      const auto y = channel.propagate(x, c, channel_rng, PropagationPurpose::Train, false);
      ++result.decoder_phase_propagations;

      ForwardCache cache;
      const Eigen::MatrixXd s = forward_cached(ae.decoder, to_decoder_input(y), cache);
      const Eigen::MatrixXd targets = make_targets(ae.mode, ae, idx);
      const Eigen::MatrixXd gz = ae.mode == AeMode::Mi ? ce_softmax_output_grad(targets, s)
                                                       : ll_sigmoid_output_grad(targets, s);
      Gradients gdec;
      gdec.init_like(ae.decoder);
      backward_from_output_preact(ae.decoder, cache, gz, gdec);
      adam_step(opt_dec, ae.decoder, gdec);
      result.final_loss = ae.mode == AeMode::Mi ? categorical_ce(targets, s) : binary_ce(targets, s);
    }

    // Encoder phase: Gaussian perturbation policy, score-function gradient.
    for (int it = 0; it < policy.encoder_iters; ++it) {
      const auto idx = batch_of(policy.decoder_iters + it);
      Autoencoder::EncoderCache ecache;
      const Constellation c = ae.constellation_cached(ecache);
      std::vector<cdouble> x(b), xp(b);
      for (long k = 0; k < b; ++k) {
        x[k] = c.points[idx[k]];
        xp[k] = x[k] + policy_rng.cnormal(policy.policy_var);
      }
      const auto y = channel.propagate(xp, c, channel_rng, PropagationPurpose::Train, false);
      ++result.encoder_phase_propagations;

      const Eigen::MatrixXd s = ae.decoder.forward(to_decoder_input(y));
      const Eigen::MatrixXd targets = make_targets(ae.mode, ae, idx);
      const Eigen::VectorXd losses = per_sample_loss(ae.mode, targets, s);
      const double baseline = policy.mean_baseline ? losses.mean() : 0.0;

      // grad wrt the policy mean x_k of E[l] ~ l_k * grad log pi(xp|x):
      // grad_x log pi = 2 (xp - x) / sigma_pi^2.
      Eigen::MatrixXd grad_points = Eigen::MatrixXd::Zero(2, M);
      const double scale = 2.0 / (policy.policy_var * static_cast<double>(b));
      for (long k = 0; k < b; ++k) {
        const cdouble w = xp[k] - x[k];
        const double coeff = (losses[k] - baseline) * scale;
        grad_points(0, idx[k]) += coeff * w.real();
        grad_points(1, idx[k]) += coeff * w.imag();
      }
      Gradients genc;
      genc.init_like(ae.encoder);
      ae.encoder_backward(ecache, grad_points, genc);
      adam_step(opt_enc, ae.encoder, genc);
    }

    if (schedule.validation_every > 0 && epoch % schedule.validation_every == 0) {
      MetricRecord r = validate(ae, channel, schedule.validation_symbols, val_rng);
      r.epoch = epoch;
      r.stage = schedule.stage_name;
      result.records.push_back(r);
    }
  }
  result.epochs_run = schedule.epochs;

  if (result.records.empty() || result.records.back().epoch != result.epochs_run) {
    MetricRecord r = validate(ae, channel, schedule.validation_symbols, val_rng);
    r.epoch = result.epochs_run;
    r.stage = schedule.stage_name;
    result.records.push_back(r);
  }
  result.ae = std::move(ae);
  return result;
}

TrainResult train_ckf(Autoencoder ae, Channel& channel, const TrainSchedule& schedule,
                      const CkfOptions& options) {
  ae.validate();
  schedule.validate(ae.order);
  if (options.measurement_noise_r <= 0.0 || options.initial_covariance_p0 <= 0.0 ||
      options.process_noise_q < 0.0)
    throw std::invalid_argument("train_ckf: bad hyperparameters");

  const int M = ae.order;
  const long n = schedule.resolved_sample_set_size(M);
  const long b = schedule.resolved_batch_size(M);
  const long nw = ae.weight_count();
  const long dy = (schedule.mode == AeMode::Mi ? M : ae.bits_per_symbol()) * b;

  Rng sample_rng = Rng::substream(schedule.seed, 1);
  Rng val_rng = Rng::substream(schedule.seed, 3);

  Eigen::VectorXd wbar = ae.get_params();
  Eigen::MatrixXd P =
      options.initial_covariance_p0 * Eigen::MatrixXd::Identity(nw, nw);

  TrainResult result;
  long long batch_counter = 0;
  const double cubature_scale = std::sqrt(static_cast<double>(nw));
  const double col_scale = 1.0 / std::sqrt(2.0);

  Eigen::MatrixXd y_sigma(dy, 2 * nw);
  Eigen::VectorXd w(nw);

  for (long epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const std::vector<int> set = make_sample_set(schedule.mode, M, n, sample_rng);
    const long n_batches = n / b;

    for (long bi = 0; bi < n_batches; ++bi) {
      const std::span<const int> idx(set.data() + bi * b, static_cast<std::size_t>(b));

      // time update
      P.diagonal().array() += options.process_noise_q;

      Eigen::LLT<Eigen::MatrixXd> llt(P);
      if (llt.info() != Eigen::Success) {
        P = 0.5 * (P + P.transpose());
        P.diagonal().array() += 1e-12;
        llt.compute(P);
        ++result.ckf_recondition_events;
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("train_ckf: covariance lost positive definiteness");
      }
      const Eigen::MatrixXd S = llt.matrixL();

      // 2 N_w cubature points, common random numbers within the batch
      const Rng crn_base = Rng::substream(schedule.seed ^ 0x434b465f, batch_counter);
      for (long i = 0; i < 2 * nw; ++i) {
        const long col = i % nw;
        const double sign = i < nw ? 1.0 : -1.0;
        w = wbar + sign * cubature_scale * S.col(col);
        ae.set_params(w);
        const Constellation c = ae.constellation();
        std::vector<cdouble> x(b);
        for (long k = 0; k < b; ++k) x[k] = c.points[idx[k]];
        Rng r = crn_base;
        const auto y = channel.propagate(x, c, r, PropagationPurpose::Train, false);
        const Eigen::MatrixXd s = ae.decoder.forward(to_decoder_input(y));
        y_sigma.col(i) = Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
      }
      ae.set_params(wbar);
      ++batch_counter;

      const Eigen::MatrixXd targets = make_targets(schedule.mode, ae, idx);
      const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(targets.data(), targets.size());

      const Eigen::VectorXd yhat = y_sigma.rowwise().mean();
      const Eigen::MatrixXd yc = (y_sigma.colwise() - yhat) / std::sqrt(2.0 * nw);
      Eigen::MatrixXd xc(nw, 2 * nw);
      xc.leftCols(nw) = col_scale * S;
      xc.rightCols(nw) = -col_scale * S;

      // Innovation update in the 2 N_w space (Woodbury form of the
      // standard CKF gain; P stays PSD by construction).
      Eigen::MatrixXd t = yc.transpose() * yc;
      t.diagonal().array() += options.measurement_noise_r;
      const Eigen::LLT<Eigen::MatrixXd> tll(t);
      const Eigen::VectorXd nu = d - yhat;
      wbar += xc * tll.solve(yc.transpose() * nu);
      const Eigen::MatrixXd w_inv =
          tll.solve(Eigen::MatrixXd::Identity(2 * nw, 2 * nw));
      P = xc * (options.measurement_noise_r * w_inv) * xc.transpose();
      P = 0.5 * (P + P.transpose());
      ae.set_params(wbar);
    }

    if (schedule.validation_every > 0 && epoch % schedule.validation_every == 0) {
      MetricRecord r = validate(ae, channel, schedule.validation_symbols, val_rng);
      r.epoch = epoch;
      r.stage = schedule.stage_name;
      result.records.push_back(r);
    }
  }
  result.epochs_run = schedule.epochs;

  if (result.records.empty() || result.records.back().epoch != result.epochs_run) {
    MetricRecord r = validate(ae, channel, schedule.validation_symbols, val_rng);
    r.epoch = result.epochs_run;
    r.stage = schedule.stage_name;
    result.records.push_back(r);
  }
  result.ae = std::move(ae);
  return result;
}

std::string to_string(TrainerKind k) {
  switch (k) {
    case TrainerKind::Bp: return "bp";
    case TrainerKind::Rl: return "rl";
    case TrainerKind::Ckf: return "ckf";
  }
  return "?";
}

TrainerKind trainer_kind_from_string(const std::string& s) {
  if (s == "bp") return TrainerKind::Bp;
  if (s == "rl") return TrainerKind::Rl;
  if (s == "ckf") return TrainerKind::Ckf;
  throw std::invalid_argument("unknown trainer: " + s);
}

TrainResult two_stage(Autoencoder ae, TrainerKind kind, std::span<StagePlan> stages,
                      const RlPolicyState& policy, const CkfOptions& options) {
  if (stages.empty()) throw std::invalid_argument("two_stage: no stages");
  TrainResult combined;
  long epoch_offset = 0;
  for (auto& stage : stages) {
    if (!stage.channel) throw std::invalid_argument("two_stage: stage without channel");
    TrainSchedule schedule = stage.schedule;
    schedule.stage_name = stage.name;
    TrainResult r;
    switch (kind) {
      case TrainerKind::Bp: r = train_bp(std::move(ae), *stage.channel, schedule); break;
      case TrainerKind::Rl: r = train_rl(std::move(ae), *stage.channel, schedule, policy); break;
      case TrainerKind::Ckf: r = train_ckf(std::move(ae), *stage.channel, schedule, options); break;
    }
    for (auto& rec : r.records) rec.epoch += epoch_offset;
    for (auto& e : r.batch_doubling_epochs) e += epoch_offset;
    combined.records.insert(combined.records.end(), r.records.begin(), r.records.end());
    combined.batch_doubling_epochs.insert(combined.batch_doubling_epochs.end(),
                                          r.batch_doubling_epochs.begin(),
                                          r.batch_doubling_epochs.end());
    combined.encoder_phase_propagations += r.encoder_phase_propagations;
    combined.decoder_phase_propagations += r.decoder_phase_propagations;
    combined.ckf_recondition_events += r.ckf_recondition_events;
    combined.final_loss = r.final_loss;
    epoch_offset += r.epochs_run;
    ae = std::move(r.ae);
  }
  combined.epochs_run = epoch_offset;
  combined.ae = std::move(ae);
  return combined;
}

}  // namespace gcslab
