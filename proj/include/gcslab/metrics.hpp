#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcslab/constellation.hpp"

namespace gcslab {

/// Auxiliary-channel state of the mismatched Gaussian receiver.
/// sigma_g_sq is floored at 1e-12 so the noiseless case stays finite.
struct GaussianReceiverState {
  double sigma_g_sq;
};

inline constexpr double kSigmaFloor = 1e-12;

/// sigma_G^2 = mean |y - x|^2 over aligned pairs. Throws on empty or
/// mismatched inputs.
GaussianReceiverState estimate_noise_var(std::span<const cdouble> x_seq,
                                         std::span<const cdouble> y_seq);

/// Monte-Carlo MI lower bound in bits/symbol: m - H_q(X|Y) with the
/// Gaussian auxiliary channel posterior evaluated in the log domain.
/// x_seq must be drawn from c; y_seq phase-aligned to x_seq.
double mi_mismatched(std::span<const cdouble> x_seq, std::span<const cdouble> y_seq,
                     const Constellation& c, const GaussianReceiverState& rx);

/// Monte-Carlo GMI lower bound in bits/symbol: m - sum_i H_q(B_i|Y).
/// bit_seq holds m bits per symbol (values 0/1, MSB first per labeling).
double gmi_mismatched(std::span<const std::uint8_t> bit_seq, std::span<const cdouble> y_seq,
                      const Constellation& c, const BitLabeling& labeling,
                      const GaussianReceiverState& rx);

/// Variants that take transmitted constellation indices directly.
double mi_mismatched_indexed(std::span<const int> tx_indices, std::span<const cdouble> y_seq,
                             const Constellation& c, const GaussianReceiverState& rx);
double gmi_mismatched_indexed(std::span<const int> tx_indices, std::span<const cdouble> y_seq,
                              const Constellation& c, const BitLabeling& labeling,
                              const GaussianReceiverState& rx);

/// Decoder-loss to AIR conversions. Losses are natural-log values as
/// produced by the loss functions; the result is bits/symbol.
double air_from_ce(double ce_loss_nats, int bits_per_symbol);
double air_from_ll(double ll_loss_nats, int bits_per_symbol);

/// Log-domain symbol posteriors log q(x_i|y) for one received sample
/// (natural log). Exposed for the loss-vs-metric equivalence path.
std::vector<double> log_symbol_posteriors(cdouble y, const Constellation& c,
                                          const GaussianReceiverState& rx);

/// One validation/test measurement.
struct MetricRecord {
  long epoch = 0;
  long long channel_propagations = 0;
  std::optional<double> mi_bits;
  std::optional<double> gmi_bits;
  std::optional<double> launch_power_dbm;
  std::optional<double> quant_bits;
  std::string stage;  // not serialized in the CSV stream
};

/// CSV stream with header `epoch,propagations,launch_power_dbm,quant_bits,mi_bits,gmi_bits`.
/// Absent optionals serialize as empty fields.
std::string metric_records_to_csv(std::span<const MetricRecord> records);
std::vector<MetricRecord> metric_records_from_csv(const std::string& csv_text);
void save_metric_records(std::span<const MetricRecord> records, const std::string& path);
std::vector<MetricRecord> load_metric_records(const std::string& path);

}  // namespace gcslab
