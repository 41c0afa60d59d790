#include "gcslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gcslab {
namespace {

constexpr double kLog2E = 1.4426950408889634074;  // 1/ln(2)

double logsumexp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

GaussianReceiverState estimate_noise_var(std::span<const cdouble> x_seq,
                                         std::span<const cdouble> y_seq) {
  if (x_seq.empty()) throw std::invalid_argument("estimate_noise_var: empty input");
  if (x_seq.size() != y_seq.size())
    throw std::invalid_argument("estimate_noise_var: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < x_seq.size(); ++k) s += std::norm(y_seq[k] - x_seq[k]);
  s /= static_cast<double>(x_seq.size());
  return GaussianReceiverState{std::max(s, kSigmaFloor)};
}

std::vector<double> log_symbol_posteriors(cdouble y, const Constellation& c,
                                          const GaussianReceiverState& rx) {
  if (rx.sigma_g_sq <= 0.0) throw std::invalid_argument("receiver noise variance must be positive");
  const double inv_var = 1.0 / rx.sigma_g_sq;
  std::vector<double> logq(c.points.size());
  for (std::size_t i = 0; i < c.points.size(); ++i) logq[i] = -std::norm(y - c.points[i]) * inv_var;
  const double lse = logsumexp(logq);
  for (auto& v : logq) v -= lse;
  return logq;
}

namespace {

std::vector<int> match_indices(std::span<const cdouble> x_seq, const Constellation& c) {
  const int M = c.order();
  std::vector<int> idx(x_seq.size());
  for (std::size_t k = 0; k < x_seq.size(); ++k) {
    int best_i = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < M; ++i) {
      const double d = std::norm(x_seq[k] - c.points[i]);
      if (d < best) {
        best = d;
        best_i = i;
      }
    }
    idx[k] = best_i;
  }
  return idx;
}

}  // namespace

double mi_mismatched_indexed(std::span<const int> tx_indices, std::span<const cdouble> y_seq,
                             const Constellation& c, const GaussianReceiverState& rx) {
  if (tx_indices.empty() || tx_indices.size() != y_seq.size())
    throw std::invalid_argument("mi_mismatched: bad sequence lengths");
  if (rx.sigma_g_sq <= 0.0) throw std::invalid_argument("mi_mismatched: sigma_g_sq must be positive");

  const int M = c.order();
  const double inv_var = 1.0 / rx.sigma_g_sq;
  std::vector<double> logq(M);

  double cond_entropy_nats = 0.0;
  for (std::size_t k = 0; k < y_seq.size(); ++k) {
    for (int i = 0; i < M; ++i) logq[i] = -std::norm(y_seq[k] - c.points[i]) * inv_var;
    const double lse = logsumexp(logq);
    cond_entropy_nats += lse - logq[tx_indices[k]];
  }
  cond_entropy_nats /= static_cast<double>(y_seq.size());
  return static_cast<double>(c.bits_per_symbol()) - cond_entropy_nats * kLog2E;
}

double mi_mismatched(std::span<const cdouble> x_seq, std::span<const cdouble> y_seq,
                     const Constellation& c, const GaussianReceiverState& rx) {
  if (x_seq.empty() || x_seq.size() != y_seq.size())
    throw std::invalid_argument("mi_mismatched: bad sequence lengths");
  // x_seq entries are exact copies of constellation points; recover the
  // index by nearest point (ties resolve to equal posteriors anyway).
  const std::vector<int> idx = match_indices(x_seq, c);
  return mi_mismatched_indexed(idx, y_seq, c, rx);
}

double gmi_mismatched_indexed(std::span<const int> tx_indices, std::span<const cdouble> y_seq,
                              const Constellation& c, const BitLabeling& labeling,
                              const GaussianReceiverState& rx) {
  const int m = c.bits_per_symbol();
  std::vector<std::uint8_t> bits(tx_indices.size() * static_cast<std::size_t>(m));
  for (std::size_t k = 0; k < tx_indices.size(); ++k)
    for (int pos = 0; pos < m; ++pos)
      bits[k * m + pos] = static_cast<std::uint8_t>(labeling.bit(tx_indices[k], pos));
  return gmi_mismatched(bits, y_seq, c, labeling, rx);
}

double gmi_mismatched(std::span<const std::uint8_t> bit_seq, std::span<const cdouble> y_seq,
                      const Constellation& c, const BitLabeling& labeling,
                      const GaussianReceiverState& rx) {
  const int M = c.order();
  const int m = c.bits_per_symbol();
  if (labeling.order() != M) throw std::invalid_argument("gmi_mismatched: labeling size mismatch");
  if (!labeling.is_bijection()) throw std::invalid_argument("gmi_mismatched: labeling is not a bijection");
  if (y_seq.empty() || bit_seq.size() != y_seq.size() * static_cast<std::size_t>(m))
    throw std::invalid_argument("gmi_mismatched: bit sequence length must be m * n_symbols");
  if (rx.sigma_g_sq <= 0.0) throw std::invalid_argument("gmi_mismatched: sigma_g_sq must be positive");

  // Coset index lists: per bit position, the symbols whose label has 0/1 there.
  std::vector<std::vector<int>> coset0(m), coset1(m);
  for (int pos = 0; pos < m; ++pos) {
    for (int i = 0; i < M; ++i) {
      (labeling.bit(i, pos) ? coset1[pos] : coset0[pos]).push_back(i);
    }
  }

  const double inv_var = 1.0 / rx.sigma_g_sq;
  std::vector<double> logq(M), scratch(M);
  double bit_entropy_nats = 0.0;

  for (std::size_t k = 0; k < y_seq.size(); ++k) {
    for (int i = 0; i < M; ++i) logq[i] = -std::norm(y_seq[k] - c.points[i]) * inv_var;
    const double lse_all = logsumexp(logq);
    for (int pos = 0; pos < m; ++pos) {
      const int b = bit_seq[k * m + pos];
      if (b != 0 && b != 1) throw std::invalid_argument("gmi_mismatched: bits must be 0/1");
      const auto& coset = b ? coset1[pos] : coset0[pos];
      scratch.resize(coset.size());
      for (std::size_t j = 0; j < coset.size(); ++j) scratch[j] = logq[coset[j]];
      bit_entropy_nats += lse_all - logsumexp(scratch);
    }
  }
  bit_entropy_nats /= static_cast<double>(y_seq.size());
  return static_cast<double>(m) - bit_entropy_nats * kLog2E;
}

double air_from_ce(double ce_loss_nats, int bits_per_symbol) {
  return static_cast<double>(bits_per_symbol) - ce_loss_nats * kLog2E;
}

double air_from_ll(double ll_loss_nats, int bits_per_symbol) {
  return static_cast<double>(bits_per_symbol) -
         static_cast<double>(bits_per_symbol) * ll_loss_nats * kLog2E;
}

namespace {

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", *v);
  return buf;
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

std::string metric_records_to_csv(std::span<const MetricRecord> records) {
  std::ostringstream out;
  out << "epoch,propagations,launch_power_dbm,quant_bits,mi_bits,gmi_bits\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << r.channel_propagations << ',' << format_optional(r.launch_power_dbm)
        << ',' << format_optional(r.quant_bits) << ',' << format_optional(r.mi_bits) << ','
        << format_optional(r.gmi_bits) << '\n';
  }
  return out.str();
}

std::vector<MetricRecord> metric_records_from_csv(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,propagations", 0) != 0)
    throw std::runtime_error("metric records: bad CSV header");
  std::vector<MetricRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[6];
    for (int i = 0; i < 6; ++i) std::getline(row, f[i], ',');
    MetricRecord r;
    r.epoch = std::stol(f[0]);
    r.channel_propagations = std::stoll(f[1]);
    r.launch_power_dbm = parse_optional(f[2]);
    r.quant_bits = parse_optional(f[3]);
    r.mi_bits = parse_optional(f[4]);
    r.gmi_bits = parse_optional(f[5]);
    records.push_back(r);
  }
  return records;
}

void save_metric_records(std::span<const MetricRecord> records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_metric_records: cannot open " + path);
  out << metric_records_to_csv(records);
  if (!out) throw std::runtime_error("save_metric_records: write failed for " + path);
}

std::vector<MetricRecord> load_metric_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_metric_records: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return metric_records_from_csv(buf.str());
}

}  // namespace gcslab
