#pragma once

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gcslab/channel.hpp"
#include "gcslab/constellation.hpp"
#include "gcslab/metrics.hpp"
#include "gcslab/ssfm.hpp"
#include "gcslab/trainers.hpp"

namespace gcslab {

/// Paper test protocol: average of `simulations` independent runs with
/// `symbols` symbols each, per-simulation reseeding.
struct TestProtocol {
  int simulations = 10;
  long symbols = 100000;
  std::uint64_t seed = 99;
};

struct EvalResult {
  std::optional<double> mi_bits;
  std::optional<double> gmi_bits;
};

/// Decoder-free AIR evaluation of a fixed constellation. GMI is reported
/// only when a labeling is supplied. Identical (protocol, seed) pairs
/// consume identical noise realizations, so baselines are comparable.
EvalResult evaluate_constellation(const Constellation& c, const BitLabeling* labeling,
                                  Channel& channel, const TestProtocol& protocol);

/// Parsed run configuration (see configs/ for examples). The channel and
/// trainer blocks keep their JSON form; they are validated on use.
struct RunConfig {
  std::string experiment;
  AeMode mode = AeMode::Mi;
  int constellation_size = 64;
  std::uint64_t seed = 1;
  std::string output_dir;
  nlohmann::json channel;
  nlohmann::json trainer;
  TestProtocol test;
  std::optional<std::string> lut_input;
  nlohmann::json sweep;
  nlohmann::json raw;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);

FiberLinkParams fiber_params_from_json(const nlohmann::json& j);
NlinParams nlin_params_from_json(const nlohmann::json& j);
std::unique_ptr<Channel> make_channel(const nlohmann::json& j);

/// Executes train (when configured) + test, writes metrics.csv, the
/// trained LUT, a config echo and a manifest with sha256 content hashes.
/// Returns the results directory.
std::string run_experiment(const RunConfig& config, const std::string& output_override = "");

/// One test per launch power with the same constellation (the config's
/// LUT input, else the trained model in the results dir config points to,
/// else square QAM). Writes sweep_power.csv into the results directory.
std::string sweep_launch_power(const RunConfig& config, const std::vector<double>& powers_dbm,
                               const std::string& output_override = "");

/// One full training per ENOB plus 64QAM/256QAM baselines tested on
/// identical noise realizations; per-ENOB LUTs are exported.
std::string sweep_quantization(const RunConfig& config, const std::vector<int>& bits,
                               const std::string& output_override = "");

struct ConvergenceRow {
  std::string name;
  double final_mi = 0.0;
  long epochs_to_converge = 0;
  long long propagations_to_converge = 0;
};

/// 99.5%-of-final-MI convergence accounting over a validation record
/// stream. Throws on an empty stream.
ConvergenceRow convergence_from_records(const std::string& name,
                                        std::span<const MetricRecord> records);
std::string format_convergence_table(std::span<const ConvergenceRow> rows);

struct PointCluster {
  std::vector<int> members;
  std::uint32_t shared_mask = 0;   // 1 bits mark label positions (MSB first) shared by all members
  std::uint32_t shared_value = 0;  // the shared bit values under shared_mask
  int shared_bit_count = 0;
};

struct DistinctPointsReport {
  int distinct_count = 0;
  std::vector<PointCluster> clusters;  // only clusters with >= 2 members
};

/// Single-linkage clustering of constellation points at Euclidean `tol`,
/// with per-cluster analysis of the label bits shared by all members.
DistinctPointsReport distinct_points(const Constellation& c, const BitLabeling& labeling,
                                     double tol);

/// sha256 hex digest of a file's bytes (manifest entries).
std::string sha256_file(const std::string& path);

/// Worker count for parallel sweep points: GCSLAB_WORKERS, default 1.
int worker_count();

}  // namespace gcslab
