#include "gcslab/experiments.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gcslab/autoencoder.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gcslab {
namespace {

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw std::runtime_error("config error at " + where + ": " + what);
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) config_error(where, "missing required field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(where + "/" + key, e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

int worker_count() {
  const char* env = std::getenv("GCSLAB_WORKERS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("sha256_file: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256_file: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

EvalResult evaluate_constellation(const Constellation& c, const BitLabeling* labeling,
                                  Channel& channel, const TestProtocol& protocol) {
  if (protocol.simulations < 1 || protocol.symbols < 1)
    throw std::invalid_argument("test protocol: simulations and symbols must be >= 1");
  double mi_acc = 0.0, gmi_acc = 0.0;
  for (int sim = 0; sim < protocol.simulations; ++sim) {
    Rng rng = Rng::substream(protocol.seed, static_cast<std::uint64_t>(sim));
    std::vector<int> idx(protocol.symbols);
    for (auto& v : idx) v = static_cast<int>(rng.integer(static_cast<std::uint64_t>(c.order())));
    std::vector<cdouble> x(protocol.symbols);
    for (long k = 0; k < protocol.symbols; ++k) x[k] = c.points[idx[k]];
    const auto y = channel.propagate(x, c, rng, PropagationPurpose::Validation, false);
    const GaussianReceiverState rx = estimate_noise_var(x, y);
    mi_acc += mi_mismatched_indexed(idx, y, c, rx);
    if (labeling) gmi_acc += gmi_mismatched_indexed(idx, y, c, *labeling, rx);
  }
  EvalResult out;
  out.mi_bits = mi_acc / protocol.simulations;
  if (labeling) out.gmi_bits = gmi_acc / protocol.simulations;
  return out;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  cfg.raw = j;
  cfg.experiment = require<std::string>(j, "experiment", "config");
  cfg.mode = ae_mode_from_string(require<std::string>(j, "mode", "config"));
  cfg.constellation_size = require<int>(j, "constellation_size", "config");
  if (cfg.constellation_size < 4 || (cfg.constellation_size & (cfg.constellation_size - 1)) != 0)
    config_error("config/constellation_size", "must be a power of two >= 4");
  cfg.seed = require<std::uint64_t>(j, "seed", "config");
  cfg.output_dir = j.value("output_dir", "results/" + cfg.experiment);
  if (!j.contains("channel")) config_error("config", "missing 'channel' block");
  cfg.channel = j.at("channel");
  cfg.trainer = j.value("trainer", json{{"algorithm", "none"}});
  if (!j.contains("test")) config_error("config", "missing 'test' block (simulations/symbols/seed)");
  const json& t = j.at("test");
  cfg.test.simulations = t.value("simulations", 10);
  cfg.test.symbols = t.value("symbols", 100000L);
  cfg.test.seed = require<std::uint64_t>(t, "seed", "config/test");
  if (j.contains("lut_input")) cfg.lut_input = j.at("lut_input").get<std::string>();
  cfg.sweep = j.value("sweep", json::object());
  return cfg;
}

NlinParams nlin_params_from_json(const json& j) {
  NlinParams np;
  np.sigma_ase_sq = j.value("sigma_ase_sq", np.sigma_ase_sq);
  np.chi0 = j.value("chi0", np.chi0);
  np.chi1 = j.value("chi1", np.chi1);
  np.chi2 = j.value("chi2", np.chi2);
  np.validate();
  return np;
}

FiberLinkParams fiber_params_from_json(const json& j) {
  FiberLinkParams lp;
  lp.symbol_rate_hz = j.value("symbol_rate_ghz", lp.symbol_rate_hz / 1e9) * 1e9;
  lp.carrier_freq_hz = j.value("carrier_freq_thz", lp.carrier_freq_hz / 1e12) * 1e12;
  lp.wdm_channels = j.value("wdm_channels", lp.wdm_channels);
  lp.channel_spacing_hz = j.value("channel_spacing_ghz", lp.channel_spacing_hz / 1e9) * 1e9;
  lp.n_pol = j.value("n_pol", lp.n_pol);
  lp.n_spans = j.value("n_spans", lp.n_spans);
  lp.span_length_km = j.value("span_length_km", lp.span_length_km);
  lp.gamma_per_w_km = j.value("gamma_per_w_km", lp.gamma_per_w_km);
  lp.dispersion_ps_nm_km = j.value("dispersion_ps_nm_km", lp.dispersion_ps_nm_km);
  lp.alpha_db_km = j.value("alpha_db_km", lp.alpha_db_km);
  lp.noise_figure_db = j.value("noise_figure_db", lp.noise_figure_db);
  lp.ase_enabled = j.value("ase_enabled", lp.ase_enabled);
  lp.sps = j.value("sps", lp.sps);
  lp.step_size_km = j.value("step_size_km", lp.step_size_km);
  lp.rrc_rolloff = j.value("rrc_rolloff", lp.rrc_rolloff);
  lp.rrc_span_symbols = j.value("rrc_span_symbols", lp.rrc_span_symbols);
  lp.validate();
  return lp;
}

std::unique_ptr<Channel> make_channel(const json& j) {
  const std::string type = require<std::string>(j, "type", "channel");
  require<std::uint64_t>(j, "seed", "channel");  // every stochastic block carries a seed
  if (type == "awgn") {
    return std::make_unique<AwgnChannel>(require<double>(j, "snr_db", "channel"));
  }
  if (type == "nlin") {
    const double power = require<double>(j, "launch_power_dbm", "channel");
    std::optional<QuantizerParams> qp;
    if (j.contains("quantizer")) {
      const json& q = j.at("quantizer");
      QuantizerParams p;
      p.enob = require<int>(q, "enob", "channel/quantizer");
      const std::string mode = q.value("mode", "additive-uniform-noise");
      if (mode == "additive-uniform-noise")
        p.mode = QuantizerMode::AdditiveUniformNoise;
      else if (mode == "hard-quantizer")
        p.mode = QuantizerMode::HardQuantizer;
      else
        config_error("channel/quantizer/mode", "unknown mode '" + mode + "'");
      p.validate();
      qp = p;
    }
    auto ch = std::make_unique<NlinChannel>(nlin_params_from_json(j), power, qp);
    if (!j.value("differentiable", true))
      return std::make_unique<NonDifferentiableChannel>(std::move(ch));
    return ch;
  }
  if (type == "ssfm") {
    const double power = require<double>(j, "launch_power_dbm", "channel");
    return std::make_unique<SsfmChannel>(fiber_params_from_json(j), power,
                                         j.value("differentiable", true),
                                         j.value("checkpoint_every", 10));
  }
  config_error("channel/type", "unknown channel type '" + type + "'");
}

namespace {

TrainSchedule schedule_from_json(const json& trainer, const json& stage, AeMode mode,
                                 std::uint64_t run_seed, std::uint64_t channel_seed) {
  auto pick_long = [&](const char* key, long fallback) {
    if (stage.contains(key)) return stage.at(key).get<long>();
    return trainer.value(key, fallback);
  };
  auto pick_int = [&](const char* key, int fallback) {
    if (stage.contains(key)) return stage.at(key).get<int>();
    return trainer.value(key, fallback);
  };
  auto pick_double = [&](const char* key, double fallback) {
    if (stage.contains(key)) return stage.at(key).get<double>();
    return trainer.value(key, fallback);
  };
  auto pick_bool = [&](const char* key, bool fallback) {
    if (stage.contains(key)) return stage.at(key).get<bool>();
    return trainer.value(key, fallback);
  };
  TrainSchedule s;
  s.mode = mode;
  s.epochs = pick_int("epochs", 100);
  s.validation_every = pick_int("validation_every", 5);
  s.sample_set_size = pick_long("sample_set_size", 0L);
  s.batch_size = pick_long("batch_size", 0L);
  s.validation_symbols = pick_long("validation_symbols", 50000L);
  s.adaptive_batch = pick_bool("adaptive_batch", false);
  s.plateau_delta = pick_double("plateau_delta", 1e-3);
  s.plateau_patience = pick_int("plateau_patience", 10);
  s.learning_rate = pick_double("learning_rate", 1e-3);
  const std::uint64_t trainer_seed = require<std::uint64_t>(trainer, "seed", "trainer");
  s.seed = mix64(mix64(run_seed, trainer_seed), channel_seed);
  return s;
}

RlPolicyState rl_from_json(const json& trainer) {
  RlPolicyState rl;
  if (trainer.contains("rl")) {
    const json& j = trainer.at("rl");
    rl.policy_var = j.value("policy_var", rl.policy_var);
    rl.encoder_iters = j.value("encoder_iters", rl.encoder_iters);
    rl.decoder_iters = j.value("decoder_iters", rl.decoder_iters);
    rl.mean_baseline = j.value("mean_baseline", rl.mean_baseline);
  }
  return rl;
}

CkfOptions ckf_from_json(const json& trainer) {
  CkfOptions ckf;
  if (trainer.contains("ckf")) {
    const json& j = trainer.at("ckf");
    ckf.process_noise_q = j.value("q", ckf.process_noise_q);
    ckf.measurement_noise_r = j.value("r", ckf.measurement_noise_r);
    ckf.initial_covariance_p0 = j.value("p0", ckf.initial_covariance_p0);
  }
  return ckf;
}

Autoencoder make_autoencoder(const RunConfig& cfg) {
  const std::uint64_t init_seed = mix64(cfg.seed, 0xae5eed);
  if (cfg.mode == AeMode::Mi) return make_mi_autoencoder(cfg.constellation_size, init_seed);
  const int width = cfg.trainer.value("gmi_hidden_width", 256);
  return make_gmi_autoencoder(cfg.constellation_size, init_seed, width);
}

struct Manifest {
  std::vector<std::string> files;

  void add(const std::string& path) { files.push_back(path); }

  void write(const std::string& outdir) const {
    json j;
    j["files"] = json::object();
    for (const auto& f : files) j["files"][fs::path(f).filename().string()] = "sha256:" + sha256_file(f);
    write_text_file(outdir + "/manifest.json", j.dump(2) + "\n");
  }
};

void write_records_csv(const std::vector<MetricRecord>& records, const std::string& path,
                       Manifest& manifest) {
  save_metric_records(records, path);
  manifest.add(path);
}

struct TrainOutcome {
  TrainResult result;
  bool trained = false;
  std::vector<std::unique_ptr<Channel>> channels;  // stage channels; last one also serves the test
};

TrainOutcome run_training(const RunConfig& cfg) {
  TrainOutcome out;
  const std::string algorithm = cfg.trainer.value("algorithm", "none");
  if (algorithm == "none" || cfg.lut_input) {
    out.channels.push_back(make_channel(cfg.channel));
    return out;
  }

  const TrainerKind kind = trainer_kind_from_string(algorithm);
  Autoencoder ae = make_autoencoder(cfg);

  std::vector<StagePlan> stages;
  if (cfg.trainer.contains("stages")) {
    for (const auto& stage_json : cfg.trainer.at("stages")) {
      StagePlan plan;
      plan.name = require<std::string>(stage_json, "name", "trainer/stages");
      const json& ch_json = stage_json.contains("channel") ? stage_json.at("channel") : cfg.channel;
      out.channels.push_back(make_channel(ch_json));
      plan.channel = out.channels.back().get();
      plan.schedule = schedule_from_json(cfg.trainer, stage_json, cfg.mode, cfg.seed,
                                         require<std::uint64_t>(ch_json, "seed", "channel"));
      if (!stage_json.contains("epochs")) config_error("trainer/stages", "stage needs 'epochs'");
      plan.schedule.stage_name = plan.name;
      stages.push_back(plan);
    }
  } else {
    StagePlan plan;
    plan.name = "train";
    out.channels.push_back(make_channel(cfg.channel));
    plan.channel = out.channels.back().get();
    plan.schedule = schedule_from_json(cfg.trainer, json::object(), cfg.mode, cfg.seed,
                                       require<std::uint64_t>(cfg.channel, "seed", "channel"));
    plan.schedule.stage_name = plan.name;
    stages.push_back(plan);
  }

  out.result = two_stage(std::move(ae), kind, stages, rl_from_json(cfg.trainer),
                         ckf_from_json(cfg.trainer));
  out.trained = true;
  return out;
}

}  // namespace

std::string run_experiment(const RunConfig& cfg, const std::string& output_override) {
  const std::string outdir = output_override.empty() ? cfg.output_dir : output_override;
  fs::create_directories(outdir);
  Manifest manifest;

  write_text_file(outdir + "/config.json", cfg.raw.dump(2) + "\n");
  manifest.add(outdir + "/config.json");

  TrainOutcome training = run_training(cfg);

  Constellation c;
  BitLabeling labeling;
  bool gmi_labeling_valid = false;
  if (cfg.lut_input) {
    auto lut = load_lut(*cfg.lut_input, /*renormalize=*/true);
    c = std::move(lut.constellation);
    labeling = std::move(lut.labeling);
    gmi_labeling_valid = true;  // explicitly supplied labeling
  } else if (training.trained) {
    c = training.result.ae.constellation();
    labeling = identity_labeling(c.order());
    // GMI of MI-optimized constellations is not reported: no optimized
    // labeling exists for them.
    gmi_labeling_valid = cfg.mode == AeMode::Gmi;
  } else {
    c = square_qam(cfg.constellation_size);
    labeling = gray_labeling(cfg.constellation_size);
    gmi_labeling_valid = true;
  }

  if (training.trained) {
    write_records_csv(training.result.records, outdir + "/metrics.csv", manifest);
    std::vector<std::string> stage_names;
    for (const auto& r : training.result.records)
      if (std::find(stage_names.begin(), stage_names.end(), r.stage) == stage_names.end())
        stage_names.push_back(r.stage);
    if (stage_names.size() > 1) {
      // the stage tag lives in the file name; each stream keeps the pinned schema
      for (const auto& name : stage_names) {
        std::vector<MetricRecord> subset;
        for (const auto& r : training.result.records)
          if (r.stage == name) subset.push_back(r);
        write_records_csv(subset, outdir + "/records_" + name + ".csv", manifest);
      }
    }
    save_autoencoder(training.result.ae, outdir + "/model.ae");
    manifest.add(outdir + "/model.ae");
    manifest.add(outdir + "/model.ae.enc");
    manifest.add(outdir + "/model.ae.dec");
  }

  save_lut(c, labeling, outdir + "/lut.csv");
  manifest.add(outdir + "/lut.csv");

  Channel& test_channel = *training.channels.back();
  const EvalResult ev =
      evaluate_constellation(c, gmi_labeling_valid ? &labeling : nullptr, test_channel, cfg.test);

  MetricRecord test_record;
  test_record.epoch = training.trained ? training.result.epochs_run : 0;
  test_record.channel_propagations = test_channel.counter().train.load();
  test_record.mi_bits = ev.mi_bits;
  test_record.gmi_bits = ev.gmi_bits;
  test_record.launch_power_dbm = test_channel.launch_power_dbm();
  test_record.quant_bits = test_channel.quant_bits();
  write_records_csv({test_record}, outdir + "/test_metrics.csv", manifest);

  json summary;
  summary["experiment"] = cfg.experiment;
  summary["mode"] = to_string(cfg.mode);
  summary["constellation_size"] = cfg.constellation_size;
  summary["algorithm"] = cfg.trainer.value("algorithm", "none");
  if (ev.mi_bits) summary["test_mi_bits"] = *ev.mi_bits;
  if (ev.gmi_bits) summary["test_gmi_bits"] = *ev.gmi_bits;
  if (training.trained) {
    summary["epochs_run"] = training.result.epochs_run;
    summary["final_loss_nats"] = training.result.final_loss;
    summary["batch_doubling_epochs"] = training.result.batch_doubling_epochs;
    summary["rl_encoder_phase_propagations"] = training.result.encoder_phase_propagations;
    summary["rl_decoder_phase_propagations"] = training.result.decoder_phase_propagations;
    summary["ckf_recondition_events"] = training.result.ckf_recondition_events;
    long long train_props = 0, val_props = 0;
    for (const auto& ch : training.channels) {
      train_props += ch->counter().train.load();
      val_props += ch->counter().validation.load();
    }
    summary["channel_propagations"] = {{"train", train_props}, {"validation", val_props}};
  }
  write_text_file(outdir + "/summary.json", summary.dump(2) + "\n");
  manifest.add(outdir + "/summary.json");

  manifest.write(outdir);
  return outdir;
}

namespace {

/// Parallel map over sweep points; results land in index order so the
/// aggregate is independent of the worker count.
template <typename Fn>
void parallel_for_indices(std::size_t count, Fn&& fn) {
  const int workers = std::min<int>(worker_count(), static_cast<int>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::string sweep_launch_power(const RunConfig& cfg, const std::vector<double>& powers_dbm,
                               const std::string& output_override) {
  if (powers_dbm.empty()) throw std::invalid_argument("sweep_launch_power: no powers given");
  const std::string type = cfg.channel.value("type", "");
  if (type != "nlin" && type != "ssfm")
    throw std::invalid_argument("sweep_launch_power: needs an nlin or ssfm channel");

  const std::string outdir =
      (output_override.empty() ? cfg.output_dir : output_override) + "/sweep_power";
  fs::create_directories(outdir);
  Manifest manifest;
  write_text_file(outdir + "/config.json", cfg.raw.dump(2) + "\n");
  manifest.add(outdir + "/config.json");

  Constellation c;
  BitLabeling labeling;
  if (cfg.lut_input) {
    auto lut = load_lut(*cfg.lut_input, true);
    c = std::move(lut.constellation);
    labeling = std::move(lut.labeling);
  } else {
    c = square_qam(cfg.constellation_size);
    labeling = gray_labeling(cfg.constellation_size);
  }

  std::vector<MetricRecord> records(powers_dbm.size());
  parallel_for_indices(powers_dbm.size(), [&](std::size_t i) {
    json ch_json = cfg.channel;
    ch_json["launch_power_dbm"] = powers_dbm[i];
    auto channel = make_channel(ch_json);
    TestProtocol protocol = cfg.test;
    protocol.seed = mix64(cfg.test.seed, static_cast<std::uint64_t>(i));
    const EvalResult ev = evaluate_constellation(c, &labeling, *channel, protocol);
    MetricRecord r;
    r.launch_power_dbm = powers_dbm[i];
    r.quant_bits = channel->quant_bits();
    r.mi_bits = ev.mi_bits;
    r.gmi_bits = ev.gmi_bits;
    records[i] = r;
  });

  write_records_csv(records, outdir + "/sweep_power.csv", manifest);
  manifest.write(outdir);
  return outdir;
}

std::string sweep_quantization(const RunConfig& cfg, const std::vector<int>& bits,
                               const std::string& output_override) {
  if (bits.empty()) throw std::invalid_argument("sweep_quantization: no bit depths given");
  if (cfg.channel.value("type", "") != "nlin" || !cfg.channel.contains("quantizer"))
    throw std::invalid_argument("sweep_quantization: needs an nlin channel with a quantizer block");

  const std::string outdir =
      (output_override.empty() ? cfg.output_dir : output_override) + "/sweep_quant";
  fs::create_directories(outdir);
  Manifest manifest;
  write_text_file(outdir + "/config.json", cfg.raw.dump(2) + "\n");
  manifest.add(outdir + "/config.json");

  const Constellation qam64 = square_qam(64);
  const BitLabeling qam64_lab = gray_labeling(64);
  const Constellation qam256 = square_qam(256);
  const BitLabeling qam256_lab = gray_labeling(256);

  std::vector<MetricRecord> gcs_rows(bits.size()), qam64_rows(bits.size()), qam256_rows(bits.size());
  std::vector<std::string> lut_paths(bits.size());

  parallel_for_indices(bits.size(), [&](std::size_t i) {
    const int enob = bits[i];
    json sub = cfg.raw;
    sub["channel"]["quantizer"]["enob"] = enob;
    sub["seed"] = mix64(cfg.seed, static_cast<std::uint64_t>(enob));
    sub["output_dir"] = outdir + "/enob" + std::to_string(enob);
    const RunConfig sub_cfg = run_config_from_json(sub);
    run_experiment(sub_cfg);

    const std::string lut_path = outdir + "/enob" + std::to_string(enob) + "/lut.csv";
    auto lut = load_lut(lut_path, true);
    lut_paths[i] = lut_path;

    auto channel = make_channel(sub_cfg.channel);
    TestProtocol protocol = cfg.test;
    protocol.seed = mix64(cfg.test.seed, static_cast<std::uint64_t>(enob));
    const bool trained = sub_cfg.trainer.value("algorithm", "none") != "none" && !sub_cfg.lut_input;
    const bool gmi_valid = !trained || cfg.mode == AeMode::Gmi;
    const EvalResult ev = evaluate_constellation(lut.constellation,
                                                 gmi_valid ? &lut.labeling : nullptr, *channel,
                                                 protocol);
    MetricRecord r;
    r.quant_bits = static_cast<double>(enob);
    r.launch_power_dbm = channel->launch_power_dbm();
    r.mi_bits = ev.mi_bits;
    r.gmi_bits = ev.gmi_bits;
    gcs_rows[i] = r;

    // QAM baselines consume the same noise realizations (same protocol seed).
    auto eval_qam = [&](const Constellation& qc, const BitLabeling& ql) {
      auto qch = make_channel(sub_cfg.channel);
      return evaluate_constellation(qc, &ql, *qch, protocol);
    };
    const EvalResult e64 = eval_qam(qam64, qam64_lab);
    const EvalResult e256 = eval_qam(qam256, qam256_lab);
    MetricRecord r64 = r, r256 = r;
    r64.mi_bits = e64.mi_bits;
    r64.gmi_bits = e64.gmi_bits;
    r256.mi_bits = e256.mi_bits;
    r256.gmi_bits = e256.gmi_bits;
    qam64_rows[i] = r64;
    qam256_rows[i] = r256;
  });

  for (std::size_t i = 0; i < bits.size(); ++i) {
    const std::string dst = outdir + "/lut_enob" + std::to_string(bits[i]) + ".csv";
    fs::copy_file(lut_paths[i], dst, fs::copy_options::overwrite_existing);
    manifest.add(dst);
  }
  write_records_csv(gcs_rows, outdir + "/sweep_quant_gcs.csv", manifest);
  write_records_csv(qam64_rows, outdir + "/sweep_quant_qam64.csv", manifest);
  write_records_csv(qam256_rows, outdir + "/sweep_quant_qam256.csv", manifest);
  manifest.write(outdir);
  return outdir;
}

ConvergenceRow convergence_from_records(const std::string& name,
                                        std::span<const MetricRecord> records) {
  if (records.empty()) throw std::invalid_argument("convergence_from_records: empty record stream");
  ConvergenceRow row;
  row.name = name;
  double final_mi = 0.0;
  bool any = false;
  for (const auto& r : records)
    if (r.mi_bits) {
      final_mi = *r.mi_bits;
      any = true;
    }
  if (!any) throw std::invalid_argument("convergence_from_records: records carry no MI values");
  row.final_mi = final_mi;
  const double threshold = 0.995 * final_mi;  // convergence at 99.5% of the final MI
  for (const auto& r : records) {
    if (r.mi_bits && *r.mi_bits >= threshold) {
      row.epochs_to_converge = r.epoch;
      row.propagations_to_converge = r.channel_propagations;
      return row;
    }
  }
  row.epochs_to_converge = records.back().epoch;
  row.propagations_to_converge = records.back().channel_propagations;
  return row;
}

std::string format_convergence_table(std::span<const ConvergenceRow> rows) {
  std::ostringstream out;
  out << "trainer      final MI [bits]   epochs to 99.5%   propagations to 99.5%\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %15.4f %17ld %23lld\n", r.name.c_str(), r.final_mi,
                  r.epochs_to_converge, r.propagations_to_converge);
    out << buf;
  }
  return out.str();
}

DistinctPointsReport distinct_points(const Constellation& c, const BitLabeling& labeling,
                                     double tol) {
  const int n = c.order();
  if (labeling.order() != n) throw std::invalid_argument("distinct_points: labeling size mismatch");
  if (tol < 0.0) throw std::invalid_argument("distinct_points: tol must be >= 0");

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(c.points[i] - c.points[j]) <= tol) parent[find(i)] = find(j);

  std::vector<std::vector<int>> groups(n);
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);

  DistinctPointsReport report;
  const int m = labeling.bits();
  for (auto& g : groups) {
    if (g.empty()) continue;
    ++report.distinct_count;
    if (g.size() < 2) continue;
    PointCluster cluster;
    cluster.members = g;
    std::uint32_t all_and = labeling.label_of[g[0]];
    std::uint32_t all_or = labeling.label_of[g[0]];
    for (int idx : g) {
      all_and &= labeling.label_of[idx];
      all_or |= labeling.label_of[idx];
    }
    cluster.shared_mask = ~(all_and ^ all_or) & ((1u << m) - 1u);
    cluster.shared_value = all_and & cluster.shared_mask;
    cluster.shared_bit_count = std::popcount(cluster.shared_mask);
    report.clusters.push_back(std::move(cluster));
  }
  std::sort(report.clusters.begin(), report.clusters.end(),
            [](const PointCluster& a, const PointCluster& b) {
              return a.members.size() > b.members.size();
            });
  return report;
}

}  // namespace gcslab
