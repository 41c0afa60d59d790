#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gcslab/autoencoder.hpp"
#include "gcslab/experiments.hpp"
#include "gcslab/nlin_calibration.hpp"

namespace fs = std::filesystem;
using namespace gcslab;

namespace {

/// Accepts "3..8", "3,4,5" or single values.
std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  const auto range_pos = text.find("..");
  if (range_pos != std::string::npos) {
    const int lo = std::stoi(text.substr(0, range_pos));
    const int hi = std::stoi(text.substr(range_pos + 2));
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stod(item));
  return out;
}

void print_lut_summary(const LabeledConstellation& lut, double cluster_tol) {
  const Moments mom = moments(lut.constellation);
  std::printf("points:        %d\n", lut.constellation.order());
  std::printf("mean power:    %.12g\n", lut.constellation.mean_power());
  std::printf("mu4:           %.6f\n", mom.mu4);
  std::printf("mu6:           %.6f\n", mom.mu6);
  const auto report = distinct_points(lut.constellation, lut.labeling, cluster_tol);
  std::printf("distinct points at tol %.3g: %d\n", cluster_tol, report.distinct_count);
  for (const auto& cl : report.clusters) {
    std::printf("  cluster of %zu points, %d shared label bits\n", cl.members.size(),
                cl.shared_bit_count);
  }
}

int cmd_report(const std::string& results_dir) {
  std::vector<ConvergenceRow> rows;
  const fs::path dir(results_dir);
  if (fs::exists(dir / "metrics.csv")) {
    const auto records = load_metric_records((dir / "metrics.csv").string());
    rows.push_back(convergence_from_records("run", records));
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("records_", 0) == 0 && entry.path().extension() == ".csv") {
      const auto records = load_metric_records(entry.path().string());
      rows.push_back(convergence_from_records(name.substr(8, name.size() - 12), records));
    }
  }
  if (rows.empty()) {
    std::cerr << "no metrics.csv / records_*.csv found in " << results_dir << "\n";
    return 1;
  }
  std::cout << format_convergence_table(rows);
  if (fs::exists(dir / "lut.csv")) {
    std::cout << "\nconstellation (lut.csv):\n";
    print_lut_summary(load_lut((dir / "lut.csv").string(), true), 0.02);
  }
  if (fs::exists(dir / "test_metrics.csv")) {
    const auto test = load_metric_records((dir / "test_metrics.csv").string());
    for (const auto& r : test) {
      std::cout << "\ntest:";
      if (r.mi_bits) std::printf(" MI = %.4f bits/symbol", *r.mi_bits);
      if (r.gmi_bits) std::printf(" GMI = %.4f bits/symbol", *r.gmi_bits);
      if (r.launch_power_dbm) std::printf(" @ %.1f dBm", *r.launch_power_dbm);
      if (r.quant_bits) std::printf(", ENOB %.0f", *r.quant_bits);
      std::cout << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gcs-lab: geometric constellation shaping experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, powers_text, bits_text = "3..8";

  auto* run = app.add_subcommand("run", "train (optional) and test one configuration");
  run->add_option("config", config_path, "run configuration JSON")->required();
  run->add_option("--out", out_dir, "override the output directory");

  auto* sweep_power = app.add_subcommand("sweep-power", "test one constellation across launch powers");
  sweep_power->add_option("config", config_path)->required();
  sweep_power->add_option("--powers", powers_text, "comma-separated launch powers in dBm")
      ->required();
  sweep_power->add_option("--out", out_dir);

  auto* sweep_quant = app.add_subcommand("sweep-quant", "train and test across converter bit depths");
  sweep_quant->add_option("config", config_path)->required();
  sweep_quant->add_option("--bits", bits_text, "ENOB list, e.g. 3..8 or 3,5,8");
  sweep_quant->add_option("--out", out_dir);

  std::string results_dir;
  auto* report = app.add_subcommand("report", "convergence and constellation report for a results dir");
  report->add_option("results", results_dir)->required();

  auto* lut = app.add_subcommand("lut", "constellation lookup-table utilities");
  lut->require_subcommand(1);
  int qam_order = 0;
  std::string model_path, lut_path;
  double cluster_tol = 0.02;
  bool renormalize = false;
  auto* lut_export = lut->add_subcommand("export", "write a LUT CSV from QAM or a trained model");
  lut_export->add_option("--qam", qam_order, "square QAM order (Gray labeled)");
  lut_export->add_option("--model", model_path, "trained autoencoder checkpoint (.ae)");
  lut_export->add_option("--out", lut_path, "output CSV path")->required();
  auto* lut_import = lut->add_subcommand("import", "validate and summarize a LUT CSV");
  lut_import->add_option("path", lut_path)->required();
  lut_import->add_flag("--renormalize", renormalize, "rescale a non-unit-power table");
  lut_import->add_option("--tol", cluster_tol, "clustering tolerance for the point summary");

  std::string calib_powers = "-2,0,2";
  std::string calib_out;
  auto* calibrate = app.add_subcommand(
      "calibrate-nlin", "fit the NLIN coefficients against split-step Monte-Carlo runs");
  calibrate->add_option("--powers", calib_powers, "launch powers in dBm for the fit");
  calibrate->add_option("--out", calib_out, "optional JSON output path");
  int calib_symbols = 4096;
  calibrate->add_option("--symbols", calib_symbols, "symbols per Monte-Carlo run");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const std::string dir = run_experiment(load_run_config(config_path), out_dir);
      std::cout << "results written to " << dir << "\n";
      return 0;
    }
    if (*sweep_power) {
      const std::string dir =
          sweep_launch_power(load_run_config(config_path), parse_double_list(powers_text), out_dir);
      std::cout << "results written to " << dir << "\n";
      return 0;
    }
    if (*sweep_quant) {
      const std::string dir =
          sweep_quantization(load_run_config(config_path), parse_int_list(bits_text), out_dir);
      std::cout << "results written to " << dir << "\n";
      return 0;
    }
    if (*report) return cmd_report(results_dir);
    if (*lut_export) {
      if ((qam_order > 0) == !model_path.empty()) {
        std::cerr << "lut export: pass exactly one of --qam or --model\n";
        return 1;
      }
      if (qam_order > 0) {
        save_lut(square_qam(qam_order), gray_labeling(qam_order), lut_path);
      } else {
        const Autoencoder ae = load_autoencoder(model_path);
        save_lut(ae.constellation(), identity_labeling(ae.order), lut_path);
      }
      std::cout << "wrote " << lut_path << "\n";
      return 0;
    }
    if (*lut_import) {
      print_lut_summary(load_lut(lut_path, renormalize), cluster_tol);
      return 0;
    }
    if (*calibrate) {
      const auto fit = calibrate_nlin_coefficients(parse_double_list(calib_powers), calib_symbols);
      std::printf("sigma_ase_sq: %.6e\nchi0: %.6e\nchi1: %.6e\nchi2: %.6e\nfit rms rel err: %.3f\n",
                  fit.params.sigma_ase_sq, fit.params.chi0, fit.params.chi1, fit.params.chi2,
                  fit.rms_relative_error);
      if (!calib_out.empty()) {
        nlohmann::json j{{"sigma_ase_sq", fit.params.sigma_ase_sq},
                         {"chi0", fit.params.chi0},
                         {"chi1", fit.params.chi1},
                         {"chi2", fit.params.chi2},
                         {"rms_relative_error", fit.rms_relative_error}};
        std::ofstream out(calib_out);
        out << j.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
