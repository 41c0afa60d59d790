#pragma once

#include <cstdint>
#include <vector>

#include "gcslab/channel.hpp"
#include "gcslab/ssfm.hpp"

namespace gcslab {

/// Link used to fit the NLIN coefficient defaults: the Table-I span plan
/// reduced to a single WDM channel with a desk-scale step (1 km) and ASE
/// off, so the Monte-Carlo measurement isolates the nonlinear interference.
FiberLinkParams nlin_calibration_link();

/// sigma_ASE^2 in the absolute convention of NlinParams (the channel
/// divides by the per-channel launch power): n_pol * n_spans * S_ASE * R_s.
double analytic_ase_variance_abs(const FiberLinkParams& lp);

/// Post-DSP error variance (normalized units, X polarization) of one
/// split-step run with freshly drawn symbols from `c`.
double measure_chain_variance_ssfm(const Constellation& c, const FiberLinkParams& lp,
                                   double launch_power_w, long symbols, std::uint64_t seed);

/// Absolute NLIN variance (W): gamma-on minus gamma-off variance on the
/// same symbol realization, scaled by the launch power.
double measure_nlin_variance_ssfm(const Constellation& c, const FiberLinkParams& lp,
                                  double launch_power_w, long symbols, std::uint64_t seed);

struct NlinCalibration {
  NlinParams params;
  double rms_relative_error = 0.0;  // of the chi fit over the measurement grid
  std::vector<double> measured_variances;
  std::vector<double> fitted_variances;
};

/// Least-squares fit of (chi0, chi1, chi2) over a grid of constellations
/// with distinct (mu4, mu6) times the given launch powers. sigma_ase_sq
/// is filled analytically from the link.
NlinCalibration calibrate_nlin_coefficients(const std::vector<double>& powers_dbm,
                                            long symbols_per_run,
                                            const FiberLinkParams* link = nullptr);

}  // namespace gcslab
