#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace gcslab {

using cdouble = std::complex<double>;

/// Set of M = 2^m complex symbols, normalized to unit mean power under
/// uniform symbol probabilities.
struct Constellation {
  std::vector<cdouble> points;

  int order() const { return static_cast<int>(points.size()); }
  int bits_per_symbol() const;
  double mean_power() const;
  bool is_normalized(double tol = 1e-12) const;
};

/// Bijective index -> m-bit word map.
struct BitLabeling {
  std::vector<std::uint32_t> label_of;

  int order() const { return static_cast<int>(label_of.size()); }
  int bits() const;
  bool is_bijection() const;
  /// Bit at position `pos` (0 = most significant of the m-bit word).
  int bit(int index, int pos) const;
};

/// Normalized 4th and 6th order moments, E|X|^4/(E|X|^2)^2 and
/// E|X|^6/(E|X|^2)^3.
struct Moments {
  double mu4 = 1.0;
  double mu6 = 1.0;
};

/// Gray-labeled square QAM with unit mean power. M must be an even power
/// of two in {4, 16, 64, 256, 1024}. Point index i sits at grid position
/// (row i / sqrt(M), col i % sqrt(M)), row-major.
Constellation square_qam(int order);

/// Scales points to unit mean power; relative geometry unchanged.
/// Throws std::invalid_argument on empty or all-zero input.
Constellation normalize(std::vector<cdouble> points);

Moments moments(const Constellation& c);

/// Per-axis binary-reflected Gray labeling for the square_qam grid
/// convention: label = (gray(row) << m/2) | gray(col). Grid-adjacent
/// points differ in exactly one bit.
BitLabeling gray_labeling(int order);

/// Labeling used by learned (GMI-mode) constellations: index i carries
/// the m-bit word i itself.
BitLabeling identity_labeling(int order);

struct LabeledConstellation {
  Constellation constellation;
  BitLabeling labeling;
};

/// CSV lookup-table export: header `index,re,im,label_bits`, 17 significant
/// digits so a load reproduces the stored doubles exactly.
void save_lut(const Constellation& c, const BitLabeling& labeling, const std::string& path);

/// Loads a LUT written by save_lut (or supplied externally). Duplicate
/// labels and malformed rows are errors. A non-unit-power table is an
/// error unless `renormalize` is set, in which case it is scaled and a
/// warning is printed to stderr.
LabeledConstellation load_lut(const std::string& path, bool renormalize = false);

}  // namespace gcslab
