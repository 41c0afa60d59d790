#include "gcslab/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace gcslab {
namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int v) {
  int m = 0;
  while ((1 << m) < v) ++m;
  return m;
}

std::uint32_t binary_reflected_gray(std::uint32_t v) { return v ^ (v >> 1); }

}  // namespace

int Constellation::bits_per_symbol() const {
  if (!is_power_of_two(order())) throw std::logic_error("constellation order is not a power of two");
  return log2_exact(order());
}

double Constellation::mean_power() const {
  double p = 0.0;
  for (const auto& x : points) p += std::norm(x);
  return points.empty() ? 0.0 : p / static_cast<double>(points.size());
}

bool Constellation::is_normalized(double tol) const {
  return std::abs(mean_power() - 1.0) <= tol;
}

int BitLabeling::bits() const {
  if (!is_power_of_two(order())) throw std::logic_error("labeling order is not a power of two");
  return log2_exact(order());
}

bool BitLabeling::is_bijection() const {
  std::vector<bool> seen(label_of.size(), false);
  for (auto word : label_of) {
    if (word >= label_of.size() || seen[word]) return false;
    seen[word] = true;
  }
  return true;
}

int BitLabeling::bit(int index, int pos) const {
  const int m = bits();
  return (label_of[index] >> (m - 1 - pos)) & 1u;
}

Constellation square_qam(int order) {
  if (!is_power_of_two(order)) throw std::invalid_argument("square_qam: order must be a power of two");
  const int m = log2_exact(order);
  if (m % 2 != 0) throw std::invalid_argument("square_qam: order must form a square grid (even log2)");
  if (order < 4 || order > 1024) throw std::invalid_argument("square_qam: supported orders are 4..1024");

  const int side = 1 << (m / 2);
  std::vector<cdouble> pts(order);
  for (int row = 0; row < side; ++row) {
    for (int col = 0; col < side; ++col) {
      const double re = static_cast<double>(2 * col - (side - 1));
      const double im = static_cast<double>((side - 1) - 2 * row);
      pts[row * side + col] = {re, im};
    }
  }
  return normalize(std::move(pts));
}

Constellation normalize(std::vector<cdouble> points) {
  if (points.empty()) throw std::invalid_argument("normalize: empty constellation");
  double p = 0.0;
  for (const auto& x : points) {
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
      throw std::invalid_argument("normalize: non-finite point");
    p += std::norm(x);
  }
  p /= static_cast<double>(points.size());
  if (p <= 0.0) throw std::invalid_argument("normalize: all points are zero");
  const double scale = 1.0 / std::sqrt(p);
  for (auto& x : points) x *= scale;
  return Constellation{std::move(points)};
}

Moments moments(const Constellation& c) {
  double p2 = 0.0, p4 = 0.0, p6 = 0.0;
  for (const auto& x : c.points) {
    const double a2 = std::norm(x);
    p2 += a2;
    p4 += a2 * a2;
    p6 += a2 * a2 * a2;
  }
  const double n = static_cast<double>(c.points.size());
  p2 /= n;
  p4 /= n;
  p6 /= n;
  return Moments{p4 / (p2 * p2), p6 / (p2 * p2 * p2)};
}

BitLabeling gray_labeling(int order) {
  if (!is_power_of_two(order)) throw std::invalid_argument("gray_labeling: order must be a power of two");
  const int m = log2_exact(order);
  if (m % 2 != 0) throw std::invalid_argument("gray_labeling: order must form a square grid");
  const int side = 1 << (m / 2);

  BitLabeling lab;
  lab.label_of.resize(order);
  for (int row = 0; row < side; ++row) {
    for (int col = 0; col < side; ++col) {
      const std::uint32_t word =
          (binary_reflected_gray(static_cast<std::uint32_t>(row)) << (m / 2)) |
          binary_reflected_gray(static_cast<std::uint32_t>(col));
      lab.label_of[row * side + col] = word;
    }
  }
  return lab;
}

BitLabeling identity_labeling(int order) {
  if (!is_power_of_two(order)) throw std::invalid_argument("identity_labeling: order must be a power of two");
  BitLabeling lab;
  lab.label_of.resize(order);
  for (int i = 0; i < order; ++i) lab.label_of[i] = static_cast<std::uint32_t>(i);
  return lab;
}

void save_lut(const Constellation& c, const BitLabeling& labeling, const std::string& path) {
  if (c.order() != labeling.order())
    throw std::invalid_argument("save_lut: constellation/labeling size mismatch");
  if (!labeling.is_bijection()) throw std::invalid_argument("save_lut: labeling is not a bijection");

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_lut: cannot open " + path);
  const int m = labeling.bits();
  out << "index,re,im,label_bits\n";
  char buf[128];
  for (int i = 0; i < c.order(); ++i) {
    std::string bits(m, '0');
    for (int b = 0; b < m; ++b)
      if (labeling.bit(i, b)) bits[b] = '1';
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%s\n", i, c.points[i].real(), c.points[i].imag(),
                  bits.c_str());
    out << buf;
  }
  if (!out) throw std::runtime_error("save_lut: write failed for " + path);
}

LabeledConstellation load_lut(const std::string& path, bool renormalize) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_lut: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_lut: empty file " + path);
  if (line.rfind("index,re,im,label_bits", 0) != 0)
    throw std::runtime_error("load_lut: bad header in " + path);

  std::vector<cdouble> pts;
  std::vector<std::uint32_t> labels;
  int expected_bits = -1;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string idx_s, re_s, im_s, bits_s;
    if (!std::getline(row, idx_s, ',') || !std::getline(row, re_s, ',') ||
        !std::getline(row, im_s, ',') || !std::getline(row, bits_s))
      throw std::runtime_error("load_lut: malformed row at line " + std::to_string(lineno));
    std::size_t pos = 0;
    const int idx = std::stoi(idx_s, &pos);
    if (idx != static_cast<int>(pts.size()))
      throw std::runtime_error("load_lut: non-sequential index at line " + std::to_string(lineno));
    const double re = std::stod(re_s);
    const double im = std::stod(im_s);
    if (!std::isfinite(re) || !std::isfinite(im))
      throw std::runtime_error("load_lut: non-finite point at line " + std::to_string(lineno));
    while (!bits_s.empty() && (bits_s.back() == '\r' || bits_s.back() == ' ')) bits_s.pop_back();
    if (expected_bits < 0) expected_bits = static_cast<int>(bits_s.size());
    if (static_cast<int>(bits_s.size()) != expected_bits)
      throw std::runtime_error("load_lut: inconsistent label width at line " + std::to_string(lineno));
    std::uint32_t word = 0;
    for (char ch : bits_s) {
      if (ch != '0' && ch != '1')
        throw std::runtime_error("load_lut: invalid label bits at line " + std::to_string(lineno));
      word = (word << 1) | static_cast<std::uint32_t>(ch - '0');
    }
    pts.push_back({re, im});
    labels.push_back(word);
  }

  if (pts.empty()) throw std::runtime_error("load_lut: no points in " + path);
  if (!is_power_of_two(static_cast<int>(pts.size())))
    throw std::runtime_error("load_lut: point count is not a power of two");
  if (expected_bits != log2_exact(static_cast<int>(pts.size())))
    throw std::runtime_error("load_lut: label width does not match point count");

  BitLabeling lab{std::move(labels)};
  if (!lab.is_bijection()) throw std::runtime_error("load_lut: duplicate label in " + path);

  Constellation c{std::move(pts)};
  if (!c.is_normalized(1e-9)) {
    if (!renormalize)
      throw std::runtime_error("load_lut: constellation mean power is not 1 (pass renormalize to fix)");
    std::cerr << "load_lut: renormalizing " << path << " (mean power " << c.mean_power() << ")\n";
    c = normalize(std::move(c.points));
  }
  return LabeledConstellation{std::move(c), std::move(lab)};
}

}  // namespace gcslab
