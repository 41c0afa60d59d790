#include "gcslab/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace gcslab {
namespace {

struct PlanPair {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  fftw_complex* buf = nullptr;
  std::size_t n = 0;

  PlanPair() = default;
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;

  ~PlanPair() {
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (buf) fftw_free(buf);
  }
};

std::mutex plan_mutex;
std::map<std::size_t, PlanPair>& plan_cache() {
  static std::map<std::size_t, PlanPair> cache;
  return cache;
}

PlanPair& plans_for(std::size_t n) {
  auto& cache = plan_cache();
  auto [it, inserted] = cache.try_emplace(n);
  PlanPair& p = it->second;
  if (inserted) {
    p.n = n;
    p.buf = fftw_alloc_complex(n);
    if (!p.buf) throw std::bad_alloc();
    p.fwd = fftw_plan_dft_1d(static_cast<int>(n), p.buf, p.buf, FFTW_FORWARD, FFTW_ESTIMATE);
    p.bwd = fftw_plan_dft_1d(static_cast<int>(n), p.buf, p.buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  return p;
}

void execute(std::vector<std::complex<double>>& x, bool forward) {
  if (x.empty()) return;
  std::lock_guard<std::mutex> lock(plan_mutex);
  PlanPair& p = plans_for(x.size());
  std::memcpy(static_cast<void*>(p.buf), static_cast<const void*>(x.data()),
              x.size() * sizeof(fftw_complex));
  fftw_execute(forward ? p.fwd : p.bwd);
  std::memcpy(static_cast<void*>(x.data()), static_cast<const void*>(p.buf),
              x.size() * sizeof(fftw_complex));
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& x) { execute(x, true); }

void ifft_inplace(std::vector<std::complex<double>>& x) {
  execute(x, false);
  const double scale = 1.0 / static_cast<double>(x.size());
  for (auto& v : x) v *= scale;
}

std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x) {
  fft_inplace(x);
  return x;
}

std::vector<std::complex<double>> ifft(std::vector<std::complex<double>> x) {
  ifft_inplace(x);
  return x;
}

std::vector<double> fft_frequencies(std::size_t n, double sample_rate) {
  std::vector<double> f(n);
  const double df = sample_rate / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long>(i);
    const long shifted = (i < (n + 1) / 2) ? k : k - static_cast<long>(n);
    f[i] = df * static_cast<double>(shifted);
  }
  return f;
}

}  // namespace gcslab
