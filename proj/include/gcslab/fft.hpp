#pragma once

#include <complex>
#include <vector>

namespace gcslab {

/// In-place complex FFT backed by FFTW. Plans are cached per size and
/// guarded by a mutex; execution copies through plan-owned aligned buffers
/// so caller arrays need no special alignment.
void fft_inplace(std::vector<std::complex<double>>& x);

/// Inverse transform, normalized by 1/N (fft followed by ifft is identity).
void ifft_inplace(std::vector<std::complex<double>>& x);

std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x);
std::vector<std::complex<double>> ifft(std::vector<std::complex<double>> x);

/// FFT-grid baseband frequencies in Hz for N samples at `sample_rate`:
/// bin i carries i/N*fs for i < N/2 and (i-N)/N*fs above.
std::vector<double> fft_frequencies(std::size_t n, double sample_rate);

}  // namespace gcslab
