#pragma once

// Thin FFTW wrapper: complex transforms over any subset of the axes of a
// row-major array. Plans are cached per (shape, axes, direction) and created
// under a global mutex; executing a cached plan is thread-safe.

#include <complex>
#include <cstddef>
#include <vector>

namespace kmv {

using Complex = std::complex<double>;
using ComplexArray = std::vector<Complex>;

/// Unnormalized forward transform (e^{-i k n}) over `axes`, in place.
void fft_forward(ComplexArray& data, const std::vector<std::size_t>& shape,
                 const std::vector<std::size_t>& axes);
/// Inverse transform over `axes`, in place, normalized by the transformed length.
void fft_inverse(ComplexArray& data, const std::vector<std::size_t>& shape,
                 const std::vector<std::size_t>& axes);

/// All axes of the shape.
std::vector<std::size_t> all_axes(const std::vector<std::size_t>& shape);

/// Signed integer wavenumber of FFT bin k out of n (Nyquist bin counted positive).
inline long signed_bin(std::size_t k, std::size_t n) {
  const auto kk = static_cast<long>(k);
  const auto nn = static_cast<long>(n);
  return kk <= nn / 2 ? kk : kk - nn;
}

/// Angular frequency of bin k on a periodic box of length L.
inline double angular_frequency(std::size_t k, std::size_t n, double length) {
  return 2.0 * 3.14159265358979323846 * static_cast<double>(signed_bin(k, n)) / length;
}

ComplexArray to_complex(const std::vector<double>& v);
std::vector<double> real_part(const ComplexArray& c);

}  // namespace kmv
