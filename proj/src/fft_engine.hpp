#pragma once

#include <fftw3.h>

#include <complex>

namespace matchkit::detail {

// Thin wrappers over cached FFTW plans. Planning is serialized; execution uses
// the new-array interface and is safe from concurrent trials.

/// out[k1 * (n/2+1) + k2] = sum_j in[j] e^{-2 pi i k.j / n}
void forward_r2c(int n, const double* in, std::complex<double>* out);
/// Unnormalized inverse of forward_r2c. Overwrites `in`.
void inverse_c2r(int n, std::complex<double>* in, double* out);
/// Separable real-to-real transform with per-axis kinds (FFTW_REDFT10 etc.).
void r2r(int n, fftw_r2r_kind kind0, fftw_r2r_kind kind1, const double* in, double* out);

}  // namespace matchkit::detail
