#pragma once

#include <vector>

#include "sfmsfv/rom.hpp"

namespace sfv {

// Neumann-to-Dirichlet transfer functions M(omega) = F^T (A + omega^2 I)^{-1} F
// in four equivalent representations. The *_z forms take z = omega^2 directly,
// which also allows negative z (the Krylov interpolation point is z = -shift).

Mat ntd_full_z(const SpMat& a, const Mat& f, double z);
Mat ntd_full_z(const Mat& a, const Mat& f, double z);
Mat ntd_rom_z(const Mat& a_tilde, const Mat& f_tilde, double z);
Mat ntd_tridiag_z(const BlockTridiagonal& tri, double z);
Mat ntd_sfraction_z(const SFractionModel& model, double z);

inline Mat ntd_full(const SpMat& a, const Mat& f, double omega) { return ntd_full_z(a, f, omega * omega); }
inline Mat ntd_full(const Mat& a, const Mat& f, double omega) { return ntd_full_z(a, f, omega * omega); }
inline Mat ntd_rom(const Mat& a, const Mat& f, double omega) { return ntd_rom_z(a, f, omega * omega); }
inline Mat ntd_tridiag(const BlockTridiagonal& tri, double omega) { return ntd_tridiag_z(tri, omega * omega); }
inline Mat ntd_sfraction(const SFractionModel& m, double omega) { return ntd_sfraction_z(m, omega * omega); }

// Log-spaced frequencies in [lo, hi]; any frequency within 1e-8 (relative) of
// a pole sqrt(-eig) is nudged away.
std::vector<double> band_frequencies(double lo, double hi, int count, const std::vector<double>& poles = {});

// max over omegas of |a(w) - b(w)| / |b(w)| (Frobenius norms)
double relative_deviation(const std::vector<Mat>& a, const std::vector<Mat>& b);

}  // namespace sfv
