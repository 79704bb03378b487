#include "sfmsfv/ntd.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <sstream>

namespace sfv {
namespace {

[[noreturn]] void resonance(double z) {
  std::ostringstream os;
  os << "ntd: near-singular solve at omega^2 = " << z;
  if (z > 0) os << " (omega = " << std::sqrt(z) << ")";
  throw NumericalError(os.str());
}

// The rcond estimate alone misses exactly singular pivots, so check both.
bool well_posed(const Eigen::PartialPivLU<Mat>& lu) {
  const Vec d = lu.matrixLU().diagonal().cwiseAbs();
  return d.size() == 0 || (d.minCoeff() > 1e-14 * d.maxCoeff() && lu.rcond() > 1e-14);
}

Mat dense_solve(const Mat& a, double z, const Mat& rhs) {
  Mat s = a;
  s.diagonal().array() += z;
  Eigen::PartialPivLU<Mat> lu(s);
  if (!well_posed(lu)) resonance(z);
  return lu.solve(rhs);
}

}  // namespace

Mat ntd_full_z(const SpMat& a, const Mat& f, double z) {
  SpMat s(a.rows(), a.cols());
  s.setIdentity();
  s *= z;
  s += a;
  Eigen::SparseLU<SpMat> lu;
  lu.compute(s);
  if (lu.info() != Eigen::Success) resonance(z);
  const Mat x = lu.solve(f);
  if (!x.allFinite()) resonance(z);
  const double scale = s.coeffs().cwiseAbs().maxCoeff();
  if (x.cwiseAbs().maxCoeff() * scale > 1e14 * std::max(1.0, f.cwiseAbs().maxCoeff())) resonance(z);
  return f.transpose() * x;
}

Mat ntd_full_z(const Mat& a, const Mat& f, double z) { return f.transpose() * dense_solve(a, z, f); }

Mat ntd_rom_z(const Mat& a_tilde, const Mat& f_tilde, double z) { return ntd_full_z(a_tilde, f_tilde, z); }

Mat ntd_tridiag_z(const BlockTridiagonal& tri, double z) {
  const int L = tri.layers();
  // Schur complements from the bottom: S_j = A_j + z - B S_{j+1}^{-1} B^T
  bool ok = true;
  Mat s = tri.diag[L - 1];
  s.diagonal().array() += z;
  for (int j = L - 2; j >= 0 && ok; --j) {
    Eigen::PartialPivLU<Mat> lu(s);
    if (!well_posed(lu)) {
      ok = false;
      break;
    }
    const Mat& b = tri.upper[j];
    Mat next = tri.diag[j];
    next.diagonal().array() += z;
    next -= b * lu.solve(b.transpose());
    s = next;
  }
  if (ok) {
    Eigen::PartialPivLU<Mat> lu(s);
    if (well_posed(lu)) return tri.b1() * lu.solve(tri.r1);
  }
  // Fall back to the whole block tridiagonal system with full pivoting.
  const Mat t = tri.dense();
  const Eigen::Index p = tri.r1.rows();
  Mat rhs = Mat::Zero(t.rows(), p);
  rhs.topRows(p) = tri.r1;
  Mat sys = t;
  sys.diagonal().array() += z;
  Eigen::FullPivLU<Mat> lu(sys);
  if (!lu.isInvertible()) resonance(z);
  const Mat w = lu.solve(rhs);
  return tri.b1() * w.topRows(p);
}

Mat ntd_sfraction_z(const SFractionModel& model, double z) {
  // Layer j of (T_U + z) X = [Gamma_hat_1; 0; ...] multiplied by Gamma_hat_j^{-1}:
  // z Gamma_hat_j^{-1} X_j + Gamma_j (X_{j+1} - X_j) - Gamma_{j-1} (X_j - X_{j-1}) = delta_j1 I.
  // Symmetric, and free of the layer scaling that makes T_U badly conditioned.
  const int L = model.layers();
  const Eigen::Index p = model.width();
  Mat sys = Mat::Zero(L * p, L * p);
  for (int j = 0; j < L; ++j) {
    Mat self = z * model.gamma_hat[j].inverse() - model.gamma[j];
    if (j > 0) {
      self -= model.gamma[j - 1];
      sys.block(j * p, (j - 1) * p, p, p) = model.gamma[j - 1];
    }
    if (j + 1 < L) sys.block(j * p, (j + 1) * p, p, p) = model.gamma[j];
    sys.block(j * p, j * p, p, p) = self;
  }
  Mat rhs = Mat::Zero(L * p, p);
  rhs.topRows(p).setIdentity();
  Eigen::PartialPivLU<Mat> lu(sys);
  if (!well_posed(lu)) resonance(z);
  return lu.solve(rhs).topRows(p);
}

std::vector<double> band_frequencies(double lo, double hi, int count, const std::vector<double>& poles) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    double w = count == 1 ? lo : lo * std::pow(hi / lo, double(i) / (count - 1));
    for (double p : poles)
      if (std::abs(w - p) < 1e-8 * p) w = p * (1.0 + 2e-8);
    out.push_back(w);
  }
  return out;
}

double relative_deviation(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (a[i] - b[i]).norm() / b[i].norm());
  return worst;
}

}  // namespace sfv
