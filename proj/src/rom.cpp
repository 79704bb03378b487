#include "sfmsfv/rom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

namespace sfv {

Mat FaceBasis::dense(int n) const {
  Mat out = Mat::Zero(n, m);
  for (std::size_t i = 0; i < nodes.size(); ++i) out.row(nodes[i]) = values.row(static_cast<Eigen::Index>(i));
  return out;
}

namespace {

// Orthonormal DCT-II vectors of length d, first k frequencies.
Mat cosine_modes(int d, int k) {
  Mat b(d, k);
  for (int q = 0; q < k; ++q) {
    const double scale = q == 0 ? std::sqrt(1.0 / d) : std::sqrt(2.0 / d);
    for (int x = 0; x < d; ++x) b(x, q) = scale * std::cos(std::numbers::pi * q * (x + 0.5) / d);
  }
  return b;
}

double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double lo = s[s.size() - 1];
  return lo > 0.0 ? s[0] / lo : std::numeric_limits<double>::infinity();
}

// Thin QR with nonnegative diagonal in R.
void signed_qr(const Mat& x, Mat& q, Mat& r) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Eigen::HouseholderQR<Mat> qr(x);
  q = qr.householderQ() * Mat::Identity(rows, cols);
  r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < cols; ++i)
    if (r(i, i) < 0.0) {
      r.row(i) *= -1.0;
      q.col(i) *= -1.0;
    }
}

}  // namespace

FaceBasis build_face_basis(Face face, const FaceNodes& fn, int m) {
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m))));
  if (m < 1 || k * k != m)
    throw ConfigError("face basis: m = " + std::to_string(m) + " is not a positive perfect square");
  if (k > fn.d1 || k > fn.d2) {
    std::ostringstream os;
    os << "face basis: " << k << " modes per axis exceed the owned face nodes (" << fn.d1 << " x " << fn.d2
       << ") on face " << face_name(face);
    throw ConfigError(os.str());
  }
  FaceBasis fb;
  fb.face = face;
  fb.m = m;
  fb.nodes = fn.nodes;
  const Mat b1 = cosine_modes(fn.d1, k), b2 = cosine_modes(fn.d2, k);
  fb.values.resize(static_cast<Eigen::Index>(fn.nodes.size()), m);
  for (int q2 = 0; q2 < k; ++q2)
    for (int q1 = 0; q1 < k; ++q1)
      for (int x2 = 0; x2 < fn.d2; ++x2)
        for (int x1 = 0; x1 < fn.d1; ++x1) fb.values(x1 + fn.d1 * x2, q1 + k * q2) = b1(x1, q1) * b2(x2, q2);
  return fb;
}

SubdomainInputs build_subdomain_inputs(const SubdomainOperator& op, int m) {
  SubdomainInputs in;
  std::vector<FaceBasis> bases;
  int width = 0;
  for (Face f : kAllFaces) {
    const FaceNodes& fn = op.faces[static_cast<int>(f)];
    if (!fn.active) continue;
    bases.push_back(build_face_basis(f, fn, m));
    in.blocks.push_back({f, width, m, fn.neighbor});
    width += m;
  }
  if (width == 0) throw ConfigError("subdomain has no faces carrying modes");
  in.f = Mat::Zero(op.size(), width);
  for (std::size_t b = 0; b < bases.size(); ++b) {
    const FaceBasis& fb = bases[b];
    for (std::size_t i = 0; i < fb.nodes.size(); ++i)
      in.f.block(fb.nodes[i], in.blocks[b].offset, 1, m) = fb.values.row(static_cast<Eigen::Index>(i));
  }
  return in;
}

namespace {

// Orthogonalize x against the columns of v[0..cols) twice, then orthonormalize
// within the block column by column; columns that fall below tol*|x| are dropped.
Mat orthonormal_block(const Mat& v, Eigen::Index cols, Mat x) {
  const double ref = x.norm();
  if (cols > 0) {
    for (int pass = 0; pass < 2; ++pass) {
      const Mat coeff = v.leftCols(cols).transpose() * x;
      x.noalias() -= v.leftCols(cols) * coeff;
    }
  }
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i : kept) x.col(j) -= x.col(i).dot(x.col(j)) * x.col(i);
    const double nrm = x.col(j).norm();
    if (nrm <= 1e-12 * ref) continue;
    x.col(j) /= nrm;
    kept.push_back(j);
  }
  Mat out(x.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = x.col(kept[i]);
  return out;
}

}  // namespace

KrylovBasis build_krylov_basis(const SpMat& a, const Mat& f, int n, double shift) {
  if (n < 0) throw ConfigError("krylov: n must be non-negative");
  if (shift < 0.0) throw ConfigError("krylov: shift must be non-negative");
  const Eigen::Index N = a.rows();
  KrylovBasis kb;
  kb.shift = shift;
  kb.v.resize(N, std::min<Eigen::Index>(N, f.cols() * (n + 1)));
  Eigen::Index cols = 0;

  Mat block = orthonormal_block(kb.v, 0, f);
  kb.v.leftCols(block.cols()) = block;
  cols = block.cols();
  kb.block_ranks.push_back(static_cast<int>(block.cols()));
  if (n == 0 || block.cols() == 0) {
    kb.v.conservativeResize(N, cols);
    return kb;
  }

  SpMat s(N, N);
  s.setIdentity();
  s *= shift;
  s -= a;
  Eigen::SimplicialLDLT<SpMat> ldlt(s);
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    const Vec d = ldlt.vectorD();
    ok = d.minCoeff() > 1e-12 * d.cwiseAbs().maxCoeff();
  }
  if (!ok) {
    const double scale = a.diagonal().cwiseAbs().maxCoeff();
    std::ostringstream os;
    os << "krylov: factorization of -A + sI failed at shift " << shift << "; try a shift of at least "
       << 1e-6 * scale;
    throw NumericalError(os.str());
  }

  for (int k = 1; k <= n; ++k) {
    if (cols >= N) {
      kb.block_ranks.push_back(0);
      continue;
    }
    const Mat x = ldlt.solve(block);
    block = orthonormal_block(kb.v, cols, x);
    const Eigen::Index take = std::min<Eigen::Index>(block.cols(), N - cols);
    kb.v.middleCols(cols, take) = block.leftCols(take);
    cols += take;
    kb.block_ranks.push_back(static_cast<int>(take));
    if (take == 0) {
      for (int r = k + 1; r <= n; ++r) kb.block_ranks.push_back(0);
      break;
    }
  }
  kb.v.conservativeResize(N, cols);
  return kb;
}

ReducedPair project(const SpMat& a, const Mat& f, const Mat& v) {
  ReducedPair rp;
  const Mat av = a * v;
  rp.a = symmetrized(v.transpose() * av);
  rp.f = v.transpose() * f;
  return rp;
}

ReducedPair project(const Mat& a, const Mat& f, const Mat& v) {
  ReducedPair rp;
  rp.a = symmetrized(v.transpose() * (a * v));
  rp.f = v.transpose() * f;
  return rp;
}

Mat BlockTridiagonal::dense() const {
  Eigen::Index k = 0;
  for (int s : block_sizes) k += s;
  Mat t = Mat::Zero(k, k);
  Eigen::Index off = 0;
  for (int j = 0; j < layers(); ++j) {
    const int p = block_sizes[j];
    t.block(off, off, p, p) = diag[j];
    if (j + 1 < layers()) {
      const int pn = block_sizes[j + 1];
      t.block(off, off + p, p, pn) = upper[j];
      t.block(off + p, off, pn, p) = upper[j].transpose();
    }
    off += p;
  }
  return t;
}

BlockTridiagonal block_lanczos(const Mat& a, const Mat& f) {
  const Eigen::Index K = a.rows(), p = f.cols();
  if (a.cols() != K || f.rows() != K) throw ConfigError("block lanczos: dimension mismatch");
  if (p == 0 || p > K) throw NumericalError("block lanczos: input block wider than the reduced space");
  BlockTridiagonal tri;
  Mat q1;
  signed_qr(f, q1, tri.r1);
  const double fnorm = f.norm();
  for (Eigen::Index i = 0; i < p; ++i)
    if (tri.r1(i, i) <= 1e-12 * fnorm) throw NumericalError("block lanczos: reduced input F~ is rank deficient");

  const double anorm = std::max(a.norm(), std::numeric_limits<double>::min());
  std::vector<Mat> qs{q1};
  Eigen::Index total = p;
  for (;;) {
    const Mat& qj = qs.back();
    Mat w = a * qj;
    Mat aj = symmetrized(qj.transpose() * w);
    w.noalias() -= qj * aj;
    if (qs.size() > 1) w.noalias() -= qs[qs.size() - 2] * tri.upper.back();
    tri.diag.push_back(aj);
    tri.block_sizes.push_back(static_cast<int>(p));
    for (int pass = 0; pass < 2; ++pass)
      for (const Mat& qi : qs) w.noalias() -= qi * (qi.transpose() * w);
    if (total >= K) break;
    if (w.norm() <= 1e-10 * anorm) break;  // invariant subspace: chain ends
    Mat qn, rn;
    if (total + p > K) throw NumericalError("block lanczos: partial deflation (reduced space not a multiple of the block size)");
    signed_qr(w, qn, rn);
    for (Eigen::Index i = 0; i < p; ++i)
      if (rn(i, i) <= 1e-10 * anorm) {
        std::ostringstream os;
        os << "block lanczos: partial deflation in block " << qs.size() + 1 << " (rank " << i << " of " << p
           << ")";
        throw NumericalError(os.str());
      }
    tri.upper.push_back(rn.transpose());
    qs.push_back(qn);
    total += p;
  }
  tri.q.resize(K, total);
  for (std::size_t j = 0; j < qs.size(); ++j) tri.q.middleCols(static_cast<Eigen::Index>(j) * p, p) = qs[j];
  return tri;
}

SFractionModel sfraction_transform(const BlockTridiagonal& tri) {
  SFractionModel model;
  const int L = tri.layers();
  if (L == 0) return model;
  const Eigen::Index p = tri.r1.rows();
  Mat gamma_prev = Mat::Zero(p, p);
  Mat g = tri.b1();
  for (int j = 0; j < L; ++j) {
    const double cg = condition_number(g);
    if (!(cg <= 1e12)) {
      std::ostringstream os;
      os << "s-fraction: G_" << j + 1 << " is singular (condition " << cg << ")";
      throw NumericalError(os.str());
    }
    const Mat ginv = g.partialPivLu().inverse();
    Mat gamma = symmetrized(-ginv.transpose() * tri.diag[j] * ginv - gamma_prev);
    model.g.push_back(g);
    model.gamma_hat.push_back(symmetrized(g * g.transpose()));
    model.gamma.push_back(gamma);
    if (j + 1 < L) {
      const Mat m = g.transpose() * gamma;
      const double cm = condition_number(m);
      if (!(cm <= 1e12)) {
        std::ostringstream os;
        os << "s-fraction: G_" << j + 1 << "^T Gamma_" << j + 1 << " is singular (condition " << cm << ")";
        throw NumericalError(os.str());
      }
      g = m.partialPivLu().solve(tri.upper[j]);
    }
    gamma_prev = gamma;
  }
  return model;
}

Vec to_layers(const Vec& w, const Mat& vq, const SFractionModel& model) {
  const Vec y = vq.transpose() * w;
  Vec u(y.size());
  Eigen::Index off = 0;
  for (const Mat& g : model.g) {
    const Eigen::Index p = g.rows();
    u.segment(off, p) = g * y.segment(off, p);
    off += p;
  }
  return u;
}

Vec from_layers(const Vec& u, const Mat& vq, const SFractionModel& model) {
  Vec y(u.size());
  Eigen::Index off = 0;
  for (const Mat& g : model.g) {
    const Eigen::Index p = g.rows();
    y.segment(off, p) = g.partialPivLu().solve(u.segment(off, p));
    off += p;
  }
  return vq * y;
}

LayerState project_initial_state(const Vec& u0, const Vec& v0, const Mat& vq, const SFractionModel& model) {
  if (u0.size() != vq.rows() || v0.size() != vq.rows())
    throw ConfigError("initial state length does not match the subdomain");
  return {to_layers(u0, vq, model), to_layers(v0, vq, model)};
}

SubdomainRom build_subdomain_rom(const SubdomainOperator& op, const RomParams& params) {
  if (params.m < 1 || params.n < 1) throw ConfigError("rom: m and n must be >= 1");
  const SubdomainInputs in = build_subdomain_inputs(op, params.m);
  const KrylovBasis kb = build_krylov_basis(op.matrix, in.f, params.n, params.shift);
  const ReducedPair rp = project(op.matrix, in.f, kb.v);
  const BlockTridiagonal tri = block_lanczos(rp.a, rp.f);

  SubdomainRom rom;
  rom.id = op.id;
  rom.alpha = op.alpha;
  rom.m = params.m;
  rom.n = params.n;
  rom.shift = params.shift;
  rom.block_ranks = kb.block_ranks;
  rom.face_blocks = in.blocks;
  rom.sfrac = sfraction_transform(tri);
  rom.vq = kb.v * tri.q;
  rom.c = op.c;
  rom.mass = op.mass;
  return rom;
}

Eigen::RowVectorXd SubdomainRom::basis_row(int local) const {
  if (basis_complete) return vq.row(local);
  const auto it = std::lower_bound(vq_rows.begin(), vq_rows.end(), local);
  if (it == vq_rows.end() || *it != local)
    throw ConfigError("basis row of local node " + std::to_string(local) + " was not loaded");
  return vq.row(it - vq_rows.begin());
}

}  // namespace sfv
