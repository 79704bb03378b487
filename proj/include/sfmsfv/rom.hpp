#pragma once

#include <vector>

#include "sfmsfv/grid.hpp"

namespace sfv {

// m orthonormal modes supported on the owned nodes of one face.
struct FaceBasis {
  Face face = Face::x_lo;
  int m = 0;
  std::vector<int> nodes;  // local node indices
  Mat values;              // nodes.size() x m

  Mat dense(int n) const;
};

// Tensor-product cosine modes, k = sqrt(m) lowest per tangential axis.
// Mode index q1 + k*q2; q1 runs along the first tangential axis.
FaceBasis build_face_basis(Face face, const FaceNodes& nodes, int m);

struct FaceBlock {
  Face face = Face::x_lo;
  int offset = 0;  // first column in F (and first entry in the face layer block)
  int m = 0;
  int neighbor = -1;  // -1 for exterior faces
};

struct SubdomainInputs {
  Mat f;  // N x p, concatenated face bases
  std::vector<FaceBlock> blocks;
  int width() const { return static_cast<int>(f.cols()); }
};

SubdomainInputs build_subdomain_inputs(const SubdomainOperator& op, int m);

struct KrylovBasis {
  Mat v;                         // N x K, orthonormal
  std::vector<int> block_ranks;  // columns kept per block (deflation record)
  double shift = 0.0;
};

// Orthonormal basis of span{F, S F, ..., S^n F} with S = (-A + shift I)^{-1}.
KrylovBasis build_krylov_basis(const SpMat& a, const Mat& f, int n, double shift);

struct ReducedPair {
  Mat a;  // V^T A V, symmetrized
  Mat f;  // V^T F
};

ReducedPair project(const SpMat& a, const Mat& f, const Mat& v);
ReducedPair project(const Mat& a, const Mat& f, const Mat& v);

// Q^T A~ Q = T block tridiagonal, Q^T F~ = [R1; 0; ...].
struct BlockTridiagonal {
  std::vector<Mat> diag;   // A_j
  std::vector<Mat> upper;  // upper[j] = T_{j+1,j+2} (zero based), i.e. B_{j+2}
  Mat r1;                  // upper triangular with nonnegative diagonal
  Mat q;                   // K x K' with orthonormal columns
  std::vector<int> block_sizes;

  int layers() const { return static_cast<int>(diag.size()); }
  Mat b1() const { return r1.transpose(); }
  Mat dense() const;
};

BlockTridiagonal block_lanczos(const Mat& a, const Mat& f);

struct SFractionModel {
  std::vector<Mat> gamma;      // Gamma_j
  std::vector<Mat> gamma_hat;  // Gamma_hat_j = G_j G_j^T
  std::vector<Mat> g;          // G_j

  int layers() const { return static_cast<int>(g.size()); }
  int width() const { return layers() ? static_cast<int>(g[0].rows()) : 0; }
};

SFractionModel sfraction_transform(const BlockTridiagonal& tri);

// U = blockdiag(G_j) (VQ)^T w and its inverse on span(VQ).
Vec to_layers(const Vec& w, const Mat& vq, const SFractionModel& model);
Vec from_layers(const Vec& u, const Mat& vq, const SFractionModel& model);

struct LayerState {
  Vec u;   // concatenated U_j
  Vec du;  // concatenated dU_j/dt
};

LayerState project_initial_state(const Vec& u0, const Vec& v0, const Mat& vq, const SFractionModel& model);

struct RomParams {
  int m = 1;
  int n = 1;
  double shift = 0.0;
};

// Everything the online stage needs from one subdomain.
struct SubdomainRom {
  int id = 0;
  Index3 alpha{0, 0, 0};
  int m = 0;
  int n = 0;
  double shift = 0.0;
  std::vector<int> block_ranks;
  std::vector<FaceBlock> face_blocks;
  SFractionModel sfrac;
  Mat vq;    // N x K', or only the rows listed in vq_rows
  bool basis_complete = true;
  std::vector<int> vq_rows;  // sorted local nodes held in vq when the basis is partial
  Vec c;     // sound speed per node
  Vec mass;  // dual cell fraction per node

  int nodes() const { return static_cast<int>(c.size()); }
  int width() const { return sfrac.width(); }
  int layers() const { return sfrac.layers(); }
  bool full_basis() const { return basis_complete; }
  // Row of VQ for a local node; ConfigError if that row was not loaded.
  Eigen::RowVectorXd basis_row(int local) const;
};

SubdomainRom build_subdomain_rom(const SubdomainOperator& op, const RomParams& params);

// Smallest dynamically relevant squared frequency for a run of length t_end.
inline double default_shift(double t_end) {
  const double w = 2.0 * 3.14159265358979323846 / t_end;
  return w * w;
}

}  // namespace sfv
