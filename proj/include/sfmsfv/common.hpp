#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <stdexcept>
#include <string>

namespace sfv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Column-major storage. Every operator in this library is symmetric, so the
// compressed columns double as compressed rows for the matvec kernels.
using SpMat = Eigen::SparseMatrix<double>;
using Index3 = std::array<int, 3>;
using Point3 = std::array<double, 3>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: config, arguments, preconditions on user data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Face message missing or stale at the exchange barrier.
class ProtocolError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class Face : int { x_lo = 0, x_hi, y_lo, y_hi, z_lo, z_hi };

inline constexpr std::array<Face, 6> kAllFaces{Face::x_lo, Face::x_hi, Face::y_lo,
                                               Face::y_hi, Face::z_lo, Face::z_hi};

constexpr int face_axis(Face f) { return static_cast<int>(f) / 2; }
constexpr int face_side(Face f) { return static_cast<int>(f) % 2; }
constexpr Face make_face(int axis, int side) { return static_cast<Face>(2 * axis + side); }
constexpr Face opposite(Face f) { return make_face(face_axis(f), 1 - face_side(f)); }

const char* face_name(Face f);

inline Mat symmetrized(const Mat& a) { return 0.5 * (a + a.transpose()); }

}  // namespace sfv
