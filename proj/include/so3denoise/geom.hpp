#pragma once

#include <Eigen/Dense>

#include <random>

namespace so3denoise {

/// N x 3 Cartesian coordinates, one point per row.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3>;

using Rng = std::mt19937_64;

/// Element of SO(3). Construction from a raw matrix is unchecked; use
/// `is_valid` where the provenance is untrusted.
class Rotation {
 public:
  Rotation() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Rotation(const Eigen::Matrix3d& m) : m_(m) {}

  static Rotation identity() { return Rotation(); }

  const Eigen::Matrix3d& matrix() const { return m_; }
  Rotation transpose() const { return Rotation(m_.transpose()); }

  /// Orthogonality and unit determinant, both within `tol`.
  bool is_valid(double tol = 1e-12) const;

  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    return Rotation(a.m_ * b.m_);
  }

 private:
  Eigen::Matrix3d m_;
};

/// Sign-corrected SVD: a = u * diag(s) * v^T with det(u) = det(v) = 1 and
/// s(0) >= s(1) >= |s(2)|.
struct ProperSvd {
  Rotation u;
  Eigen::Vector3d s;
  Rotation v;
};

/// Subtracts the centroid from every row.
PointCloud center(const PointCloud& pc);

/// Group action R o x = x R^T.
PointCloud rotate(const Rotation& r, const PointCloud& pc);

/// The same action extended to an arbitrary 3x3 matrix (used for
/// expected rotations, which are not themselves rotations).
PointCloud apply_matrix(const Eigen::Matrix3d& m, const PointCloud& pc);

/// Sum of squared point norms.
double frobenius_norm_sq(const PointCloud& pc);

/// Uniform (Haar) rotation via a normalized 4D Gaussian quaternion.
Rotation sample_haar(Rng& rng);

Eigen::Matrix3d quaternion_to_matrix(double w, double x, double y, double z);

/// Throws InvalidArgument on non-finite input.
ProperSvd proper_svd(const Eigen::Matrix3d& a);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Rodrigues formula for exp of the skew matrix of theta.
Rotation exp_map(const Eigen::Vector3d& theta);

/// exp_map(theta) - I, computed without cancellation near theta = 0.
Eigen::Matrix3d exp_map_minus_identity(const Eigen::Vector3d& theta);

/// Normalized Haar density in exponential coordinates,
/// (1 - cos|t|) / (4 pi^2 |t|^2). Throws InvalidArgument for |t| > pi.
double haar_density_expmap(const Eigen::Vector3d& theta);

}  // namespace so3denoise
