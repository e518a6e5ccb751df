#include "so3denoise/geom.hpp"

#include "so3denoise/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>

namespace so3denoise {

bool Rotation::is_valid(double tol) const {
  const double orth = (m_.transpose() * m_ - Eigen::Matrix3d::Identity()).norm();
  return orth <= tol && std::abs(m_.determinant() - 1.0) <= tol;
}

PointCloud center(const PointCloud& pc) {
  if (pc.rows() == 0) return pc;
  const Eigen::RowVector3d centroid = pc.colwise().mean();
  return pc.rowwise() - centroid;
}

PointCloud rotate(const Rotation& r, const PointCloud& pc) {
  return apply_matrix(r.matrix(), pc);
}

PointCloud apply_matrix(const Eigen::Matrix3d& m, const PointCloud& pc) {
  return pc * m.transpose();
}

double frobenius_norm_sq(const PointCloud& pc) { return pc.squaredNorm(); }

Eigen::Matrix3d quaternion_to_matrix(double w, double x, double y, double z) {
  Eigen::Matrix3d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

Rotation sample_haar(Rng& rng) {
  std::normal_distribution<double> normal;
  double q[4];
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& c : q) {
      c = normal(rng);
      norm2 += c * c;
    }
  } while (norm2 < 1e-300);
  const double inv = 1.0 / std::sqrt(norm2);
  return Rotation(quaternion_to_matrix(q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv));
}

ProperSvd proper_svd(const Eigen::Matrix3d& a) {
  if (!a.allFinite()) throw InvalidArgument("proper_svd: non-finite input");
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d s = svd.singularValues();
  // Absorb reflections into the last singular value. When both factors are
  // improper the two sign flips cancel in s.
  if (u.determinant() < 0) {
    u.col(2) *= -1.0;
    s(2) = -s(2);
  }
  if (v.determinant() < 0) {
    v.col(2) *= -1.0;
    s(2) = -s(2);
  }
  return {Rotation(u), s, Rotation(v)};
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d k;
  k << 0, -v(2), v(1),
      v(2), 0, -v(0),
      -v(1), v(0), 0;
  return k;
}

Eigen::Matrix3d exp_map_minus_identity(const Eigen::Vector3d& theta) {
  const double t2 = theta.squaredNorm();
  const double t = std::sqrt(t2);
  double a = 0.0;  // sin(t) / t
  double b = 0.0;  // (1 - cos(t)) / t^2
  if (t < 1e-4) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    a = std::sin(t) / t;
    const double h = std::sin(0.5 * t) / t;
    b = 2.0 * h * h;
  }
  const Eigen::Matrix3d k = skew(theta);
  return a * k + b * (k * k);
}

Rotation exp_map(const Eigen::Vector3d& theta) {
  return Rotation(Eigen::Matrix3d::Identity() + exp_map_minus_identity(theta));
}

double haar_density_expmap(const Eigen::Vector3d& theta) {
  constexpr double pi = std::numbers::pi;
  const double t2 = theta.squaredNorm();
  const double t = std::sqrt(t2);
  if (t > pi * (1.0 + 1e-12)) throw InvalidArgument("haar_density_expmap: |theta| > pi");
  double ratio = 0.0;  // (1 - cos t) / t^2
  if (t < 1e-4) {
    ratio = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    const double h = std::sin(0.5 * t) / t;
    ratio = 2.0 * h * h;
  }
  return ratio / (4.0 * pi * pi);
}

}  // namespace so3denoise
