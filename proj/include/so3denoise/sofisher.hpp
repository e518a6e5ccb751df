#pragma once

#include "so3denoise/geom.hpp"

#include <Eigen/Core>

namespace so3denoise {

/// Concentration matrix F of the matrix-Fisher density exp(Tr[F^T R]) / Z(F).
struct MatrixFisherParams {
  Eigen::Matrix3d f = Eigen::Matrix3d::Zero();
};

/// Proper singular values s1 >= s2 >= |s3| of a concentration matrix.
struct SingularSpectrum {
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;

  static SingularSpectrum from(const Eigen::Vector3d& s) { return {s(0), s(1), s(2)}; }
  Eigen::Vector3d vector() const { return {s1, s2, s3}; }
};

/// F = y^T x / sigma^2, the rotation posterior of y = R o x + sigma * eta
/// under a Haar prior on R.
MatrixFisherParams mf_from_observation(const PointCloud& y, const PointCloud& x,
                                       double sigma);

/// Tr[F^T R].
double mf_log_density_unnorm(const MatrixFisherParams& p, const Rotation& r);

/// U V^T from the proper SVD of F. Throws AlignmentUndefined for F = 0.
Rotation mf_mode(const MatrixFisherParams& p);

/// First-order Laplace coefficient (diagonal of C1(S)).
/// Throws ExpansionSingular when any s_i + s_j <= 1e-9 * s1.
Eigen::Vector3d c1(const SingularSpectrum& s);

/// Second-order Laplace coefficient (diagonal of C2(S)). Same domain as c1.
Eigen::Vector3d c2(const SingularSpectrum& s);

/// Expansion order of the approximate first moment.
enum class ExpansionOrder { Zero = 0, One = 1, Two = 2 };

/// U diag(d) V^T, the assembled moment for given correction diagonals.
/// d = 1 + sigma^2 * first + sigma^4 * second.
Eigen::Matrix3d assemble_moment(const ProperSvd& svd, double sigma,
                                const Eigen::Vector3d& first,
                                const Eigen::Vector3d& second);

/// Laplace approximation of E[R] under MF(R; a / sigma^2), truncated at
/// `order`. `a` is the unscaled cross-covariance y^T x. The result is a
/// plain matrix inside the convex hull of SO(3), not a rotation.
///
/// Order zero never throws ExpansionSingular; it is the mode.
Eigen::Matrix3d mf_mean_laplace(const Eigen::Matrix3d& a, double sigma,
                                ExpansionOrder order);

}  // namespace so3denoise
