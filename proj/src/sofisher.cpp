#include "so3denoise/sofisher.hpp"

#include "so3denoise/error.hpp"

#include <cmath>

namespace so3denoise {

MatrixFisherParams mf_from_observation(const PointCloud& y, const PointCloud& x,
                                       double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("mf_from_observation: sigma must be positive");
  if (y.rows() != x.rows()) throw InvalidArgument("mf_from_observation: point counts differ");
  return {y.transpose() * x / (sigma * sigma)};
}

double mf_log_density_unnorm(const MatrixFisherParams& p, const Rotation& r) {
  return p.f.cwiseProduct(r.matrix()).sum();
}

Rotation mf_mode(const MatrixFisherParams& p) {
  if (!(p.f.cwiseAbs().maxCoeff() > 0.0)) throw AlignmentUndefined("mf_mode: F is zero");
  const ProperSvd svd = proper_svd(p.f);
  return Rotation(svd.u.matrix() * svd.v.matrix().transpose());
}

namespace {

// Pairwise sums s_i + s_j for (1,2), (1,3), (2,3).
Eigen::Vector3d pair_sums(const SingularSpectrum& s) {
  const Eigen::Vector3d sums(s.s1 + s.s2, s.s1 + s.s3, s.s2 + s.s3);
  const double eps = 1e-9 * s.s1;
  if (!(s.s1 > 0.0) || (sums.array() <= eps).any()) {
    throw ExpansionSingular("Laplace expansion singular: s = (" + std::to_string(s.s1) + ", " +
                            std::to_string(s.s2) + ", " + std::to_string(s.s3) + ")");
  }
  return sums;
}

}  // namespace

Eigen::Vector3d c1(const SingularSpectrum& s) {
  const Eigen::Vector3d p = pair_sums(s);
  return {-0.5 * (1.0 / p(0) + 1.0 / p(1)),
          -0.5 * (1.0 / p(0) + 1.0 / p(2)),
          -0.5 * (1.0 / p(1) + 1.0 / p(2))};
}

Eigen::Vector3d c2(const SingularSpectrum& s) {
  const Eigen::Vector3d p = pair_sums(s);
  const Eigen::Vector3d q = p.cwiseProduct(p);
  return {-0.125 * (1.0 / q(0) + 1.0 / q(1)),
          -0.125 * (1.0 / q(0) + 1.0 / q(2)),
          -0.125 * (1.0 / q(1) + 1.0 / q(2))};
}

Eigen::Matrix3d assemble_moment(const ProperSvd& svd, double sigma,
                                const Eigen::Vector3d& first,
                                const Eigen::Vector3d& second) {
  const double s2 = sigma * sigma;
  const Eigen::Vector3d d = Eigen::Vector3d::Ones() + s2 * first + (s2 * s2) * second;
  return svd.u.matrix() * d.asDiagonal() * svd.v.matrix().transpose();
}

Eigen::Matrix3d mf_mean_laplace(const Eigen::Matrix3d& a, double sigma,
                                ExpansionOrder order) {
  if (!(sigma > 0.0)) throw InvalidArgument("mf_mean_laplace: sigma must be positive");
  if (!(a.cwiseAbs().maxCoeff() > 0.0)) throw AlignmentUndefined("mf_mean_laplace: a is zero");
  const ProperSvd svd = proper_svd(a);
  const SingularSpectrum spec = SingularSpectrum::from(svd.s);
  // The coefficients are homogeneous of degree -1 and -2 in s, so with
  // F = a / sigma^2 the sigma^2, sigma^4 factors carry the lambda scaling.
  const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
  switch (order) {
    case ExpansionOrder::Zero:
      return assemble_moment(svd, sigma, zero, zero);
    case ExpansionOrder::One:
      return assemble_moment(svd, sigma, c1(spec), zero);
    case ExpansionOrder::Two:
      return assemble_moment(svd, sigma, c1(spec), c2(spec));
  }
  throw InvalidArgument("mf_mean_laplace: bad order");
}

}  // namespace so3denoise
