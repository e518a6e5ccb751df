#include "so3denoise/align.hpp"

#include "so3denoise/error.hpp"

#include <cmath>

namespace so3denoise {

namespace {

void require_same_shape(const PointCloud& a, const PointCloud& b, const char* who) {
  if (a.rows() != b.rows()) {
    throw InvalidArgument(std::string(who) + ": point counts differ (" +
                          std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) + ")");
  }
}

}  // namespace

KabschResult kabsch_with_status(const PointCloud& y, const PointCloud& x) {
  require_same_shape(y, x, "kabsch");
  const Eigen::Matrix3d a = y.transpose() * x;
  const double scale = a.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw AlignmentUndefined("kabsch: cross-covariance is zero");
  const ProperSvd svd = proper_svd(a);
  KabschResult out;
  out.rotation = Rotation(svd.u.matrix() * svd.v.matrix().transpose());
  out.degenerate = std::abs(svd.s(1)) <= 1e-12 * svd.s(0);
  return out;
}

double rmsd(const PointCloud& a, const PointCloud& b) {
  require_same_shape(a, b, "rmsd");
  if (a.rows() == 0) throw InvalidArgument("rmsd: empty point cloud");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.rows()));
}

double aligned_rmsd(const PointCloud& a, const PointCloud& b) {
  return rmsd(a, rotate(kabsch(a, b), b));
}

}  // namespace so3denoise
