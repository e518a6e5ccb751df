#pragma once

#include "so3denoise/geom.hpp"

namespace so3denoise {

struct KabschResult {
  Rotation rotation;
  /// rank(y^T x) < 2: the optimal rotation is not unique.
  bool degenerate = false;
};

/// Rotation minimizing |y - R o x|^2 over SO(3) for centered clouds,
/// U V^T of the proper SVD of y^T x.
///
/// Throws InvalidArgument on mismatched point counts and
/// AlignmentUndefined when y^T x vanishes.
KabschResult kabsch_with_status(const PointCloud& y, const PointCloud& x);

inline Rotation kabsch(const PointCloud& y, const PointCloud& x) {
  return kabsch_with_status(y, x).rotation;
}

/// sqrt(|a - b|^2 / N).
double rmsd(const PointCloud& a, const PointCloud& b);

/// rmsd(a, kabsch(a, b) o b).
double aligned_rmsd(const PointCloud& a, const PointCloud& b);

}  // namespace so3denoise
