#pragma once

#include "so3denoise/geom.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace so3denoise {

/// Regression targets for rotationally augmented denoising.
enum class EstimatorKind {
  Aug,     ///< R_aug o x, the raw augmented ground truth
  Order0,  ///< alignment: R*(y, x) o x
  Order1,  ///< alignment plus the sigma^2 correction
  Order2,  ///< alignment plus sigma^2 and sigma^4 corrections
  Oracle,  ///< posterior mean by quadrature
};

std::string_view to_string(EstimatorKind kind);
/// Accepts aug, order0, order1, order2, oracle. Throws InvalidArgument.
EstimatorKind parse_estimator_kind(std::string_view name);

struct TargetOptions {
  /// Per-entry tolerance of the quadrature oracle.
  double oracle_tol = 1e-8;
};

/// Denoiser target for the given estimator. `r_aug` must be present iff
/// kind == Aug.
PointCloud estimator_target(EstimatorKind kind, const PointCloud& y,
                            const PointCloud& x, double sigma,
                            const std::optional<Rotation>& r_aug = std::nullopt,
                            const TargetOptions& opts = {});

/// |target(kind) - target(Oracle)|^2. `r_aug` is required for Aug only.
double mse_to_oracle(EstimatorKind kind, const PointCloud& y, const PointCloud& x,
                     double sigma,
                     const std::optional<Rotation>& r_aug = std::nullopt,
                     const TargetOptions& opts = {});

struct SweepRecord {
  double sigma = 0.0;
  EstimatorKind kind = EstimatorKind::Order0;
  double mean_mse = 0.0;
  double stderr_mse = 0.0;
  std::int64_t n_samples = 0;
  std::int64_t n_excluded = 0;
  std::uint64_t seed = 0;
};

struct SweepOptions {
  double oracle_tol = 1e-6;
};

/// For each sigma, draws n_noise (R_aug, eta) pairs, forms
/// y = center(R_aug o x + sigma * eta) and averages mse_to_oracle over the
/// Aug, Order0, Order1 and Order2 estimators. Samples whose target fails
/// (ExpansionSingular, NoConvergence) are counted in n_excluded.
/// Deterministic given seed.
std::vector<SweepRecord> error_sweep(const PointCloud& x, const std::vector<double>& sigmas,
                                     int n_noise, std::uint64_t seed,
                                     const SweepOptions& opts = {});

/// Sigmas at which mean_mse(Aug) < mean_mse(Order0). Alignment is the
/// posterior mode, not the mean, so this is reported rather than enforced.
std::vector<double> mode_ordering_violations(const std::vector<SweepRecord>& records);

inline constexpr std::string_view kSweepCsvHeader =
    "sigma,kind,mean_mse,stderr,n_samples,n_excluded,seed";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRecord>& records);
/// Throws ParseError on a bad header or row.
std::vector<SweepRecord> read_sweep_csv(std::istream& in);

/// Max over probes of |Delta(d_i) - Delta(d_0)| with
/// Delta(d) = E_R[|d - R o x|^2] - |d - E_R[R o x]|^2 under the rotation
/// posterior of (y, x, sigma). Both expectations come from the same
/// quadrature grid; the first is summed node by node.
struct OffsetCheck {
  double spread = 0.0;
  /// Delta(d_0).
  double offset = 0.0;
};

OffsetCheck averaging_offset_check(const PointCloud& y, const PointCloud& x, double sigma,
                                   const std::vector<PointCloud>& probes,
                                   double tol = 1e-8);

/// Standard-normal point cloud of the same shape, drawn row-major.
PointCloud sample_gaussian_cloud(Rng& rng, Eigen::Index n_points);

}  // namespace so3denoise
