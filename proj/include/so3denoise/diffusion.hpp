#pragma once

#include "so3denoise/estimators.hpp"
#include "so3denoise/geom.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace so3denoise {

struct NoisySample {
  PointCloud y;
  Rotation r_aug;
};

/// r_aug ~ Haar, y = center(r_aug o x + sigma * eta).
NoisySample noise_sample(const PointCloud& x, double sigma, Rng& rng);

/// Two-layer tanh MLP mapping a flattened noisy cloud plus (log sigma, 1)
/// to a centered N x 3 cloud. Also used as the gradient container.
struct MlpDenoiser {
  Eigen::MatrixXd w1;  // hidden x (3N + 2)
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // 3N x hidden
  Eigen::VectorXd b2;  // 3N
  double s_ref = 1.0;

  int n_points() const { return static_cast<int>(b2.size() / 3); }
  int hidden() const { return static_cast<int>(b1.size()); }
  Eigen::Index n_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  static MlpDenoiser zeros(int n_points, int hidden, double s_ref = 1.0);
  /// Gaussian init, w1 ~ N(0, 1/fan_in), w2 ~ N(0, 1/hidden).
  static MlpDenoiser random(int n_points, int hidden, double s_ref, Rng& rng);

  /// Flat parameter view in w1, b1, w2, b2 order (column-major matrices).
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> params);
  bool all_finite() const;
};

/// Throws InvalidArgument when y has the wrong number of points.
PointCloud mlp_forward(const MlpDenoiser& m, const PointCloud& y, double sigma);

struct LossAndGrad {
  double loss = 0.0;
  MlpDenoiser grads;
  int n_used = 0;
  int n_excluded = 0;
};

/// Mean over the batch of |mlp_forward(m, y_i, sigma) - target_i|^2 and its
/// gradient with respect to every parameter. Targets are constants.
LossAndGrad loss_and_grad_targets(const MlpDenoiser& m, std::span<const PointCloud> ys,
                                  std::span<const PointCloud> targets, double sigma);

/// Loss value only; same definition as loss_and_grad_targets.
double mlp_loss(const MlpDenoiser& m, std::span<const PointCloud> ys,
                std::span<const PointCloud> targets, double sigma);

struct TrainingSample {
  PointCloud y;
  PointCloud x;
  Rotation r_aug;
};

/// Estimator-matching loss. Samples whose target cannot be formed are
/// excluded and counted.
LossAndGrad loss_and_grad(const MlpDenoiser& m, std::span<const TrainingSample> batch,
                          double sigma, EstimatorKind estimator,
                          const TargetOptions& opts = {});

enum class DatasetMode { AllFrames, SingleFrame };

std::string to_string(DatasetMode mode);
DatasetMode parse_dataset_mode(std::string_view name);

struct TrainConfig {
  double sigma = 0.5;
  EstimatorKind estimator = EstimatorKind::Order0;
  int steps = 1000;
  int batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  DatasetMode dataset_mode = DatasetMode::SingleFrame;
  int hidden = 64;
  int probe_batch = 16;
  /// When set, each training sample draws sigma log-uniformly from
  /// [sigma, sigma_max] instead of using the fixed sigma.
  std::optional<double> sigma_max;
  double oracle_tol = 1e-6;
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double rmsd = 0.0;
  double aligned_rmsd = 0.0;
  int n_excluded = 0;
};

enum class TrainStatus { Completed, Diverged };

struct TrainResult {
  MlpDenoiser model;
  /// Row k holds probe metrics after k updates (k = 0 .. steps).
  std::vector<StepMetrics> metrics;
  TrainStatus status = TrainStatus::Completed;
  /// Step index at which the loss or parameters became non-finite.
  int diverged_step = -1;
};

/// Adam (0.9, 0.999, 1e-8) on the estimator-matching loss at a fixed
/// sigma. Metrics are measured on a fixed probe batch. Deterministic.
TrainResult train(const TrainConfig& cfg, const std::vector<PointCloud>& dataset,
                  double s_ref);

inline constexpr std::string_view kMetricsCsvHeader = "step,loss,rmsd,aligned_rmsd,n_excluded";
void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& metrics);

/// Strictly descending noise levels ending at exactly zero.
class DdimSchedule {
 public:
  /// Throws InvalidArgument unless sigmas is strictly descending, starts
  /// positive and ends at 0.
  explicit DdimSchedule(std::vector<double> sigmas);
  const std::vector<double>& sigmas() const { return sigmas_; }

 private:
  std::vector<double> sigmas_;
};

using Denoiser = std::function<PointCloud(const PointCloud&, double)>;

/// y + (1 - sigma_to / sigma_from) * (D(y, sigma_from) - y).
PointCloud ddim_step(const Denoiser& denoiser, const PointCloud& y, double sigma_from,
                     double sigma_to);

/// Starts from a centered N(0, sigma_M^2) cloud and applies ddim_step down
/// the schedule.
PointCloud ddim_sample(const Denoiser& denoiser, const DdimSchedule& schedule,
                       int n_points, Rng& rng);

/// Checkpoint layout: one line of JSON (format tag, dims, s_ref, metadata)
/// terminated by '\n', then n_params little-endian IEEE-754 doubles in
/// w1, b1, w2, b2 order, matrices column-major.
void save_model(std::ostream& out, const MlpDenoiser& m, const std::string& metadata_json);
MlpDenoiser load_model(std::istream& in);

}  // namespace so3denoise
