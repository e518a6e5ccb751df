#pragma once

#include "so3denoise/geom.hpp"
#include "so3denoise/sofisher.hpp"

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace so3denoise {

enum class GridScheme {
  /// ZYZ Euler product: periodic trapezoid in alpha and gamma,
  /// Gauss-Legendre in cos(beta).
  GlobalEuler,
  /// Exponential-coordinate box around a mode, Gauss-Legendre per axis.
  ModeCentered,
};

/// Lazy description of a quadrature grid. Nodes are generated on demand so
/// fine grids never need to be held in memory.
struct GridSpec {
  GridScheme scheme = GridScheme::GlobalEuler;
  int n = 16;
  Rotation mode;            // ModeCentered only
  double halfwidth = 0.0;   // ModeCentered only
};

struct GridNode {
  Rotation r;
  double weight = 0.0;
};

/// Materialized grid with weights normalized to sum to one. `haar_mass` is
/// the Haar measure covered before normalization (1 for the global scheme).
struct So3Grid {
  GridSpec spec;
  std::vector<GridNode> nodes;
  double haar_mass = 1.0;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// n^3-node Euler product grid. Throws InvalidArgument for n < 2.
So3Grid so3_grid_global(int n);

/// Nodes mode * exp_map(theta), theta on a Gauss-Legendre product grid in
/// [-halfwidth, halfwidth]^3 restricted to |theta| <= pi, weighted by the
/// exp-map Haar density. Requires 0 < halfwidth <= pi and n >= 2.
So3Grid so3_grid_mode_centered(const Rotation& mode, double halfwidth, int n);

So3Grid materialize(const GridSpec& spec);

/// log Z(F) with Z Haar-normalized, evaluated with log-sum-exp.
double mf_log_partition(const MatrixFisherParams& p, const So3Grid& grid);
double mf_log_partition(const MatrixFisherParams& p, const GridSpec& spec);

/// E[R] under MF(F) on one fixed grid.
Eigen::Matrix3d mf_mean_on_grid(const MatrixFisherParams& p, const GridSpec& spec);

/// Posterior expectation E[g(R)] under MF(F) on one fixed grid.
double mf_expectation_on_grid(const MatrixFisherParams& p, const GridSpec& spec,
                              const std::function<double(const Eigen::Matrix3d&)>& g);

struct QuadratureOptions {
  double tol = 1e-8;
  int start_n = 16;
  int max_n = 512;
  /// Switch to a mode-centered grid when s1(F) exceeds this.
  double concentration_switch = 50.0;
  /// Box half-width in posterior standard deviations of the weakest axis.
  double halfwidth_sigmas = 8.0;
};

struct MomentEstimate {
  Eigen::Matrix3d mean;
  /// Grid of the returned (finest) estimate.
  GridSpec grid;
  /// Max per-entry change against the previous resolution.
  double last_change = 0.0;
};

/// Adaptive E[R]: doubles n from `start_n` until successive estimates agree
/// within `tol` per entry. Throws NoConvergence past `max_n`.
MomentEstimate mf_mean_quadrature_detailed(const MatrixFisherParams& p,
                                           const QuadratureOptions& opts);

Eigen::Matrix3d mf_mean_quadrature(const MatrixFisherParams& p, double tol);

/// Posterior mean of R o x given y = R o x + sigma * eta, by quadrature.
PointCloud oracle_conditional_denoiser(const PointCloud& y, const PointCloud& x,
                                       double sigma, double tol);

}  // namespace so3denoise
