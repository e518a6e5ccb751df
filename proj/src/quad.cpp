#include "so3denoise/quad.hpp"

#include "so3denoise/error.hpp"
#include "so3denoise/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace so3denoise {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kBlockSize = 8192;

void check_spec(const GridSpec& spec) {
  if (spec.n < 2) throw InvalidArgument("SO(3) grid: n must be >= 2");
  if (spec.scheme == GridScheme::ModeCentered &&
      !(spec.halfwidth > 0.0 && spec.halfwidth <= kPi)) {
    throw InvalidArgument("SO(3) grid: halfwidth must lie in (0, pi]");
  }
}

// Generates grid nodes by index. Global nodes are returned as R itself;
// mode-centered nodes as the local offset D = exp(theta) - I so that
// R = mode * (I + D) and sums of D keep full precision near the mode.
// Weights are raw Haar cell masses (they sum to the covered Haar mass).
class NodeSource {
 public:
  explicit NodeSource(const GridSpec& spec) : spec_(spec) {
    check_spec(spec);
    const int n = spec.n;
    gauss_legendre(n, gl_x_, gl_w_);
    if (spec.scheme == GridScheme::GlobalEuler) {
      cos_a_.resize(n);
      sin_a_.resize(n);
      for (int i = 0; i < n; ++i) {
        const double a = 2.0 * kPi * i / n;
        cos_a_[i] = std::cos(a);
        sin_a_[i] = std::sin(a);
      }
      sin_b_.resize(n);
      for (int i = 0; i < n; ++i) sin_b_[i] = std::sqrt(std::max(0.0, 1.0 - gl_x_[i] * gl_x_[i]));
    } else {
      for (int i = 0; i < n; ++i) {
        gl_x_[i] *= spec.halfwidth;
        gl_w_[i] *= spec.halfwidth;
      }
    }
  }

  std::size_t size() const {
    const auto n = static_cast<std::size_t>(spec_.n);
    return n * n * n;
  }

  bool local_frame() const { return spec_.scheme == GridScheme::ModeCentered; }

  // Returns false for nodes outside the exp-map ball.
  bool node(std::size_t idx, Eigen::Matrix3d& r, double& weight) const {
    const auto n = static_cast<std::size_t>(spec_.n);
    const std::size_t k = idx % n;
    const std::size_t j = (idx / n) % n;
    const std::size_t i = idx / (n * n);
    if (spec_.scheme == GridScheme::GlobalEuler) {
      // R = Rz(alpha_i) Ry(beta_j) Rz(gamma_k)
      const double ca = cos_a_[i], sa = sin_a_[i];
      const double cb = gl_x_[j], sb = sin_b_[j];
      const double cg = cos_a_[k], sg = sin_a_[k];
      const Eigen::Vector3d c0(ca * cb, sa * cb, -sb);
      const Eigen::Vector3d c1(-sa, ca, 0.0);
      r.col(0) = c0 * cg + c1 * sg;
      r.col(1) = c1 * cg - c0 * sg;
      r.col(2) = Eigen::Vector3d(ca * sb, sa * sb, cb);
      weight = 0.5 * gl_w_[j] / static_cast<double>(n * n);
      return true;
    }
    const Eigen::Vector3d theta(gl_x_[i], gl_x_[j], gl_x_[k]);
    if (theta.squaredNorm() > kPi * kPi) return false;
    r = exp_map_minus_identity(theta);
    weight = gl_w_[i] * gl_w_[j] * gl_w_[k] * haar_density_expmap(theta);
    return true;
  }

  Eigen::Matrix3d to_global(const Eigen::Matrix3d& r) const {
    if (!local_frame()) return r;
    return spec_.mode.matrix() * (Eigen::Matrix3d::Identity() + r);
  }

 private:
  GridSpec spec_;
  std::vector<double> gl_x_, gl_w_;
  std::vector<double> cos_a_, sin_a_, sin_b_;
};

struct Accumulator {
  double mass = 0.0;            // sum of w * exp(shifted exponent)
  Eigen::Matrix3d first = Eigen::Matrix3d::Zero();  // same, times node matrix
  double haar = 0.0;            // sum of raw weights
};

// Tilted sums over all nodes. The exponent is shifted by its maximum over
// SO(3), s1 + s2 + s3 of the proper SVD, so no term overflows.
Accumulator accumulate(const MatrixFisherParams& p, const GridSpec& spec) {
  const NodeSource source(spec);
  const ProperSvd svd = proper_svd(p.f);
  const double shift = svd.s.sum();
  // In the local frame Tr[F^T mode (I + D)] = Tr[F^T mode] + Tr[G^T D].
  const Eigen::Matrix3d g = source.local_frame() ? Eigen::Matrix3d(spec.mode.matrix().transpose() * p.f)
                                                 : p.f;
  const double base = source.local_frame() ? g.trace() - shift : -shift;

  const std::size_t total = source.size();
  const std::size_t n_blocks = (total + kBlockSize - 1) / kBlockSize;
  std::vector<Accumulator> blocks(n_blocks);
  parallel_for(n_blocks, [&](std::size_t b) {
    Accumulator acc;
    Eigen::Matrix3d r;
    double w = 0.0;
    const std::size_t end = std::min(total, (b + 1) * kBlockSize);
    for (std::size_t idx = b * kBlockSize; idx < end; ++idx) {
      if (!source.node(idx, r, w)) continue;
      const double e = w * std::exp(base + g.cwiseProduct(r).sum());
      acc.mass += e;
      acc.first += e * r;
      acc.haar += w;
    }
    blocks[b] = acc;
  });
  Accumulator out;
  for (const Accumulator& acc : blocks) {
    out.mass += acc.mass;
    out.first += acc.first;
    out.haar += acc.haar;
  }
  return out;
}

double max_abs_diff(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw InvalidArgument("gauss_legendre: n must be positive");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double step = p0 / dp;
      z -= step;
      if (std::abs(step) < 1e-16) break;
    }
    // recompute the derivative at the converged root
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    nodes[i] = -z;
    nodes[n - 1 - i] = z;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
}

So3Grid materialize(const GridSpec& spec) {
  const NodeSource source(spec);
  So3Grid grid;
  grid.spec = spec;
  grid.nodes.reserve(source.size());
  double mass = 0.0;
  Eigen::Matrix3d r;
  double w = 0.0;
  for (std::size_t idx = 0; idx < source.size(); ++idx) {
    if (!source.node(idx, r, w)) continue;
    grid.nodes.push_back({Rotation(source.to_global(r)), w});
    mass += w;
  }
  for (GridNode& node : grid.nodes) node.weight /= mass;
  grid.haar_mass = mass;
  return grid;
}

So3Grid so3_grid_global(int n) {
  GridSpec spec;
  spec.scheme = GridScheme::GlobalEuler;
  spec.n = n;
  So3Grid grid = materialize(spec);
  grid.haar_mass = 1.0;
  return grid;
}

So3Grid so3_grid_mode_centered(const Rotation& mode, double halfwidth, int n) {
  GridSpec spec;
  spec.scheme = GridScheme::ModeCentered;
  spec.n = n;
  spec.mode = mode;
  spec.halfwidth = halfwidth;
  return materialize(spec);
}

double mf_log_partition(const MatrixFisherParams& p, const So3Grid& grid) {
  if (grid.nodes.empty()) throw InvalidArgument("mf_log_partition: empty grid");
  std::vector<double> t(grid.nodes.size());
  double t_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = mf_log_density_unnorm(p, grid.nodes[i].r);
    t_max = std::max(t_max, t[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) sum += grid.nodes[i].weight * std::exp(t[i] - t_max);
  return t_max + std::log(sum) + std::log(grid.haar_mass);
}

double mf_log_partition(const MatrixFisherParams& p, const GridSpec& spec) {
  const Accumulator acc = accumulate(p, spec);
  return std::log(acc.mass) + proper_svd(p.f).s.sum();
}

Eigen::Matrix3d mf_mean_on_grid(const MatrixFisherParams& p, const GridSpec& spec) {
  const Accumulator acc = accumulate(p, spec);
  const Eigen::Matrix3d local = acc.first / acc.mass;
  if (spec.scheme == GridScheme::ModeCentered) {
    return spec.mode.matrix() + spec.mode.matrix() * local;
  }
  return local;
}

double mf_expectation_on_grid(const MatrixFisherParams& p, const GridSpec& spec,
                              const std::function<double(const Eigen::Matrix3d&)>& g) {
  const NodeSource source(spec);
  const double shift = proper_svd(p.f).s.sum();
  const std::size_t total = source.size();
  const std::size_t n_blocks = (total + kBlockSize - 1) / kBlockSize;
  std::vector<std::pair<double, double>> blocks(n_blocks);
  parallel_for(n_blocks, [&](std::size_t b) {
    double mass = 0.0, moment = 0.0;
    Eigen::Matrix3d r;
    double w = 0.0;
    const std::size_t end = std::min(total, (b + 1) * kBlockSize);
    for (std::size_t idx = b * kBlockSize; idx < end; ++idx) {
      if (!source.node(idx, r, w)) continue;
      const Eigen::Matrix3d rg = source.to_global(r);
      const double e = w * std::exp(p.f.cwiseProduct(rg).sum() - shift);
      mass += e;
      moment += e * g(rg);
    }
    blocks[b] = {mass, moment};
  });
  double mass = 0.0, moment = 0.0;
  for (const auto& [m, v] : blocks) {
    mass += m;
    moment += v;
  }
  return moment / mass;
}

MomentEstimate mf_mean_quadrature_detailed(const MatrixFisherParams& p,
                                           const QuadratureOptions& opts) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("mf_mean_quadrature: tol must be positive");
  if (!p.f.allFinite()) throw InvalidArgument("mf_mean_quadrature: non-finite F");
  const ProperSvd svd = proper_svd(p.f);

  GridSpec spec;
  spec.n = std::max(2, opts.start_n);
  // The Gaussian limit of the posterior in the frame R = U exp(theta) V^T
  // has precisions s_i + s_j; size the box by the weakest one so that it
  // also covers the broadest direction. Fall back to the global grid when
  // that box would not fit inside the exp-map ball.
  const double weakest = std::min({svd.s(0) + svd.s(1), svd.s(0) + svd.s(2), svd.s(1) + svd.s(2)});
  if (svd.s(0) > opts.concentration_switch && weakest > 0.0) {
    const double h = opts.halfwidth_sigmas / std::sqrt(weakest);
    if (h <= kPi / std::sqrt(3.0)) {
      spec.scheme = GridScheme::ModeCentered;
      spec.mode = Rotation(svd.u.matrix() * svd.v.matrix().transpose());
      spec.halfwidth = h;
    }
  }

  Eigen::Matrix3d older = mf_mean_on_grid(p, spec);
  Eigen::Matrix3d previous = older;
  for (;;) {
    const int next = spec.n * 2;
    if (next > opts.max_n) {
      throw NoConvergence("mf_mean_quadrature: no convergence up to n = " +
                              std::to_string(spec.n),
                          older, previous);
    }
    spec.n = next;
    const Eigen::Matrix3d current = mf_mean_on_grid(p, spec);
    const double change = max_abs_diff(current, previous);
    if (change < opts.tol) return {current, spec, change};
    older = previous;
    previous = current;
  }
}

Eigen::Matrix3d mf_mean_quadrature(const MatrixFisherParams& p, double tol) {
  QuadratureOptions opts;
  opts.tol = tol;
  return mf_mean_quadrature_detailed(p, opts).mean;
}

PointCloud oracle_conditional_denoiser(const PointCloud& y, const PointCloud& x,
                                       double sigma, double tol) {
  const MatrixFisherParams p = mf_from_observation(y, x, sigma);
  return apply_matrix(mf_mean_quadrature(p, tol), x);
}

}  // namespace so3denoise
