#include "so3denoise/selftest.hpp"

#include "so3denoise/align.hpp"
#include "so3denoise/diffusion.hpp"
#include "so3denoise/estimators.hpp"
#include "so3denoise/quad.hpp"
#include "so3denoise/sofisher.hpp"
#include "so3denoise/trajectory.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <string>

namespace so3denoise {

namespace {

struct Check {
  std::string name;
  double value;
  double limit;
};

PointCloud random_cloud(Rng& rng, int n) { return center(sample_gaussian_cloud(rng, n)); }

double kabsch_commutation(int cases, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const PointCloud x = random_cloud(rng, 8);
    const PointCloud y = random_cloud(rng, 8);
    const Rotation r = sample_haar(rng);
    const Eigen::Matrix3d lhs = kabsch(rotate(r, y), rotate(r, x)).matrix();
    const Eigen::Matrix3d rhs = r.matrix() * kabsch(y, x).matrix() * r.matrix().transpose();
    worst = std::max(worst, (lhs - rhs).norm());
  }
  return worst;
}

double kabsch_recovery(int cases, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const PointCloud x = random_cloud(rng, 8);
    const Rotation r = sample_haar(rng);
    worst = std::max(worst, (kabsch(rotate(r, x), x).matrix() - r.matrix()).norm());
  }
  return worst;
}

double svd_reconstruction(int cases, Rng& rng) {
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    Eigen::Matrix3d a;
    for (int k = 0; k < 9; ++k) a(k / 3, k % 3) = normal(rng);
    const ProperSvd s = proper_svd(a);
    const Eigen::Matrix3d back = s.u.matrix() * s.s.asDiagonal() * s.v.matrix().transpose();
    double err = (back - a).norm() / a.norm();
    if (!s.u.is_valid(1e-10) || !s.v.is_valid(1e-10)) err = 1.0;
    if (!(s.s(0) >= s.s(1) && s.s(1) >= std::abs(s.s(2)))) err = 1.0;
    worst = std::max(worst, err);
  }
  return worst;
}

double grid_moments() {
  const So3Grid grid = so3_grid_global(16);
  double sum_w = 0.0, tr2 = 0.0;
  Eigen::Matrix3d mean = Eigen::Matrix3d::Zero();
  for (const GridNode& node : grid.nodes) {
    sum_w += node.weight;
    mean += node.weight * node.r.matrix();
    const double t = node.r.matrix().trace();
    tr2 += node.weight * t * t;
  }
  return std::max({std::abs(sum_w - 1.0), mean.cwiseAbs().maxCoeff(), std::abs(tr2 - 1.0)});
}

double laplace_vs_oracle_isotropic() {
  // a = I, sigma^2 = 0.04: first order should agree to a few 1e-4.
  const double sigma = 0.2;
  const Eigen::Matrix3d exact = mf_mean_quadrature({Eigen::Matrix3d::Identity() / (sigma * sigma)}, 1e-10);
  const Eigen::Matrix3d first = mf_mean_laplace(Eigen::Matrix3d::Identity(), sigma, ExpansionOrder::One);
  return (exact - first).cwiseAbs().maxCoeff();
}

double oracle_equivariance(int cases, Rng& rng) {
  constexpr double tol = 1e-8;
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const PointCloud x = random_cloud(rng, 6);
    const double sigma = 0.3 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng);
    const PointCloud y = noise_sample(x, sigma, rng).y;
    const Rotation r = sample_haar(rng);
    const PointCloud lhs = oracle_conditional_denoiser(rotate(r, y), x, sigma, tol);
    const PointCloud rhs = rotate(r, oracle_conditional_denoiser(y, x, sigma, tol));
    const PointCloud cond = oracle_conditional_denoiser(y, rotate(r, x), sigma, tol);
    const PointCloud base = oracle_conditional_denoiser(y, x, sigma, tol);
    const double scale = 2.0 * tol * std::sqrt(frobenius_norm_sq(x));
    worst = std::max({worst, (lhs - rhs).norm() / scale, (cond - base).norm() / scale});
  }
  return worst;
}

double gradient_check(int cases, Rng& rng) {
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    MlpDenoiser m = MlpDenoiser::random(4, 8, 1.0, rng);
    m.b1 = sample_gaussian_cloud(rng, 8).col(0) * 0.1;
    std::vector<PointCloud> ys, ts;
    for (int b = 0; b < 3; ++b) {
      ys.push_back(random_cloud(rng, 4));
      ts.push_back(random_cloud(rng, 4));
    }
    const double sigma = 0.7;
    const LossAndGrad lg = loss_and_grad_targets(m, ys, ts, sigma);
    const std::vector<double> analytic = lg.grads.flatten();
    std::vector<double> params = m.flatten();
    constexpr double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + h;
      m.unflatten(params);
      const double up = mlp_loss(m, ys, ts, sigma);
      params[i] = saved - h;
      m.unflatten(params);
      const double down = mlp_loss(m, ys, ts, sigma);
      params[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
      worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    m.unflatten(params);
  }
  return worst;
}

double ddim_closed_forms(Rng& rng) {
  const DdimSchedule schedule({2.0, 1.0, 0.5, 0.0});
  Rng copy = rng;
  const PointCloud start = center(2.0 * sample_gaussian_cloud(copy, 5));
  Rng r1 = rng;
  const PointCloud identity = ddim_sample([](const PointCloud& y, double) { return y; }, schedule, 5, r1);
  Rng r2 = rng;
  const PointCloud zero = ddim_sample(
      [](const PointCloud& y, double) { return PointCloud(PointCloud::Zero(y.rows(), 3)); },
      schedule, 5, r2);
  return std::max((identity - start).cwiseAbs().maxCoeff(), zero.cwiseAbs().maxCoeff());
}

}  // namespace

bool run_selftest(bool fast, std::ostream& out) {
  Rng rng(20240601);
  const int n = fast ? 20 : 200;
  std::vector<Check> checks;
  checks.push_back({"proper_svd reconstruction (relative)", svd_reconstruction(n, rng), 1e-10});
  checks.push_back({"kabsch exact recovery", kabsch_recovery(n, rng), 1e-10});
  checks.push_back({"kabsch commutes with augmentation", kabsch_commutation(n, rng), 1e-10});
  checks.push_back({"Haar grid moments n=16", grid_moments(), 1e-8});
  checks.push_back({"first-order moment vs oracle (a=I, sigma^2=0.04)", laplace_vs_oracle_isotropic(), 5e-4});
  checks.push_back({"oracle equivariance / invariance (units of 2 tol |x|)",
                    oracle_equivariance(fast ? 3 : 20, rng), 1.0});
  checks.push_back({"MLP gradient vs finite differences", gradient_check(fast ? 2 : 10, rng), 1e-5});
  checks.push_back({"DDIM identity/zero denoiser closed forms", ddim_closed_forms(rng), 1e-12});

  bool ok = true;
  for (const Check& c : checks) {
    const bool pass = std::isfinite(c.value) && c.value < c.limit;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << c.name << ": " << c.value << " (limit " << c.limit << ")\n";
  }
  out << (ok ? "selftest passed" : "selftest FAILED") << '\n';
  return ok;
}

}  // namespace so3denoise
