#include "oracles.hpp"

#include "so3denoise/error.hpp"
#include "so3denoise/geom.hpp"

#include <doctest.h>

#include <array>
#include <numbers>

using namespace so3denoise;
using so3denoise::testing::random_centered;
using so3denoise::testing::random_matrix;

namespace {
PointCloud cloud(std::initializer_list<std::array<double, 3>> rows) {
  PointCloud pc(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    pc.row(i++) << r[0], r[1], r[2];
  }
  return pc;
}
}  // namespace

TEST_CASE("center subtracts the centroid") {
  const PointCloud centered = cloud({{1, 0, 0}, {-1, 0, 0}});
  CHECK(center(centered) == centered);
  CHECK(center(cloud({{2, 0, 0}, {0, 0, 0}})) == centered);

  Rng rng(1);
  PointCloud pc = random_centered(rng, 7);
  pc.rowwise() += Eigen::RowVector3d(3.0, -2.0, 5.0);
  const PointCloud once = center(pc);
  CHECK(once.colwise().sum().cwiseAbs().maxCoeff() < 1e-12 * 7 * pc.cwiseAbs().maxCoeff());
  CHECK((center(once) - once).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rotate is a left group action") {
  Rng rng(2);
  const PointCloud pc = random_centered(rng, 5);
  CHECK(rotate(Rotation::identity(), pc) == pc);
  const Rotation r1 = sample_haar(rng), r2 = sample_haar(rng);
  CHECK((rotate(r1 * r2, pc) - rotate(r1, rotate(r2, pc))).norm() < 1e-13);

  const Rotation flip_x(Eigen::Vector3d(1, -1, -1).asDiagonal());
  CHECK(rotate(flip_x, cloud({{0, 1, 0}})) == cloud({{0, -1, 0}}));
}

TEST_CASE("frobenius_norm_sq") {
  CHECK(frobenius_norm_sq(PointCloud::Zero(3, 3)) == 0.0);
  CHECK(frobenius_norm_sq(cloud({{1, 0, 0}, {0, 2, 0}})) == 5.0);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const PointCloud pc = random_centered(rng, 6);
    const double base = frobenius_norm_sq(pc);
    CHECK(std::abs(frobenius_norm_sq(rotate(sample_haar(rng), pc)) - base) <= 1e-12 * base);
  }
}

TEST_CASE("sample_haar produces rotations with Haar moments") {
  Rng rng(4);
  constexpr int n = 1'000'000;
  Eigen::Matrix3d mean = Eigen::Matrix3d::Zero();
  double tr = 0.0, tr2 = 0.0;
  bool all_valid = true;
  for (int i = 0; i < n; ++i) {
    const Rotation r = sample_haar(rng);
    if (i < 1000) all_valid = all_valid && r.is_valid(1e-12);
    mean += r.matrix();
    const double t = r.matrix().trace();
    tr += t;
    tr2 += t * t;
  }
  CHECK(all_valid);
  CHECK((mean / n).cwiseAbs().maxCoeff() < 5e-3);
  CHECK(std::abs(tr / n) < 5e-3);
  CHECK(std::abs(tr2 / n - 1.0) < 1e-2);
}

TEST_CASE("sample_haar is left-invariant (KS on the trace)") {
  Rng rng(5);
  const Rotation r0 = sample_haar(rng);
  std::vector<double> plain, shifted;
  for (int i = 0; i < 100'000; ++i) plain.push_back(sample_haar(rng).matrix().trace());
  for (int i = 0; i < 100'000; ++i) shifted.push_back((r0 * sample_haar(rng)).matrix().trace());
  CHECK(so3denoise::testing::ks_two_sample_p(plain, shifted) > 0.01);
}

TEST_CASE("rotation composition stays in SO(3)") {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) CHECK((sample_haar(rng) * sample_haar(rng)).is_valid(1e-12));
}

TEST_CASE("proper_svd") {
  SUBCASE("diagonal inputs") {
    const ProperSvd a = proper_svd(Eigen::Vector3d(3, 2, 1).asDiagonal());
    CHECK(a.s.isApprox(Eigen::Vector3d(3, 2, 1)));
    CHECK((a.u.matrix() * a.v.matrix().transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-14);

    const ProperSvd b = proper_svd(Eigen::Vector3d(3, 2, -1).asDiagonal());
    CHECK(b.s.isApprox(Eigen::Vector3d(3, 2, -1)));
    CHECK((b.u.matrix() * b.v.matrix().transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-14);
  }

  SUBCASE("random matrices reconstruct with proper factors") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
      const Eigen::Matrix3d a = random_matrix(rng);
      const ProperSvd s = proper_svd(a);
      const Eigen::Matrix3d back = s.u.matrix() * s.s.asDiagonal() * s.v.matrix().transpose();
      CHECK((back - a).norm() / a.norm() < 1e-10);
      CHECK(s.u.is_valid(1e-12));
      CHECK(s.v.is_valid(1e-12));
      CHECK(s.s(0) >= s.s(1));
      CHECK(s.s(1) >= std::abs(s.s(2)));
      CHECK((s.s(2) < 0) == (a.determinant() < 0));
    }
  }

  SUBCASE("ill-conditioned input") {
    Rng rng(8);
    const Rotation p = sample_haar(rng), q = sample_haar(rng);
    const Eigen::Matrix3d a = p.matrix() * Eigen::Vector3d(1.0, 1e-3, 1e-6).asDiagonal() *
                              q.matrix().transpose();
    const ProperSvd s = proper_svd(a);
    CHECK((s.u.matrix() * s.s.asDiagonal() * s.v.matrix().transpose() - a).norm() / a.norm() < 1e-10);
  }

  SUBCASE("non-finite input") {
    Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
    a(1, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(proper_svd(a), InvalidArgument);
  }
}

TEST_CASE("exp_map") {
  CHECK(exp_map(Eigen::Vector3d::Zero()).matrix() == Eigen::Matrix3d::Identity());
  const Eigen::Matrix3d half_turn = exp_map({std::numbers::pi, 0, 0}).matrix();
  CHECK((half_turn - Eigen::Matrix3d(Eigen::Vector3d(1, -1, -1).asDiagonal())).norm() < 1e-15);

  Rng rng(9);
  std::uniform_real_distribution<double> u(-1.8, 1.8);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d t(u(rng), u(rng), u(rng));
    if (t.norm() > std::numbers::pi) t *= std::numbers::pi / t.norm();
    const Rotation r = exp_map(t);
    CHECK(r.is_valid(1e-12));
    CHECK((r.matrix() * exp_map(-t).matrix() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    // the rotation axis is fixed
    CHECK((r.matrix() * t - t).norm() < 1e-12);
  }
  // tiny angles use the series branch
  const Eigen::Vector3d tiny(1e-6, -2e-6, 5e-7);
  CHECK((exp_map(tiny).matrix() - (Eigen::Matrix3d::Identity() + skew(tiny))).norm() < 1e-11);
}

TEST_CASE("haar_density_expmap") {
  constexpr double pi = std::numbers::pi;
  CHECK(haar_density_expmap(Eigen::Vector3d::Zero()) == doctest::Approx(1.0 / (8 * pi * pi)).epsilon(1e-15));
  CHECK(haar_density_expmap({1e-5, 0, 0}) == doctest::Approx(1.0 / (8 * pi * pi)).epsilon(1e-9));
  CHECK(haar_density_expmap({0, 0, pi}) == doctest::Approx(1.0 / (2 * std::pow(pi, 4))).epsilon(1e-14));
  CHECK_THROWS_AS(haar_density_expmap({0, 3.2, 0}), InvalidArgument);

  // Total mass over the ball by radial quadrature.
  const double mass = so3denoise::testing::simpson(
      [](double r) { return 4 * pi * r * r * haar_density_expmap({r, 0, 0}); }, 0.0, pi, 2000);
  CHECK(std::abs(mass - 1.0) < 1e-6);
}
