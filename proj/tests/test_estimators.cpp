#include "oracles.hpp"

#include "so3denoise/align.hpp"
#include "so3denoise/error.hpp"
#include "so3denoise/estimators.hpp"
#include "so3denoise/sofisher.hpp"
#include "so3denoise/trajectory.hpp"

#include <doctest.h>

#include <sstream>

using namespace so3denoise;
using so3denoise::testing::random_centered;

namespace {

// Cloud with x^T x = I: orthonormal columns.
PointCloud whitened(Rng& rng, int n) {
  const PointCloud x = random_centered(rng, n);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(x.transpose() * x);
  const Eigen::Matrix3d inv_sqrt = eig.operatorInverseSqrt();
  return x * inv_sqrt;
}

}  // namespace

TEST_CASE("estimator names round-trip") {
  for (auto k : {EstimatorKind::Aug, EstimatorKind::Order0, EstimatorKind::Order1,
                 EstimatorKind::Order2, EstimatorKind::Oracle}) {
    CHECK(parse_estimator_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_estimator_kind("order3"), InvalidArgument);
}

TEST_CASE("estimator_target") {
  Rng rng(41);
  const PointCloud x = random_centered(rng, 8);

  SUBCASE("aug needs r_aug and only aug") {
    const Rotation r = sample_haar(rng);
    CHECK(estimator_target(EstimatorKind::Aug, x, x, 0.1, r) == rotate(r, x));
    CHECK_THROWS_AS(estimator_target(EstimatorKind::Aug, x, x, 0.1), InvalidArgument);
    CHECK_THROWS_AS(estimator_target(EstimatorKind::Order0, x, x, 0.1, r), InvalidArgument);
  }

  SUBCASE("order zero with y = x returns x") {
    CHECK((estimator_target(EstimatorKind::Order0, x, x, 0.01) - x).norm() < 1e-13);
  }

  SUBCASE("order one shrinks a whitened cloud uniformly") {
    const PointCloud w = whitened(rng, 8);
    const PointCloud t = estimator_target(EstimatorKind::Order1, w, w, 0.1);
    CHECK((t - 0.995 * w).norm() < 1e-13);
  }

  SUBCASE("higher orders approach the oracle") {
    int ordered = 0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
      const PointCloud xi = random_centered(rng, 8);
      const double sigma = 0.1 * std::sqrt(frobenius_norm_sq(xi) / 8.0);
      const PointCloud y = center(rotate(sample_haar(rng), xi) + sigma * random_centered(rng, 8));
      const double e0 = mse_to_oracle(EstimatorKind::Order0, y, xi, sigma);
      const double e1 = mse_to_oracle(EstimatorKind::Order1, y, xi, sigma);
      const double e2 = mse_to_oracle(EstimatorKind::Order2, y, xi, sigma);
      if (e2 < e1 && e1 < e0) ++ordered;
    }
    CHECK(ordered > trials / 2);
  }

  SUBCASE("equivariance in y and invariance in x of the expansion targets") {
    for (int i = 0; i < 50; ++i) {
      const PointCloud xi = random_centered(rng, 8);
      const PointCloud y = center(rotate(sample_haar(rng), xi) + 0.3 * random_centered(rng, 8));
      const Rotation r = sample_haar(rng);
      for (auto k : {EstimatorKind::Order0, EstimatorKind::Order1, EstimatorKind::Order2}) {
        const PointCloud base = estimator_target(k, y, xi, 0.3);
        CHECK((estimator_target(k, rotate(r, y), xi, 0.3) - rotate(r, base)).norm() < 1e-9);
        CHECK((estimator_target(k, y, rotate(r, xi), 0.3) - base).norm() < 1e-9);
      }
    }
  }

  SUBCASE("order zero is the order-one assembly with the correction zeroed") {
    const PointCloud y = center(rotate(sample_haar(rng), x) + 0.2 * random_centered(rng, 8));
    const ProperSvd svd = proper_svd(y.transpose() * x);
    const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
    const PointCloud zeroed = apply_matrix(assemble_moment(svd, 0.2, zero, zero), x);
    CHECK(zeroed == estimator_target(EstimatorKind::Order0, y, x, 0.2));
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(estimator_target(EstimatorKind::Order1, x, random_centered(rng, 5), 0.1), InvalidArgument);
    CHECK_THROWS_AS(estimator_target(EstimatorKind::Order1, x, x, 0.0), InvalidArgument);
    PointCloud line(3, 3);
    line << -1, 0, 0, 0, 0, 0, 1, 0, 0;
    CHECK_THROWS_AS(estimator_target(EstimatorKind::Order1, line, line, 0.1), ExpansionSingular);
    CHECK_NOTHROW(estimator_target(EstimatorKind::Order0, line, line, 0.1));
  }
}

TEST_CASE("mse_to_oracle") {
  Rng rng(42);
  const PointCloud x = center(synth_trajectory(8, 1, 0.0, 3).frames.front());
  const PointCloud y = center(rotate(sample_haar(rng), x) + 0.2 * random_centered(rng, 8));
  CHECK(mse_to_oracle(EstimatorKind::Oracle, y, x, 0.2) == 0.0);
  CHECK(mse_to_oracle(EstimatorKind::Order0, y, x, 0.2) > 0.0);

  const PointCloud y_sharp = center(rotate(sample_haar(rng), x) + 1e-3 * random_centered(rng, 8));
  for (auto k : {EstimatorKind::Order0, EstimatorKind::Order1, EstimatorKind::Order2}) {
    CHECK(mse_to_oracle(k, y_sharp, x, 1e-3) < 1e-12);
  }
}

TEST_CASE("error_sweep") {
  const PointCloud x = synth_trajectory(8, 1, 0.0, 5).frames.front();

  SUBCASE("one sigma, one draw: four reproducible records") {
    const auto a = error_sweep(x, {0.1}, 1, 99);
    const auto b = error_sweep(x, {0.1}, 1, 99);
    REQUIRE(a.size() == 4);
    std::ostringstream sa, sb;
    write_sweep_csv(sa, a);
    write_sweep_csv(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(a[0].kind == EstimatorKind::Aug);
    CHECK(a[3].kind == EstimatorKind::Order2);
    for (const SweepRecord& r : a) {
      CHECK(r.n_samples == 1);
      CHECK(r.n_excluded == 0);
      CHECK(r.stderr_mse == 0.0);
      CHECK(r.mean_mse >= 0.0);
    }
  }

  SUBCASE("ordering, mode check and slope") {
    const std::vector<double> sigmas{0.05, 0.08, 0.12, 0.2, 0.3};
    const auto recs = error_sweep(x, sigmas, 16, 7);
    CHECK(mode_ordering_violations(recs).empty());
    std::vector<double> order0;
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
      const SweepRecord& aug = recs[4 * i];
      const SweepRecord& o0 = recs[4 * i + 1];
      const SweepRecord& o1 = recs[4 * i + 2];
      const SweepRecord& o2 = recs[4 * i + 3];
      CHECK(aug.mean_mse >= o0.mean_mse);
      CHECK(o1.mean_mse <= o0.mean_mse);
      CHECK(o2.mean_mse <= o1.mean_mse);
      order0.push_back(o0.mean_mse);
    }
    const double slope = so3denoise::testing::loglog_slope(sigmas, order0);
    CHECK(slope == doctest::Approx(4.0).epsilon(0.25));
  }

  SUBCASE("thread count does not change results") {
    setenv("SO3_DENOISE_THREADS", "1", 1);
    const auto one = error_sweep(x, {0.2, 0.4}, 3, 11);
    setenv("SO3_DENOISE_THREADS", "3", 1);
    const auto three = error_sweep(x, {0.2, 0.4}, 3, 11);
    unsetenv("SO3_DENOISE_THREADS");
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i].mean_mse == three[i].mean_mse);
  }

  SUBCASE("excluded samples are counted") {
    PointCloud line(4, 3);
    line << -1.5, 0, 0, -0.5, 0, 0, 0.5, 0, 0, 1.5, 0, 0;
    const auto recs = error_sweep(line, {0.5}, 3, 1);
    // collinear x: y^T x has rank one, the expansion is singular
    CHECK(recs[2].n_excluded == 3);
    CHECK(recs[2].n_samples == 0);
    CHECK(recs[1].n_samples == 3);
  }

  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(error_sweep(x, {0.1}, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(error_sweep(x, {0.2, 0.1}, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(error_sweep(x, {-0.1}, 1, 1), InvalidArgument);
  }
}

TEST_CASE("sweep CSV round-trip") {
  std::vector<SweepRecord> recs;
  Rng rng(43);
  std::uniform_real_distribution<double> u(1e-20, 10.0);
  for (int i = 0; i < 20; ++i) {
    recs.push_back({u(rng), static_cast<EstimatorKind>(i % 5), u(rng), u(rng), i + 1, i % 3,
                    0xFFFFFFFFFFFFull + i});
  }
  std::stringstream ss;
  write_sweep_csv(ss, recs);
  CHECK(ss.str().rfind("sigma,kind,mean_mse,stderr,n_samples,n_excluded,seed\n", 0) == 0);
  const auto back = read_sweep_csv(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].sigma == recs[i].sigma);
    CHECK(back[i].kind == recs[i].kind);
    CHECK(back[i].mean_mse == recs[i].mean_mse);
    CHECK(back[i].stderr_mse == recs[i].stderr_mse);
    CHECK(back[i].n_samples == recs[i].n_samples);
    CHECK(back[i].n_excluded == recs[i].n_excluded);
    CHECK(back[i].seed == recs[i].seed);
  }

  std::istringstream bad_header("sigma,kind\n");
  CHECK_THROWS_AS(read_sweep_csv(bad_header), ParseError);
  std::istringstream bad_row(std::string(kSweepCsvHeader) + "\n0.1,order9,1,1,1,0,1\n");
  try {
    (void)read_sweep_csv(bad_row);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("averaging_offset_check") {
  Rng rng(44);
  const double tol = 1e-8;
  const PointCloud x = random_centered(rng, 6);
  const double sigma = 0.6;
  const PointCloud y = center(rotate(sample_haar(rng), x) + sigma * random_centered(rng, 6));

  const OffsetCheck single = averaging_offset_check(y, x, sigma, {x}, tol);
  CHECK(single.spread == 0.0);
  CHECK(single.offset >= 0.0);

  const OffsetCheck many =
      averaging_offset_check(y, x, sigma, {x, PointCloud::Zero(6, 3), random_centered(rng, 6) * 3.0}, tol);
  CHECK(many.spread < 4 * tol * frobenius_norm_sq(x));
  CHECK(many.offset >= 0.0);
  CHECK(many.offset == doctest::Approx(single.offset).epsilon(1e-10));
  CHECK_THROWS_AS(averaging_offset_check(y, x, sigma, {}, tol), InvalidArgument);
}
