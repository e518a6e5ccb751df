#include "so3denoise/estimators.hpp"

#include "so3denoise/align.hpp"
#include "so3denoise/error.hpp"
#include "so3denoise/parallel.hpp"
#include "so3denoise/quad.hpp"
#include "so3denoise/sofisher.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace so3denoise {

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Aug: return "aug";
    case EstimatorKind::Order0: return "order0";
    case EstimatorKind::Order1: return "order1";
    case EstimatorKind::Order2: return "order2";
    case EstimatorKind::Oracle: return "oracle";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(std::string_view name) {
  for (EstimatorKind k : {EstimatorKind::Aug, EstimatorKind::Order0, EstimatorKind::Order1,
                          EstimatorKind::Order2, EstimatorKind::Oracle}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown estimator kind '" + std::string(name) + "'");
}

PointCloud sample_gaussian_cloud(Rng& rng, Eigen::Index n_points) {
  std::normal_distribution<double> normal;
  PointCloud eta(n_points, 3);
  for (Eigen::Index i = 0; i < n_points; ++i)
    for (int j = 0; j < 3; ++j) eta(i, j) = normal(rng);
  return eta;
}

PointCloud estimator_target(EstimatorKind kind, const PointCloud& y, const PointCloud& x,
                            double sigma, const std::optional<Rotation>& r_aug,
                            const TargetOptions& opts) {
  if (y.rows() != x.rows()) throw InvalidArgument("estimator_target: point counts differ");
  if (!(sigma > 0.0)) throw InvalidArgument("estimator_target: sigma must be positive");
  if ((kind == EstimatorKind::Aug) != r_aug.has_value()) {
    throw InvalidArgument("estimator_target: r_aug is required for aug and only for aug");
  }
  const Eigen::Matrix3d a = y.transpose() * x;
  switch (kind) {
    case EstimatorKind::Aug:
      return rotate(*r_aug, x);
    case EstimatorKind::Order0:
      return rotate(kabsch(y, x), x);
    case EstimatorKind::Order1:
      return apply_matrix(mf_mean_laplace(a, sigma, ExpansionOrder::One), x);
    case EstimatorKind::Order2:
      return apply_matrix(mf_mean_laplace(a, sigma, ExpansionOrder::Two), x);
    case EstimatorKind::Oracle:
      return oracle_conditional_denoiser(y, x, sigma, opts.oracle_tol);
  }
  throw InvalidArgument("estimator_target: bad kind");
}

double mse_to_oracle(EstimatorKind kind, const PointCloud& y, const PointCloud& x,
                     double sigma, const std::optional<Rotation>& r_aug,
                     const TargetOptions& opts) {
  if (kind == EstimatorKind::Oracle) return 0.0;
  const PointCloud oracle = estimator_target(EstimatorKind::Oracle, y, x, sigma, {}, opts);
  return (estimator_target(kind, y, x, sigma, r_aug, opts) - oracle).squaredNorm();
}

namespace {

constexpr EstimatorKind kSweepKinds[] = {EstimatorKind::Aug, EstimatorKind::Order0,
                                         EstimatorKind::Order1, EstimatorKind::Order2};
constexpr int kNumSweepKinds = 4;

struct SampleOutcome {
  double mse[kNumSweepKinds] = {};
  bool ok[kNumSweepKinds] = {};
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::vector<SweepRecord> error_sweep(const PointCloud& x_in, const std::vector<double>& sigmas,
                                     int n_noise, std::uint64_t seed,
                                     const SweepOptions& opts) {
  if (n_noise < 1) throw InvalidArgument("error_sweep: n_noise must be >= 1");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0) || (i > 0 && !(sigmas[i] > sigmas[i - 1]))) {
      throw InvalidArgument("error_sweep: sigmas must be positive and ascending");
    }
  }
  const PointCloud x = center(x_in);
  const TargetOptions target_opts{opts.oracle_tol};
  const std::size_t per_sigma = static_cast<std::size_t>(n_noise);
  std::vector<SampleOutcome> outcomes(sigmas.size() * per_sigma);

  parallel_for(outcomes.size(), [&](std::size_t item) {
    const std::size_t si = item / per_sigma;
    const std::size_t k = item % per_sigma;
    const double sigma = sigmas[si];
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(si), static_cast<std::uint32_t>(k)};
    Rng rng(seq);
    const Rotation r_aug = sample_haar(rng);
    const PointCloud eta = sample_gaussian_cloud(rng, x.rows());
    const PointCloud y = center(rotate(r_aug, x) + sigma * eta);

    SampleOutcome& out = outcomes[item];
    PointCloud oracle;
    try {
      oracle = estimator_target(EstimatorKind::Oracle, y, x, sigma, {}, target_opts);
    } catch (const NoConvergence&) {
      return;
    }
    for (int ki = 0; ki < kNumSweepKinds; ++ki) {
      const EstimatorKind kind = kSweepKinds[ki];
      try {
        const std::optional<Rotation> r =
            kind == EstimatorKind::Aug ? std::optional<Rotation>(r_aug) : std::nullopt;
        out.mse[ki] = (estimator_target(kind, y, x, sigma, r, target_opts) - oracle).squaredNorm();
        out.ok[ki] = true;
      } catch (const ExpansionSingular&) {
      } catch (const AlignmentUndefined&) {
      }
    }
  });

  std::vector<SweepRecord> records;
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    for (int ki = 0; ki < kNumSweepKinds; ++ki) {
      SweepRecord rec;
      rec.sigma = sigmas[si];
      rec.kind = kSweepKinds[ki];
      rec.seed = seed;
      double sum = 0.0;
      for (std::size_t k = 0; k < per_sigma; ++k) {
        const SampleOutcome& o = outcomes[si * per_sigma + k];
        if (o.ok[ki]) {
          sum += o.mse[ki];
          ++rec.n_samples;
        } else {
          ++rec.n_excluded;
        }
      }
      if (rec.n_samples > 0) {
        rec.mean_mse = sum / static_cast<double>(rec.n_samples);
        double ss = 0.0;
        for (std::size_t k = 0; k < per_sigma; ++k) {
          const SampleOutcome& o = outcomes[si * per_sigma + k];
          if (o.ok[ki]) ss += (o.mse[ki] - rec.mean_mse) * (o.mse[ki] - rec.mean_mse);
        }
        if (rec.n_samples > 1) {
          const auto n = static_cast<double>(rec.n_samples);
          rec.stderr_mse = std::sqrt(ss / (n - 1.0) / n);
        }
      }
      records.push_back(rec);
    }
  }
  return records;
}

std::vector<double> mode_ordering_violations(const std::vector<SweepRecord>& records) {
  std::vector<double> out;
  for (const SweepRecord& aug : records) {
    if (aug.kind != EstimatorKind::Aug) continue;
    for (const SweepRecord& o0 : records) {
      if (o0.kind == EstimatorKind::Order0 && o0.sigma == aug.sigma &&
          aug.mean_mse < o0.mean_mse) {
        out.push_back(aug.sigma);
      }
    }
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRecord>& records) {
  out << kSweepCsvHeader << '\n';
  for (const SweepRecord& r : records) {
    out << format_double(r.sigma) << ',' << to_string(r.kind) << ',' << format_double(r.mean_mse)
        << ',' << format_double(r.stderr_mse) << ',' << r.n_samples << ',' << r.n_excluded << ','
        << r.seed << '\n';
  }
}

std::vector<SweepRecord> read_sweep_csv(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line) || line != kSweepCsvHeader) {
    throw ParseError("sweep CSV: missing or unexpected header", 1);
  }
  std::vector<SweepRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw ParseError("sweep CSV: expected 7 fields", line_no);
    try {
      SweepRecord r;
      r.sigma = std::stod(f[0]);
      r.kind = parse_estimator_kind(f[1]);
      r.mean_mse = std::stod(f[2]);
      r.stderr_mse = std::stod(f[3]);
      r.n_samples = std::stoll(f[4]);
      r.n_excluded = std::stoll(f[5]);
      r.seed = std::stoull(f[6]);
      records.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError(std::string("sweep CSV: ") + e.what(), line_no);
    }
  }
  return records;
}

OffsetCheck averaging_offset_check(const PointCloud& y, const PointCloud& x, double sigma,
                                   const std::vector<PointCloud>& probes, double tol) {
  if (probes.empty()) throw InvalidArgument("averaging_offset_check: no probes");
  const MatrixFisherParams p = mf_from_observation(y, x, sigma);
  QuadratureOptions qopts;
  qopts.tol = tol;
  const MomentEstimate est = mf_mean_quadrature_detailed(p, qopts);
  const PointCloud mean_x = apply_matrix(est.mean, x);

  OffsetCheck out;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const PointCloud& d = probes[i];
    if (d.rows() != x.rows()) throw InvalidArgument("averaging_offset_check: probe shape");
    const double spread_term = mf_expectation_on_grid(
        p, est.grid, [&](const Eigen::Matrix3d& r) { return (d - x * r.transpose()).squaredNorm(); });
    const double delta = spread_term - (d - mean_x).squaredNorm();
    if (i == 0) {
      out.offset = delta;
    } else {
      out.spread = std::max(out.spread, std::abs(delta - out.offset));
    }
  }
  return out;
}

}  // namespace so3denoise
