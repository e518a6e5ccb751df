#include "so3denoise/diffusion.hpp"

#include "so3denoise/align.hpp"
#include "so3denoise/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>

namespace so3denoise {

NoisySample noise_sample(const PointCloud& x, double sigma, Rng& rng) {
  if (sigma < 0.0) throw InvalidArgument("noise_sample: sigma must be >= 0");
  NoisySample out;
  out.r_aug = sample_haar(rng);
  const PointCloud clean = rotate(out.r_aug, x);
  if (sigma == 0.0) {
    out.y = clean;
  } else {
    out.y = center(clean + sigma * sample_gaussian_cloud(rng, x.rows()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// MLP

namespace {

Eigen::VectorXd flatten_cloud(const PointCloud& pc) {
  Eigen::VectorXd v(pc.rows() * 3);
  for (Eigen::Index i = 0; i < pc.rows(); ++i)
    for (int j = 0; j < 3; ++j) v(3 * i + j) = pc(i, j);
  return v;
}

PointCloud unflatten_cloud(const Eigen::VectorXd& v) {
  PointCloud pc(v.size() / 3, 3);
  for (Eigen::Index i = 0; i < pc.rows(); ++i)
    for (int j = 0; j < 3; ++j) pc(i, j) = v(3 * i + j);
  return pc;
}

Eigen::VectorXd input_features(const MlpDenoiser& m, const PointCloud& y, double sigma) {
  if (y.rows() != m.n_points()) {
    throw InvalidArgument("mlp_forward: expected " + std::to_string(m.n_points()) +
                          " points, got " + std::to_string(y.rows()));
  }
  if (!(sigma > 0.0)) throw InvalidArgument("mlp_forward: sigma must be positive");
  const Eigen::Index d = 3 * y.rows();
  Eigen::VectorXd in(d + 2);
  in.head(d) = flatten_cloud(y) / m.s_ref;
  in(d) = std::log(sigma);
  in(d + 1) = 1.0;
  return in;
}

struct Forward {
  Eigen::VectorXd input;
  Eigen::VectorXd hidden;
  PointCloud out;
};

Forward forward_pass(const MlpDenoiser& m, const PointCloud& y, double sigma) {
  Forward f;
  f.input = input_features(m, y, sigma);
  f.hidden = (m.w1 * f.input + m.b1).array().tanh().matrix();
  f.out = center(unflatten_cloud(m.w2 * f.hidden + m.b2));
  return f;
}

// Adds the gradient of |forward(y) - target|^2 * scale into grads and
// returns the unscaled squared error.
double accumulate_sample(const MlpDenoiser& m, const PointCloud& y, double sigma,
                         const PointCloud& target, double scale, MlpDenoiser& grads) {
  const Forward f = forward_pass(m, y, sigma);
  const PointCloud residual = f.out - target;
  const double err = residual.squaredNorm();
  // d/d(raw) |P raw - t|^2 = 2 P (P raw - t) with P the centering projector.
  const Eigen::VectorXd g_out = 2.0 * scale * flatten_cloud(center(residual));
  grads.w2.noalias() += g_out * f.hidden.transpose();
  grads.b2 += g_out;
  const Eigen::VectorXd g_pre =
      ((m.w2.transpose() * g_out).array() * (1.0 - f.hidden.array().square())).matrix();
  grads.w1.noalias() += g_pre * f.input.transpose();
  grads.b1 += g_pre;
  return err;
}

}  // namespace

MlpDenoiser MlpDenoiser::zeros(int n_points, int hidden, double s_ref) {
  if (n_points < 1 || hidden < 1) throw InvalidArgument("MlpDenoiser: bad dimensions");
  if (!(s_ref > 0.0)) throw InvalidArgument("MlpDenoiser: s_ref must be positive");
  MlpDenoiser m;
  const int d = 3 * n_points;
  m.w1 = Eigen::MatrixXd::Zero(hidden, d + 2);
  m.b1 = Eigen::VectorXd::Zero(hidden);
  m.w2 = Eigen::MatrixXd::Zero(d, hidden);
  m.b2 = Eigen::VectorXd::Zero(d);
  m.s_ref = s_ref;
  return m;
}

MlpDenoiser MlpDenoiser::random(int n_points, int hidden, double s_ref, Rng& rng) {
  MlpDenoiser m = zeros(n_points, hidden, s_ref);
  std::normal_distribution<double> normal;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(m.w1.cols()));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index j = 0; j < m.w1.cols(); ++j)
    for (Eigen::Index i = 0; i < m.w1.rows(); ++i) m.w1(i, j) = s1 * normal(rng);
  for (Eigen::Index j = 0; j < m.w2.cols(); ++j)
    for (Eigen::Index i = 0; i < m.w2.rows(); ++i) m.w2(i, j) = s2 * normal(rng);
  return m;
}

std::vector<double> MlpDenoiser::flatten() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_params()));
  out.insert(out.end(), w1.data(), w1.data() + w1.size());
  out.insert(out.end(), b1.data(), b1.data() + b1.size());
  out.insert(out.end(), w2.data(), w2.data() + w2.size());
  out.insert(out.end(), b2.data(), b2.data() + b2.size());
  return out;
}

void MlpDenoiser::unflatten(std::span<const double> params) {
  if (static_cast<Eigen::Index>(params.size()) != n_params()) {
    throw InvalidArgument("MlpDenoiser::unflatten: parameter count mismatch");
  }
  const double* p = params.data();
  std::copy_n(p, w1.size(), w1.data());
  p += w1.size();
  std::copy_n(p, b1.size(), b1.data());
  p += b1.size();
  std::copy_n(p, w2.size(), w2.data());
  p += w2.size();
  std::copy_n(p, b2.size(), b2.data());
}

bool MlpDenoiser::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() &&
         std::isfinite(s_ref);
}

PointCloud mlp_forward(const MlpDenoiser& m, const PointCloud& y, double sigma) {
  return forward_pass(m, y, sigma).out;
}

LossAndGrad loss_and_grad_targets(const MlpDenoiser& m, std::span<const PointCloud> ys,
                                  std::span<const PointCloud> targets, double sigma) {
  if (ys.empty()) throw InvalidArgument("loss_and_grad: empty batch");
  if (ys.size() != targets.size()) throw InvalidArgument("loss_and_grad: batch size mismatch");
  LossAndGrad out;
  out.grads = MlpDenoiser::zeros(m.n_points(), m.hidden(), m.s_ref);
  const double scale = 1.0 / static_cast<double>(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    out.loss += scale * accumulate_sample(m, ys[i], sigma, targets[i], scale, out.grads);
  }
  out.n_used = static_cast<int>(ys.size());
  return out;
}

double mlp_loss(const MlpDenoiser& m, std::span<const PointCloud> ys,
                std::span<const PointCloud> targets, double sigma) {
  if (ys.empty() || ys.size() != targets.size()) throw InvalidArgument("mlp_loss: bad batch");
  double loss = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    loss += (mlp_forward(m, ys[i], sigma) - targets[i]).squaredNorm();
  }
  return loss / static_cast<double>(ys.size());
}

namespace {

// Target for one sample, or nullopt when the estimator is undefined there.
std::optional<PointCloud> try_target(EstimatorKind estimator, const PointCloud& y,
                                     const PointCloud& x, double sigma, const Rotation& r_aug,
                                     const TargetOptions& opts) {
  try {
    const std::optional<Rotation> r =
        estimator == EstimatorKind::Aug ? std::optional<Rotation>(r_aug) : std::nullopt;
    return estimator_target(estimator, y, x, sigma, r, opts);
  } catch (const ExpansionSingular&) {
  } catch (const NoConvergence&) {
  } catch (const AlignmentUndefined&) {
  }
  return std::nullopt;
}

}  // namespace

LossAndGrad loss_and_grad(const MlpDenoiser& m, std::span<const TrainingSample> batch,
                          double sigma, EstimatorKind estimator, const TargetOptions& opts) {
  if (batch.empty()) throw InvalidArgument("loss_and_grad: empty batch");
  std::vector<PointCloud> ys, targets;
  int excluded = 0;
  for (const TrainingSample& s : batch) {
    auto t = try_target(estimator, s.y, s.x, sigma, s.r_aug, opts);
    if (!t) {
      ++excluded;
      continue;
    }
    ys.push_back(s.y);
    targets.push_back(std::move(*t));
  }
  LossAndGrad out;
  if (ys.empty()) {
    out.grads = MlpDenoiser::zeros(m.n_points(), m.hidden(), m.s_ref);
  } else {
    out = loss_and_grad_targets(m, ys, targets, sigma);
  }
  out.n_excluded = excluded;
  return out;
}

// ---------------------------------------------------------------------------
// Training

std::string to_string(DatasetMode mode) {
  return mode == DatasetMode::AllFrames ? "all-frames" : "single-frame";
}

DatasetMode parse_dataset_mode(std::string_view name) {
  if (name == "all-frames") return DatasetMode::AllFrames;
  if (name == "single-frame") return DatasetMode::SingleFrame;
  throw InvalidArgument("unknown dataset mode '" + std::string(name) + "'");
}

namespace {

struct Probe {
  PointCloud x;
  PointCloud y;
  Rotation r_aug;
  PointCloud target;
};

Rng derived_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return Rng(seq);
}

class Adam {
 public:
  explicit Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

StepMetrics evaluate_probe(const MlpDenoiser& m, const std::vector<Probe>& probes, double sigma,
                           int step) {
  StepMetrics s;
  s.step = step;
  if (probes.empty()) return s;
  for (const Probe& p : probes) {
    const PointCloud pred = mlp_forward(m, p.y, sigma);
    s.loss += (pred - p.target).squaredNorm();
    s.rmsd += rmsd(pred, rotate(p.r_aug, p.x));
    s.aligned_rmsd += aligned_rmsd(pred, p.x);
  }
  const auto n = static_cast<double>(probes.size());
  s.loss /= n;
  s.rmsd /= n;
  s.aligned_rmsd /= n;
  return s;
}

bool metrics_finite(const StepMetrics& s) {
  return std::isfinite(s.loss) && std::isfinite(s.rmsd) && std::isfinite(s.aligned_rmsd);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<PointCloud>& dataset, double s_ref) {
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  if (!(cfg.sigma > 0.0) || cfg.steps < 0 || cfg.batch < 1 || !(cfg.lr > 0.0) ||
      cfg.hidden < 1 || cfg.probe_batch < 1) {
    throw InvalidArgument("train: config values must be positive");
  }
  if (cfg.sigma_max && !(*cfg.sigma_max >= cfg.sigma)) {
    throw InvalidArgument("train: sigma_max must be >= sigma");
  }
  const Eigen::Index n_points = dataset.front().rows();
  for (const PointCloud& x : dataset) {
    if (x.rows() != n_points) throw InvalidArgument("train: frames differ in point count");
  }
  const TargetOptions target_opts{cfg.oracle_tol};

  Rng init_rng = derived_rng(cfg.seed, 0);
  Rng probe_rng = derived_rng(cfg.seed, 1);
  Rng train_rng = derived_rng(cfg.seed, 2);

  TrainResult result;
  result.model = MlpDenoiser::random(static_cast<int>(n_points), cfg.hidden, s_ref, init_rng);

  auto pick_frame = [&](Rng& rng) -> const PointCloud& {
    if (cfg.dataset_mode == DatasetMode::SingleFrame) return dataset.front();
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    return dataset[pick(rng)];
  };

  std::vector<Probe> probes;
  int probe_excluded = 0;
  for (int i = 0; i < cfg.probe_batch; ++i) {
    const PointCloud& x = pick_frame(probe_rng);
    NoisySample ns = noise_sample(x, cfg.sigma, probe_rng);
    auto t = try_target(cfg.estimator, ns.y, x, cfg.sigma, ns.r_aug, target_opts);
    if (!t) {
      ++probe_excluded;
      continue;
    }
    probes.push_back({x, std::move(ns.y), ns.r_aug, std::move(*t)});
  }

  StepMetrics initial = evaluate_probe(result.model, probes, cfg.sigma, 0);
  initial.n_excluded = probe_excluded;
  result.metrics.push_back(initial);

  std::vector<double> params = result.model.flatten();
  Adam adam(params.size(), cfg.lr);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int step = 1; step <= cfg.steps; ++step) {
    MlpDenoiser grads = MlpDenoiser::zeros(result.model.n_points(), cfg.hidden, s_ref);
    double loss = 0.0;
    int used = 0, excluded = 0;
    std::vector<std::pair<PointCloud, PointCloud>> batch;  // (y, target)
    std::vector<double> batch_sigma;
    for (int b = 0; b < cfg.batch; ++b) {
      const PointCloud& x = pick_frame(train_rng);
      double sigma = cfg.sigma;
      if (cfg.sigma_max) {
        sigma = cfg.sigma * std::pow(*cfg.sigma_max / cfg.sigma, unit(train_rng));
      }
      NoisySample ns = noise_sample(x, sigma, train_rng);
      auto t = try_target(cfg.estimator, ns.y, x, sigma, ns.r_aug, target_opts);
      if (!t) {
        ++excluded;
        continue;
      }
      batch.emplace_back(std::move(ns.y), std::move(*t));
      batch_sigma.push_back(sigma);
    }
    used = static_cast<int>(batch.size());
    if (used > 0) {
      const double scale = 1.0 / used;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        loss += scale * accumulate_sample(result.model, batch[i].first, batch_sigma[i],
                                          batch[i].second, scale, grads);
      }
    }
    const std::vector<double> g = grads.flatten();
    const bool grads_finite = std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); });
    if (!std::isfinite(loss) || !grads_finite) {
      result.status = TrainStatus::Diverged;
      result.diverged_step = step;
      break;
    }
    if (used > 0) {
      adam.step(params, g);
      result.model.unflatten(params);
    }
    if (!result.model.all_finite()) {
      result.status = TrainStatus::Diverged;
      result.diverged_step = step;
      break;
    }
    StepMetrics s = evaluate_probe(result.model, probes, cfg.sigma, step);
    s.n_excluded = excluded;
    result.metrics.push_back(s);
    if (!metrics_finite(s)) {
      result.status = TrainStatus::Diverged;
      result.diverged_step = step;
      break;
    }
  }
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& metrics) {
  out << kMetricsCsvHeader << '\n';
  char buf[160];
  for (const StepMetrics& s : metrics) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d\n", s.step, s.loss, s.rmsd,
                  s.aligned_rmsd, s.n_excluded);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// DDIM

DdimSchedule::DdimSchedule(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {
  if (sigmas_.size() < 2) throw InvalidArgument("DdimSchedule: need at least two levels");
  if (!(sigmas_.front() > 0.0)) throw InvalidArgument("DdimSchedule: first level must be > 0");
  if (sigmas_.back() != 0.0) throw InvalidArgument("DdimSchedule: last level must be 0");
  for (std::size_t i = 1; i < sigmas_.size(); ++i) {
    if (!(sigmas_[i] < sigmas_[i - 1])) {
      throw InvalidArgument("DdimSchedule: levels must be strictly descending");
    }
  }
}

PointCloud ddim_step(const Denoiser& denoiser, const PointCloud& y, double sigma_from,
                     double sigma_to) {
  const double factor = 1.0 - sigma_to / sigma_from;
  return y + factor * (denoiser(y, sigma_from) - y);
}

PointCloud ddim_sample(const Denoiser& denoiser, const DdimSchedule& schedule, int n_points,
                       Rng& rng) {
  if (n_points < 1) throw InvalidArgument("ddim_sample: n_points must be positive");
  const auto& s = schedule.sigmas();
  PointCloud y = center(s.front() * sample_gaussian_cloud(rng, n_points));
  for (std::size_t i = 1; i < s.size(); ++i) y = ddim_step(denoiser, y, s[i - 1], s[i]);
  return y;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kModelFormat = "so3denoise-mlp";

void write_le_double(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le_double(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ParseError("model: truncated parameter block", 0);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_model(std::ostream& out, const MlpDenoiser& m, const std::string& metadata_json) {
  nlohmann::json header;
  header["format"] = kModelFormat;
  header["version"] = 1;
  header["n_points"] = m.n_points();
  header["hidden"] = m.hidden();
  header["s_ref"] = m.s_ref;
  header["n_params"] = m.n_params();
  header["order"] = {"w1", "b1", "w2", "b2"};
  header["byte_order"] = "little";
  header["metadata"] = metadata_json.empty() ? nlohmann::json::object()
                                             : nlohmann::json::parse(metadata_json);
  out << header.dump() << '\n';
  for (double v : m.flatten()) write_le_double(out, v);
}

MlpDenoiser load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("model: missing header", 1);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: bad JSON header: ") + e.what(), 1);
  }
  if (header.value("format", "") != kModelFormat) throw ParseError("model: unknown format", 1);
  MlpDenoiser m = MlpDenoiser::zeros(header.at("n_points").get<int>(),
                                     header.at("hidden").get<int>(),
                                     header.at("s_ref").get<double>());
  if (header.at("n_params").get<Eigen::Index>() != m.n_params()) {
    throw ParseError("model: n_params does not match dimensions", 1);
  }
  std::vector<double> params(static_cast<std::size_t>(m.n_params()));
  for (double& v : params) v = read_le_double(in);
  m.unflatten(params);
  return m;
}

}  // namespace so3denoise
