#include "so3denoise/cli.hpp"

#include "so3denoise/align.hpp"
#include "so3denoise/diffusion.hpp"
#include "so3denoise/error.hpp"
#include "so3denoise/estimators.hpp"
#include "so3denoise/quad.hpp"
#include "so3denoise/selftest.hpp"
#include "so3denoise/sofisher.hpp"
#include "so3denoise/trajectory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <ostream>
#include <sstream>

namespace so3denoise {

namespace {

using nlohmann::json;

json matrix_json(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return rows;
}

const PointCloud& frame_at(const Trajectory& traj, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= traj.frames.size()) {
    throw InvalidArgument("frame index " + std::to_string(index) + " out of range (trajectory has " +
                          std::to_string(traj.frames.size()) + " frames)");
  }
  return traj.frames[static_cast<std::size_t>(index)];
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw InvalidArgument("empty number list");
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

struct AlignArgs {
  std::string traj;
  int frame_a = 0;
  int frame_b = 1;
};

int cmd_align(const AlignArgs& a, std::ostream& out) {
  const Trajectory traj = load_trajectory(a.traj);
  const PointCloud& pa = frame_at(traj, a.frame_a);
  const PointCloud& pb = frame_at(traj, a.frame_b);
  const KabschResult k = kabsch_with_status(pa, pb);
  json j;
  j["rotation"] = matrix_json(k.rotation.matrix());
  j["degenerate"] = k.degenerate;
  j["rmsd"] = rmsd(pa, pb);
  j["aligned_rmsd"] = rmsd(pa, rotate(k.rotation, pb));
  out << j.dump(2) << '\n';
  return 0;
}

struct MomentArgs {
  std::string input;
  int frame = 0;
  int observed = -1;
  double sigma = 0.0;
  std::string order = "oracle";
  double tol = 1e-8;
  std::uint64_t seed = 0;
};

int cmd_moment(const MomentArgs& a, std::ostream& out) {
  const Trajectory traj = load_trajectory(a.input);
  if (!(a.sigma > 0.0)) throw InvalidArgument("--sigma must be positive");
  const PointCloud& x = frame_at(traj, a.frame);
  PointCloud y;
  if (a.observed >= 0) {
    y = frame_at(traj, a.observed);
  } else {
    Rng rng(a.seed);
    y = noise_sample(x, a.sigma, rng).y;
  }
  const Eigen::Matrix3d cross = y.transpose() * x;

  json j;
  j["sigma"] = a.sigma;
  j["order"] = a.order;
  if (a.order == "oracle") {
    const Eigen::Matrix3d m = mf_mean_quadrature({cross / (a.sigma * a.sigma)}, a.tol);
    j["moment"] = matrix_json(m);
    json errors;
    for (auto [name, k] : {std::pair{"order0", ExpansionOrder::Zero},
                           std::pair{"order1", ExpansionOrder::One},
                           std::pair{"order2", ExpansionOrder::Two}}) {
      try {
        errors[name] = (mf_mean_laplace(cross, a.sigma, k) - m).cwiseAbs().maxCoeff();
      } catch (const ExpansionSingular&) {
        errors[name] = nullptr;
      } catch (const AlignmentUndefined&) {
        errors[name] = nullptr;
      }
    }
    j["max_abs_error"] = errors;
  } else {
    ExpansionOrder k;
    if (a.order == "0") k = ExpansionOrder::Zero;
    else if (a.order == "1") k = ExpansionOrder::One;
    else if (a.order == "2") k = ExpansionOrder::Two;
    else throw InvalidArgument("--order must be 0, 1, 2 or oracle");
    j["moment"] = matrix_json(mf_mean_laplace(cross, a.sigma, k));
  }
  out << j.dump(2) << '\n';
  return 0;
}

struct SweepArgs {
  std::string input;
  int frame = 0;
  std::string sigmas;
  int n_noise = 64;
  std::uint64_t seed = 0;
  std::string out;
  double tol = 1e-6;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const Trajectory traj = load_trajectory(a.input);
  SweepOptions opts;
  opts.oracle_tol = a.tol;
  const auto records =
      error_sweep(frame_at(traj, a.frame), parse_list(a.sigmas), a.n_noise, a.seed, opts);
  {
    std::ofstream f = open_out(a.out);
    write_sweep_csv(f, records);
  }
  for (double s : mode_ordering_violations(records)) {
    err << "note: mean_mse(aug) < mean_mse(order0) at sigma = " << s << '\n';
  }
  out << "wrote " << records.size() << " records to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string input;
  double sigma = 0.0;
  std::string estimator = "order0";
  int steps = 1000;
  std::string mode = "single-frame";
  std::uint64_t seed = 0;
  std::string out_metrics;
  std::string out_model;
  int hidden = 64;
  int batch = 32;
  double lr = 1e-3;
  double sigma_max = 0.0;
  double tol = 1e-6;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const Trajectory traj = load_trajectory(a.input);
  TrainConfig cfg;
  cfg.sigma = a.sigma;
  cfg.estimator = parse_estimator_kind(a.estimator);
  cfg.steps = a.steps;
  cfg.dataset_mode = parse_dataset_mode(a.mode);
  cfg.seed = a.seed;
  cfg.hidden = a.hidden;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.oracle_tol = a.tol;
  if (a.sigma_max > 0.0) cfg.sigma_max = a.sigma_max;

  const TrainResult result = train(cfg, traj.frames, traj.scale);
  {
    std::ofstream f = open_out(a.out_metrics);
    write_metrics_csv(f, result.metrics);
  }
  json meta;
  meta["sigma"] = cfg.sigma;
  meta["estimator"] = std::string(to_string(cfg.estimator));
  meta["steps"] = cfg.steps;
  meta["mode"] = to_string(cfg.dataset_mode);
  meta["seed"] = cfg.seed;
  meta["lr"] = cfg.lr;
  meta["batch"] = cfg.batch;
  meta["trajectory"] = traj.name;
  if (!a.out_model.empty()) {
    std::ofstream f = open_out(a.out_model);
    save_model(f, result.model, meta.dump());
  }
  json summary;
  summary["status"] = result.status == TrainStatus::Completed ? "completed" : "diverged";
  if (result.status == TrainStatus::Diverged) summary["diverged_step"] = result.diverged_step;
  const StepMetrics& first = result.metrics.front();
  const StepMetrics& last = result.metrics.back();
  summary["initial"] = {{"loss", first.loss}, {"rmsd", first.rmsd}, {"aligned_rmsd", first.aligned_rmsd}};
  summary["final"] = {{"step", last.step}, {"loss", last.loss}, {"rmsd", last.rmsd},
                      {"aligned_rmsd", last.aligned_rmsd}};
  out << summary.dump(2) << '\n';
  return 0;
}

struct SampleArgs {
  std::string model;
  std::string schedule;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  std::ifstream in(a.model, std::ios::binary);
  if (!in) throw Error("cannot open model '" + a.model + "'");
  const MlpDenoiser model = load_model(in);
  const DdimSchedule schedule(parse_list(a.schedule));
  Rng rng(a.seed);
  const Denoiser denoiser = [&](const PointCloud& y, double sigma) {
    return mlp_forward(model, y, sigma);
  };
  const PointCloud sample = ddim_sample(denoiser, schedule, model.n_points(), rng);
  {
    std::ofstream f = open_out(a.out);
    write_trajectory(f, {sample}, "ddim sample seed=" + std::to_string(a.seed));
  }
  out << "wrote " << sample.rows() << " points to " << a.out << '\n';
  return 0;
}

struct SynthArgs {
  int n_points = 8;
  int n_frames = 1;
  double jitter = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Trajectory traj = synth_trajectory(a.n_points, a.n_frames, a.jitter, a.seed);
  save_trajectory(a.out, traj);
  out << "wrote " << traj.frames.size() << " frames of " << traj.n_points() << " points to "
      << a.out << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation-posterior denoiser targets: alignment, Laplace corrections, quadrature "
               "oracle and a small diffusion trainer."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "so3denoise 0.1.0");

  AlignArgs align_args;
  auto* align = app.add_subcommand("align", "Kabsch-align two frames; prints JSON");
  align->add_option("traj", align_args.traj, "XYZ trajectory")->required()->check(CLI::ExistingFile);
  align->add_option("--frame-a", align_args.frame_a, "reference frame index");
  align->add_option("--frame-b", align_args.frame_b, "moved frame index");

  MomentArgs moment_args;
  auto* moment = app.add_subcommand("moment", "Expected rotation E[R] of the posterior; prints JSON");
  moment->add_option("--input", moment_args.input, "XYZ trajectory")->required()->check(CLI::ExistingFile);
  moment->add_option("--frame", moment_args.frame, "frame used as x");
  moment->add_option("--observed", moment_args.observed,
                     "frame used as y (default: noise frame x with --seed)");
  moment->add_option("--sigma", moment_args.sigma, "noise level, same units as coordinates")->required();
  moment->add_option("--order", moment_args.order, "0, 1, 2 or oracle")
      ->check(CLI::IsMember({"0", "1", "2", "oracle"}));
  moment->add_option("--tol", moment_args.tol, "quadrature tolerance per entry (default 1e-8)");
  moment->add_option("--seed", moment_args.seed, "seed for the synthetic observation");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "MSE of each estimator against the quadrature oracle");
  sweep->add_option("--input", sweep_args.input, "XYZ trajectory")->required()->check(CLI::ExistingFile);
  sweep->add_option("--frame", sweep_args.frame, "frame used as x");
  sweep->add_option("--sigmas", sweep_args.sigmas, "comma-separated ascending noise levels")->required();
  sweep->add_option("--n-noise", sweep_args.n_noise, "noise draws per sigma");
  sweep->add_option("--seed", sweep_args.seed, "random seed");
  sweep->add_option("--out", sweep_args.out, "output CSV")->required();
  sweep->add_option("--tol", sweep_args.tol, "oracle tolerance per entry (default 1e-6)");

  TrainArgs train_args;
  auto* trainc = app.add_subcommand("train", "Train the MLP denoiser on one estimator target");
  trainc->add_option("--input", train_args.input, "XYZ trajectory")->required()->check(CLI::ExistingFile);
  trainc->add_option("--sigma", train_args.sigma, "noise level")->required();
  trainc->add_option("--estimator", train_args.estimator, "aug, order0, order1, order2 or oracle")
      ->check(CLI::IsMember({"aug", "order0", "order1", "order2", "oracle"}));
  trainc->add_option("--steps", train_args.steps, "optimizer steps");
  trainc->add_option("--mode", train_args.mode, "all-frames or single-frame")
      ->check(CLI::IsMember({"all-frames", "single-frame"}));
  trainc->add_option("--seed", train_args.seed, "random seed");
  trainc->add_option("--out-metrics", train_args.out_metrics, "metrics CSV")->required();
  trainc->add_option("--out-model", train_args.out_model, "model checkpoint");
  trainc->add_option("--hidden", train_args.hidden, "hidden width");
  trainc->add_option("--batch", train_args.batch, "batch size");
  trainc->add_option("--lr", train_args.lr, "Adam learning rate");
  trainc->add_option("--sigma-max", train_args.sigma_max,
                     "draw sigma log-uniformly from [sigma, sigma-max] per sample");
  trainc->add_option("--tol", train_args.tol, "oracle tolerance when --estimator oracle");

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "DDIM-sample from a trained checkpoint");
  sample->add_option("--model", sample_args.model, "checkpoint file")->required()->check(CLI::ExistingFile);
  sample->add_option("--schedule", sample_args.schedule, "descending noise levels ending in 0")->required();
  sample->add_option("--seed", sample_args.seed, "random seed");
  sample->add_option("--out", sample_args.out, "output XYZ")->required();

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write a synthetic trajectory");
  synth->add_option("--n-points", synth_args.n_points, "points per frame");
  synth->add_option("--n-frames", synth_args.n_frames, "number of frames");
  synth->add_option("--jitter", synth_args.jitter, "per-frame perturbation scale");
  synth->add_option("--seed", synth_args.seed, "random seed");
  synth->add_option("--out", synth_args.out, "output XYZ")->required();

  bool fast = false;
  auto* selftest = app.add_subcommand("selftest", "Run the invariant suites");
  selftest->add_flag("--fast", fast, "fewer random cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*align) return cmd_align(align_args, out);
    if (*moment) return cmd_moment(moment_args, out);
    if (*sweep) return cmd_sweep(sweep_args, out, err);
    if (*trainc) return cmd_train(train_args, out);
    if (*sample) return cmd_sample(sample_args, out);
    if (*synth) return cmd_synth(synth_args, out);
    if (*selftest) return run_selftest(fast, out) ? 0 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace so3denoise
