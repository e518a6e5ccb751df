#include "so3denoise/trajectory.hpp"

#include "so3denoise/error.hpp"
#include "so3denoise/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace so3denoise {

double rms_scale(const PointCloud& pc) {
  if (pc.rows() == 0) return 0.0;
  return std::sqrt(pc.squaredNorm() / static_cast<double>(pc.rows()));
}

namespace {

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

Trajectory parse_trajectory(std::istream& in, const std::string& name) {
  Trajectory traj;
  traj.name = name;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;

    std::istringstream count_stream(line);
    long long count = 0;
    std::string rest;
    if (!(count_stream >> count) || (count_stream >> rest) || count < 1) {
      throw ParseError("expected a positive point count, got '" + line + "'", line_no);
    }
    if (!traj.frames.empty() && count != traj.frames.front().rows()) {
      throw ParseError("frame " + std::to_string(traj.frames.size()) + " has " +
                           std::to_string(count) + " points, expected " +
                           std::to_string(traj.frames.front().rows()),
                       line_no);
    }
    if (!std::getline(in, line)) throw ParseError("missing comment line", line_no + 1);
    ++line_no;

    PointCloud frame(count, 3);
    for (long long i = 0; i < count; ++i) {
      if (!std::getline(in, line)) {
        throw ParseError("frame ends after " + std::to_string(i) + " of " +
                             std::to_string(count) + " points",
                         line_no + 1);
      }
      ++line_no;
      std::istringstream row(line);
      std::string label;
      double c[3];
      if (!(row >> label >> c[0] >> c[1] >> c[2])) {
        throw ParseError("expected 'LABEL x y z', got '" + line + "'", line_no);
      }
      for (int j = 0; j < 3; ++j) {
        if (!std::isfinite(c[j])) throw ParseError("non-finite coordinate", line_no);
        frame(i, j) = c[j];
      }
    }
    traj.frames.push_back(center(frame));
  }
  if (traj.frames.empty()) throw ParseError("no frames found", 0);
  traj.scale = rms_scale(traj.frames.front());
  return traj;
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trajectory '" + path.string() + "'");
  try {
    return parse_trajectory(in, path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_trajectory(std::ostream& out, const std::vector<PointCloud>& frames,
                      const std::string& comment) {
  char buf[96];
  for (const PointCloud& f : frames) {
    out << f.rows() << '\n' << comment << '\n';
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      std::snprintf(buf, sizeof buf, "X %.17g %.17g %.17g\n", f(i, 0), f(i, 1), f(i, 2));
      out << buf;
    }
  }
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trajectory '" + path.string() + "'");
  write_trajectory(out, traj.frames, traj.name);
}

Trajectory synth_trajectory(int n_points, int n_frames, double jitter, std::uint64_t seed) {
  if (n_points < 4) throw InvalidArgument("synth_trajectory: n_points must be >= 4");
  if (n_frames < 1) throw InvalidArgument("synth_trajectory: n_frames must be >= 1");
  if (jitter < 0.0) throw InvalidArgument("synth_trajectory: jitter must be >= 0");
  Rng rng(seed);
  PointCloud base = center(sample_gaussian_cloud(rng, n_points));
  base /= rms_scale(base);

  Trajectory traj;
  traj.name = "synthetic";
  traj.frames.push_back(base);
  for (int k = 1; k < n_frames; ++k) {
    PointCloud noise = sample_gaussian_cloud(rng, n_points);
    traj.frames.push_back(jitter == 0.0 ? base : center(base + jitter * noise));
  }
  traj.scale = rms_scale(base);
  return traj;
}

}  // namespace so3denoise
