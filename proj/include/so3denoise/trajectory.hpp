#pragma once

#include "so3denoise/geom.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace so3denoise {

/// Frames of equal size, each centered on load.
struct Trajectory {
  std::vector<PointCloud> frames;
  std::string name;
  /// RMS point norm of frame 0.
  double scale = 0.0;

  Eigen::Index n_points() const { return frames.empty() ? 0 : frames.front().rows(); }
};

/// sqrt(|pc|^2 / N).
double rms_scale(const PointCloud& pc);

/// XYZ text: per frame a count line, a comment line and `LABEL x y z` rows.
/// Throws ParseError (with a 1-based line number) on malformed input.
Trajectory parse_trajectory(std::istream& in, const std::string& name = "");
Trajectory load_trajectory(const std::filesystem::path& path);

/// Writes coordinates with 17 significant digits. Labels default to "X".
void write_trajectory(std::ostream& out, const std::vector<PointCloud>& frames,
                      const std::string& comment = "");
void save_trajectory(const std::filesystem::path& path, const Trajectory& traj);

/// Frame 0 is a centered standard-normal cloud scaled to unit RMS; frame k
/// is center(frame0 + jitter * fresh normal). Requires n_points >= 4.
Trajectory synth_trajectory(int n_points, int n_frames, double jitter, std::uint64_t seed);

}  // namespace so3denoise
