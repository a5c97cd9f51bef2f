#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "afa/sequence.hpp"
#include "afa/tensor.hpp"

namespace afa {

// ---------------------------------------------------------------------------
// Minimalistic world: one unit pixel moving one cell per step on a torus.

enum class Direction { right, down };

struct MinWorldConfig {
  std::size_t height = 8;
  std::size_t width = 12;
  std::size_t length = 12;
  std::vector<Direction> directions{Direction::right, Direction::down};
};

/// [1,0] moves right, [0,1] moves down.
std::vector<float> minworld_action(Direction d);

/// One sequence per (direction, start row, start column), in that nesting order.
Dataset gen_minworld(const MinWorldConfig& config = {});

// ---------------------------------------------------------------------------
// Line tracer: differential-drive robot following a line on a rounded-rectangle
// circuit, observed through a downward 8x12 window ahead of the axle.

struct TrackSpec {
  double width = 1.2;  // outer extents of the centreline, metres
  double height = 0.8;
  double corner_radius = 0.2;
  double line_width = 0.02;

  double length() const;
  /// Signed distance from the centreline (positive outside the loop).
  double signed_distance(double x, double y) const;
  /// Throws std::invalid_argument for degenerate tracks.
  void validate() const;
};

struct DriveGeometry {
  double wheel_radius = 0.03;
  double axle_width = 0.1;
  double dt = 0.02;
};

struct TracerState {
  double x = 0;
  double y = 0;
  double theta = 0;  // wrapped to (-pi, pi]
  double omega_left = 0;
  double omega_right = 0;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Applies wheel rates (rad/s) for one timestep using exact arc integration.
TracerState drive_step(const TracerState& state, double omega_left, double omega_right,
                       const DriveGeometry& geometry = {});

struct CameraSpec {
  std::size_t rows = 8;
  std::size_t cols = 12;
  double pixel_size = 0.01;  // metres per pixel on the ground
  double near = 0.02;        // distance from the axle to the bottom edge of the window
  std::size_t supersample = 4;
};

/// 1 x rows x cols view; each pixel is the covered fraction of its area.
Tensor render_view(const TrackSpec& track, const TracerState& pose, const CameraSpec& camera = {});

struct LineTracerConfig {
  TrackSpec track;
  DriveGeometry drive;
  CameraSpec camera;
  double speed = 0.3;        // forward speed, m/s
  double gain = 100.0;       // turn rate per metre of look-ahead offset
  double lookahead = 0.15;   // metres ahead of the axle where the offset is measured
  double noise = 3.0;        // std-dev of the turn-rate jitter, rad/s
  double noise_smoothing = 0.8;  // AR(1) coefficient of the jitter
  std::size_t steps = 5000;
  std::size_t sequence_length = 25;
  double start_fraction = 0.0;  // position along the bottom straight, in [-0.5, 0.5]
  std::uint64_t seed = 0;
};

struct LineTracerRun {
  Dataset data;
  std::vector<TracerState> states;           // one per frame
  std::vector<std::array<double, 2>> wheels;  // raw (omega_left, omega_right) per frame
};

LineTracerRun simulate_linetracer(const LineTracerConfig& config);

Dataset sim_linetracer(const TrackSpec& track, std::size_t steps, std::uint64_t seed);

// ---------------------------------------------------------------------------
// AFAP dataset file format.

std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace afa
