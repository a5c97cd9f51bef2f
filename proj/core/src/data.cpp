#include "afa/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "afa/errors.hpp"
#include "binary.hpp"

namespace afa {

void Dataset::validate() const {
  if (height == 0 || width == 0 || channels == 0 || action_dim == 0) {
    throw std::invalid_argument("dataset dims must be positive");
  }
  const Shape frame{channels, height, width};
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    const std::string where = "sequence " + std::to_string(s) + ": ";
    if (seq.frames.size() != seq.actions.size()) {
      throw std::invalid_argument(where + "frame and action counts differ");
    }
    for (const auto& f : seq.frames) {
      if (!(f.shape() == frame)) {
        throw std::invalid_argument(where + "frame shape " + f.shape().str() + " != " + frame.str());
      }
    }
    for (const auto& a : seq.actions) {
      if (a.size() != action_dim) throw std::invalid_argument(where + "action dimension mismatch");
    }
  }
}

std::vector<float> minworld_action(Direction d) {
  return d == Direction::right ? std::vector<float>{1.0f, 0.0f} : std::vector<float>{0.0f, 1.0f};
}

Dataset gen_minworld(const MinWorldConfig& config) {
  if (config.height < 2 || config.width < 2) {
    throw std::invalid_argument("minworld needs height and width >= 2");
  }
  if (config.length < 1) throw std::invalid_argument("minworld sequence length must be >= 1");
  Dataset data;
  data.height = config.height;
  data.width = config.width;
  data.channels = 1;
  data.action_dim = 2;
  for (Direction dir : config.directions) {
    for (std::size_t r = 0; r < config.height; ++r) {
      for (std::size_t c = 0; c < config.width; ++c) {
        Sequence seq;
        for (std::size_t t = 0; t < config.length; ++t) {
          Tensor frame(Shape{1, config.height, config.width});
          const std::size_t y = dir == Direction::down ? (r + t) % config.height : r;
          const std::size_t x = dir == Direction::right ? (c + t) % config.width : c;
          frame.at(0, y, x) = 1.0f;
          seq.frames.push_back(std::move(frame));
          seq.actions.push_back(minworld_action(dir));
        }
        data.sequences.push_back(std::move(seq));
      }
    }
  }
  return data;
}

// ---------------------------------------------------------------------------

double TrackSpec::length() const {
  return 2.0 * (width - 2.0 * corner_radius) + 2.0 * (height - 2.0 * corner_radius) +
         2.0 * std::numbers::pi * corner_radius;
}

void TrackSpec::validate() const {
  if (!(corner_radius >= 0) || !(width >= 2 * corner_radius) || !(height >= 2 * corner_radius)) {
    throw std::invalid_argument("track: corner radius must fit inside width and height");
  }
  if (!(length() > 0)) throw std::invalid_argument("track: zero-length circuit");
  if (!(line_width > 0)) throw std::invalid_argument("track: line width must be positive");
}

double TrackSpec::signed_distance(double x, double y) const {
  const double qx = std::abs(x) - (width / 2 - corner_radius);
  const double qy = std::abs(y) - (height / 2 - corner_radius);
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  const double inside = std::min(std::max(qx, qy), 0.0);
  return outside + inside - corner_radius;
}

double wrap_angle(double theta) {
  constexpr double two_pi = 2 * std::numbers::pi;
  double t = std::fmod(theta, two_pi);
  if (t <= -std::numbers::pi) t += two_pi;
  if (t > std::numbers::pi) t -= two_pi;
  return t;
}

TracerState drive_step(const TracerState& s, double omega_left, double omega_right,
                       const DriveGeometry& g) {
  const double v = g.wheel_radius * (omega_left + omega_right) / 2;
  const double w = g.wheel_radius * (omega_right - omega_left) / g.axle_width;
  TracerState n = s;
  n.omega_left = omega_left;
  n.omega_right = omega_right;
  if (w == 0.0) {
    n.x = s.x + v * g.dt * std::cos(s.theta);
    n.y = s.y + v * g.dt * std::sin(s.theta);
    n.theta = s.theta;
  } else {
    const double th = s.theta + w * g.dt;
    n.x = s.x + v / w * (std::sin(th) - std::sin(s.theta));
    n.y = s.y - v / w * (std::cos(th) - std::cos(s.theta));
    n.theta = wrap_angle(th);
  }
  return n;
}

Tensor render_view(const TrackSpec& track, const TracerState& pose, const CameraSpec& cam) {
  Tensor img(Shape{1, cam.rows, cam.cols});
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  const double half = track.line_width / 2;
  const double ss = static_cast<double>(cam.supersample);
  const double norm = 1.0 / (ss * ss);
  for (std::size_t row = 0; row < cam.rows; ++row) {
    for (std::size_t col = 0; col < cam.cols; ++col) {
      std::size_t hits = 0;
      for (std::size_t sy = 0; sy < cam.supersample; ++sy) {
        const double fwd =
            cam.near + (static_cast<double>(cam.rows - row) - (static_cast<double>(sy) + 0.5) / ss) *
                           cam.pixel_size;
        for (std::size_t sx = 0; sx < cam.supersample; ++sx) {
          const double lat = (static_cast<double>(cam.cols) / 2 - static_cast<double>(col) -
                              (static_cast<double>(sx) + 0.5) / ss) *
                             cam.pixel_size;
          const double wx = pose.x + fwd * c - lat * s;
          const double wy = pose.y + fwd * s + lat * c;
          if (std::abs(track.signed_distance(wx, wy)) <= half) ++hits;
        }
      }
      img.at(0, row, col) = static_cast<float>(static_cast<double>(hits) * norm);
    }
  }
  return img;
}

LineTracerRun simulate_linetracer(const LineTracerConfig& cfg) {
  cfg.track.validate();
  if (cfg.steps < 1) throw std::invalid_argument("line tracer needs at least one step");
  if (cfg.sequence_length < 1) throw std::invalid_argument("sequence length must be >= 1");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const DriveGeometry& g = cfg.drive;

  TracerState pose;
  const double straight = cfg.track.width - 2 * cfg.track.corner_radius;
  pose.x = cfg.start_fraction * straight;
  pose.y = -cfg.track.height / 2;
  pose.theta = 0;

  double jitter = 0;
  auto command = [&](const TracerState& p) {
    const double sx = p.x + cfg.lookahead * std::cos(p.theta);
    const double sy = p.y + cfg.lookahead * std::sin(p.theta);
    // Counter-clockwise travel: drifting outside (positive distance) calls for a left turn.
    double turn = cfg.gain * cfg.track.signed_distance(sx, sy);
    if (cfg.noise > 0) {
      jitter = cfg.noise_smoothing * jitter +
               std::sqrt(1 - cfg.noise_smoothing * cfg.noise_smoothing) * cfg.noise * gauss(rng);
      turn += jitter;
    }
    const double half_axle = g.axle_width / 2;
    return std::array<double, 2>{(cfg.speed - turn * half_axle) / g.wheel_radius,
                                 (cfg.speed + turn * half_axle) / g.wheel_radius};
  };

  LineTracerRun run;
  std::vector<Tensor> frames;
  frames.reserve(cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto wheels = command(pose);
    if (t > 0) pose = drive_step(pose, wheels[0], wheels[1], g);
    pose.omega_left = wheels[0];
    pose.omega_right = wheels[1];
    run.states.push_back(pose);
    run.wheels.push_back(wheels);
    frames.push_back(render_view(cfg.track, pose, cfg.camera));
  }

  double lo = run.wheels[0][0], hi = lo;
  for (const auto& w : run.wheels) {
    lo = std::min({lo, w[0], w[1]});
    hi = std::max({hi, w[0], w[1]});
  }
  const double span = hi - lo;
  auto normalise = [&](double v) { return span > 0 ? static_cast<float>((v - lo) / span) : 0.5f; };

  run.data.height = cfg.camera.rows;
  run.data.width = cfg.camera.cols;
  run.data.channels = 1;
  run.data.action_dim = 2;
  for (std::size_t start = 0; start < cfg.steps; start += cfg.sequence_length) {
    const std::size_t end = std::min(cfg.steps, start + cfg.sequence_length);
    Sequence seq;
    for (std::size_t t = start; t < end; ++t) {
      seq.frames.push_back(frames[t]);
      seq.actions.push_back({normalise(run.wheels[t][0]), normalise(run.wheels[t][1])});
    }
    run.data.sequences.push_back(std::move(seq));
  }
  return run;
}

Dataset sim_linetracer(const TrackSpec& track, std::size_t steps, std::uint64_t seed) {
  LineTracerConfig cfg;
  cfg.track = track;
  cfg.steps = steps;
  cfg.seed = seed;
  return simulate_linetracer(cfg).data;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kDatasetMagic = "AFAP";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  data.validate();
  detail::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.height));
  w.u32(static_cast<std::uint32_t>(data.width));
  w.u32(static_cast<std::uint32_t>(data.channels));
  w.u32(static_cast<std::uint32_t>(data.action_dim));
  w.u32(static_cast<std::uint32_t>(data.sequences.size()));
  for (const auto& seq : data.sequences) {
    w.u32(static_cast<std::uint32_t>(seq.length()));
    for (const auto& f : seq.frames) {
      for (float v : f.data()) w.f32(v);
    }
    for (const auto& a : seq.actions) {
      for (float v : a) w.f32(v);
    }
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kDatasetMagic) throw FormatError("not an AFAP dataset (bad magic)", 0);
  const std::uint64_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kDatasetVersion) {
    throw FormatError("unsupported AFAP version " + std::to_string(v), version_at);
  }
  Dataset d;
  const std::uint64_t dims_at = r.offset();
  d.height = r.u32("height");
  d.width = r.u32("width");
  d.channels = r.u32("channels");
  d.action_dim = r.u32("action dim");
  if (d.height == 0 || d.width == 0 || d.channels == 0 || d.action_dim == 0) {
    throw FormatError("AFAP header has a zero dimension", dims_at);
  }
  const std::uint32_t count = r.u32("sequence count");
  const std::size_t frame_len = d.channels * d.height * d.width;
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::uint64_t seq_at = r.offset();
    const std::uint32_t steps = r.u32("sequence length");
    const std::uint64_t payload = static_cast<std::uint64_t>(steps) * (frame_len + d.action_dim) * 4;
    if (payload > r.remaining()) {
      throw FormatError("truncated AFAP sequence " + std::to_string(s), seq_at);
    }
    Sequence seq;
    seq.frames.reserve(steps);
    for (std::uint32_t t = 0; t < steps; ++t) {
      std::vector<float> px(frame_len);
      for (auto& v : px) v = r.f32("frame");
      seq.frames.emplace_back(Shape{d.channels, d.height, d.width}, std::move(px));
    }
    for (std::uint32_t t = 0; t < steps; ++t) {
      std::vector<float> a(d.action_dim);
      for (auto& v : a) v = r.f32("action");
      seq.actions.push_back(std::move(a));
    }
    d.sequences.push_back(std::move(seq));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after AFAP payload", r.offset());
  return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  const auto bytes = encode_dataset(data);
  detail::write_file(path, bytes);
}

Dataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(detail::read_file(path));
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace detail
}  // namespace afa
