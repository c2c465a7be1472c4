#include "plvio/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace plvio {

int hamming_distance(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

std::string descriptor_to_hex(const Descriptor& d) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (std::uint64_t w : d) os << std::setw(16) << w;
  return os.str();
}

Descriptor descriptor_from_hex(const std::string& s) {
  if (s.size() != 64) throw VioError(ErrorCode::kParseError, "descriptor must have 64 hex digits, got '" + s + "'");
  Descriptor d{};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string word = s.substr(16 * i, 16);
    if (word.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
      throw VioError(ErrorCode::kParseError, "bad descriptor '" + s + "'");
    }
    d[i] = std::stoull(word, nullptr, 16);
  }
  return d;
}

double Signal::value(double t) const {
  double v = offset + rate * t;
  for (const Harmonic& h : harmonics) v += h.amplitude * std::sin(2.0 * M_PI * h.frequency * t + h.phase);
  return v;
}

double Signal::d1(double t) const {
  double v = rate;
  for (const Harmonic& h : harmonics) {
    const double w = 2.0 * M_PI * h.frequency;
    v += h.amplitude * w * std::cos(w * t + h.phase);
  }
  return v;
}

double Signal::d2(double t) const {
  double v = 0.0;
  for (const Harmonic& h : harmonics) {
    const double w = 2.0 * M_PI * h.frequency;
    v -= h.amplitude * w * w * std::sin(w * t + h.phase);
  }
  return v;
}

SimTrajectory::SimTrajectory(std::array<Signal, 3> position, Signal yaw, Signal pitch, Signal roll, double duration)
    : position_(std::move(position)),
      yaw_(std::move(yaw)),
      pitch_(std::move(pitch)),
      roll_(std::move(roll)),
      duration_(duration) {}

SimTrajectory SimTrajectory::sinusoid(double duration) {
  std::array<Signal, 3> p;
  p[0].harmonics = {{1.0, 0.10, 0.0}, {0.2, 0.31, 0.4}};
  p[1].harmonics = {{0.8, 0.13, 0.5}, {0.15, 0.37, 1.1}};
  p[2].harmonics = {{0.3, 0.17, 1.0}};
  Signal yaw;
  yaw.rate = 0.25;
  yaw.harmonics = {{0.4, 0.11, 0.0}, {0.1, 0.43, 0.7}};
  Signal pitch;
  pitch.harmonics = {{0.12, 0.21, 0.2}};
  Signal roll;
  roll.harmonics = {{0.10, 0.16, 0.9}};
  return SimTrajectory(p, yaw, pitch, roll, duration);
}

SimTrajectory SimTrajectory::square_loop(double radius, double lap_period, double duration) {
  // cos(t) - c cos(3t), sin(t) + c sin(3t) with this c has corners at 45 deg
  // whose extent matches the side extent.
  constexpr double c = 0.1716;
  const double r = radius / (1.0 - c);
  const double f = 1.0 / lap_period;
  std::array<Signal, 3> p;
  p[0].harmonics = {{r, f, M_PI / 2}, {-c * r, 3 * f, M_PI / 2}};
  p[1].harmonics = {{r, f, 0.0}, {c * r, 3 * f, 0.0}};
  p[2].harmonics = {{0.2, 0.25, 0.0}};
  Signal yaw;
  yaw.rate = 2.0 * M_PI * f;
  yaw.harmonics = {{0.08, 0.35, 0.0}};
  Signal pitch;
  pitch.harmonics = {{0.05, 0.3, 0.5}};
  Signal roll;
  roll.harmonics = {{0.05, 0.23, 0.2}};
  return SimTrajectory(p, yaw, pitch, roll, duration);
}

SimTrajectory SimTrajectory::stationary(const UnitQuaternion& q_GB, const Vec3& p, double duration) {
  const Mat3 R = q_GB.matrix().transpose();  // body -> global
  std::array<Signal, 3> pos;
  for (int i = 0; i < 3; ++i) pos[static_cast<std::size_t>(i)].offset = p(i);
  Signal yaw;
  yaw.offset = std::atan2(R(1, 0), R(0, 0));
  Signal pitch;
  pitch.offset = -std::asin(std::clamp(R(2, 0), -1.0, 1.0));
  Signal roll;
  roll.offset = std::atan2(R(2, 1), R(2, 2));
  return SimTrajectory(pos, yaw, pitch, roll, duration);
}

TrajectoryPoint SimTrajectory::evaluate(double t) const {
  TrajectoryPoint out;
  for (int i = 0; i < 3; ++i) {
    const Signal& s = position_[static_cast<std::size_t>(i)];
    out.p_GB(i) = s.value(t);
    out.v_GB(i) = s.d1(t);
    out.a_G(i) = s.d2(t);
  }
  const double psi = yaw_.value(t), th = pitch_.value(t), ph = roll_.value(t);
  const double dpsi = yaw_.d1(t), dth = pitch_.d1(t), dph = roll_.d1(t);
  const Mat3 R_BG = (Eigen::AngleAxisd(psi, Vec3::UnitZ()) * Eigen::AngleAxisd(th, Vec3::UnitY()) *
                     Eigen::AngleAxisd(ph, Vec3::UnitX()))
                        .toRotationMatrix();
  out.q_GB = UnitQuaternion::from_rotation_matrix(R_BG.transpose());
  out.omega_B = Vec3(dph - dpsi * std::sin(th), dth * std::cos(ph) + dpsi * std::cos(th) * std::sin(ph),
                     -dth * std::sin(ph) + dpsi * std::cos(th) * std::cos(ph));
  return out;
}

namespace {

Descriptor random_descriptor(std::mt19937_64& rng) {
  Descriptor d;
  for (auto& w : d) w = rng();
  return d;
}

}  // namespace

SimWorld make_world(const WorldParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> height(params.floor_z, params.ceiling_z);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  std::uniform_real_distribution<double> length(params.min_segment_length, params.max_segment_length);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SimWorld world;
  world.seed = seed;
  world.points.reserve(static_cast<std::size_t>(params.num_points));
  for (int i = 0; i < params.num_points; ++i) {
    const double a = angle(rng);
    const double r = params.room_radius + jitter(rng);
    SimPoint p;
    p.id = i;
    p.p = Vec3(r * std::cos(a), r * std::sin(a), height(rng));
    p.signature = random_descriptor(rng);
    world.points.push_back(p);
  }
  for (int i = 0; i < params.num_segments; ++i) {
    const double a = angle(rng);
    const double r = params.room_radius + jitter(rng);
    const double len = length(rng);
    const double z = height(rng);
    const Vec3 center(r * std::cos(a), r * std::sin(a), z);
    const Vec3 tangent(-std::sin(a), std::cos(a), 0.0);
    const double kind = unit(rng);
    Vec3 dir;
    if (kind < 0.4) {
      dir = Vec3::UnitZ();
    } else if (kind < 0.8) {
      dir = tangent;
    } else {
      const double tilt = angle(rng);
      dir = std::cos(tilt) * tangent + std::sin(tilt) * Vec3::UnitZ();
    }
    world.segments.push_back(SimSegment{i, center - 0.5 * len * dir, center + 0.5 * len * dir});
  }
  return world;
}

CameraParams CameraParams::standard() {
  CameraParams c;
  Mat3 R_BC;
  R_BC << 0, -1, 0,
          0, 0, -1,
          1, 0, 0;
  c.extrinsics.q_BC = UnitQuaternion::from_rotation_matrix(R_BC);
  c.extrinsics.p_BC = Vec3(0.05, 0.0, 0.0);
  return c;
}

ImuStream synthesize_imu(const SimTrajectory& traj, const ImuSimParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noise3 = [&]() { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };

  const double period_ns = 1e9 / params.rate;
  const auto n = static_cast<long>(std::floor(traj.duration() * params.rate + 1e-9)) + 1;
  const double dt = 1.0 / params.rate;
  const NoiseParams& np = params.noise;

  ImuStream out;
  out.samples.reserve(static_cast<std::size_t>(n));
  out.truth.reserve(static_cast<std::size_t>(n));
  Vec3 bg = params.initial_gyro_bias;
  Vec3 ba = params.initial_accel_bias;
  for (long k = 0; k < n; ++k) {
    const Timestamp t_ns = static_cast<Timestamp>(std::llround(static_cast<double>(k) * period_ns));
    const TrajectoryPoint tp = traj.evaluate(to_seconds(t_ns));
    ImuSample s;
    s.timestamp_ns = t_ns;
    s.gyro = tp.omega_B + bg;
    s.accel = tp.q_GB.rotate(tp.a_G - params.gravity) + ba;
    if (!params.zero_noise) {
      s.gyro += np.gyro_noise_density / std::sqrt(dt) * noise3();
      s.accel += np.accel_noise_density / std::sqrt(dt) * noise3();
    }
    out.samples.push_back(s);

    GroundTruthSample g;
    g.timestamp_ns = t_ns;
    g.state.q_GB = tp.q_GB;
    g.state.p_GB = tp.p_GB;
    g.state.v_GB = tp.v_GB;
    g.state.bg = bg;
    g.state.ba = ba;
    out.truth.push_back(g);

    if (!params.zero_noise) {
      bg += np.gyro_bias_randomwalk * std::sqrt(dt) * noise3();
      ba += np.accel_bias_randomwalk * std::sqrt(dt) * noise3();
    }
  }
  return out;
}

std::vector<Timestamp> camera_timestamps(double duration, double camera_rate) {
  const double period_ns = 1e9 / camera_rate;
  const auto n = static_cast<long>(std::floor(duration * camera_rate + 1e-9)) + 1;
  std::vector<Timestamp> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) out.push_back(static_cast<Timestamp>(std::llround(static_cast<double>(k) * period_ns)));
  return out;
}

namespace {

// Liang-Barsky clipping of a 2D segment against |u| <= ul, |v| <= vl.
bool clip_to_image(Vec2& a, Vec2& b, double ul, double vl) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 d = b - a;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {a.x() + ul, ul - a.x(), a.y() + vl, vl - a.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      if (r > t1) return false;
      t0 = std::max(t0, r);
    } else {
      if (r < t0) return false;
      t1 = std::min(t1, r);
    }
  }
  const Vec2 a0 = a;
  a = a0 + t0 * d;
  b = a0 + t1 * d;
  return true;
}

// Projection of a 3D segment (camera frame) clipped to depth and image.
std::optional<std::pair<Vec2, Vec2>> project_segment(Vec3 a, Vec3 b, const CameraParams& cam) {
  if (a.z() < cam.z_min && b.z() < cam.z_min) return std::nullopt;
  if (a.z() < cam.z_min || b.z() < cam.z_min) {
    Vec3& behind = a.z() < cam.z_min ? a : b;
    const Vec3& front = a.z() < cam.z_min ? b : a;
    const double s = (cam.z_min - front.z()) / (behind.z() - front.z());
    behind = front + s * (behind - front);
  }
  if (0.5 * (a.z() + b.z()) > cam.z_max) return std::nullopt;
  Vec2 pa = a.head<2>() / a.z();
  Vec2 pb = b.head<2>() / b.z();
  if (!clip_to_image(pa, pb, cam.u_limit(), cam.v_limit())) return std::nullopt;
  return std::make_pair(pa, pb);
}

struct TrackSlot {
  int track_id = -1;
  int frames = 0;
};

Descriptor observe_descriptor(const Descriptor& signature, double flip, std::mt19937_64& rng) {
  Descriptor d = signature;
  std::binomial_distribution<int> count(256, flip);
  std::uniform_int_distribution<int> bit(0, 255);
  const int k = count(rng);
  for (int i = 0; i < k; ++i) {
    const int b = bit(rng);
    d[static_cast<std::size_t>(b / 64)] ^= (std::uint64_t{1} << (b % 64));
  }
  return d;
}

// Chooses which visible landmarks produce measurements: continuing tracks
// first (oldest id first), then new ones in random order, up to `cap`.
std::vector<int> select_visible(const std::vector<int>& visible, std::vector<TrackSlot>& slots, int cap,
                                double dropout, double max_frames, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> continuing, fresh;
  for (int id : visible) {
    TrackSlot& s = slots[static_cast<std::size_t>(id)];
    if (s.track_id >= 0 && unit(rng) >= dropout && s.frames < max_frames) {
      continuing.push_back(id);
    } else {
      s.track_id = -1;
      fresh.push_back(id);
    }
  }
  std::sort(continuing.begin(), continuing.end(), [&](int a, int b) {
    return slots[static_cast<std::size_t>(a)].track_id < slots[static_cast<std::size_t>(b)].track_id;
  });
  std::shuffle(fresh.begin(), fresh.end(), rng);
  std::vector<int> chosen;
  for (int id : continuing) {
    if (static_cast<int>(chosen.size()) >= cap) break;
    chosen.push_back(id);
  }
  for (int id : fresh) {
    if (static_cast<int>(chosen.size()) >= cap) break;
    chosen.push_back(id);
  }
  return chosen;
}

}  // namespace

std::vector<FrameObservations> synthesize_observations(const SimWorld& world, const SimTrajectory& traj,
                                                       const CameraParams& camera,
                                                       const ObservationParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sigma = params.pixel_noise / camera.focal;
  const double min_line = params.min_line_pixels / camera.focal;

  std::vector<TrackSlot> point_slots(world.points.size());
  std::vector<TrackSlot> line_slots(world.segments.size());
  int next_track = 0;
  int next_line = 0;

  std::vector<FrameObservations> frames;
  const std::vector<Timestamp> stamps = camera_timestamps(traj.duration(), params.camera_rate);
  frames.reserve(stamps.size());
  for (std::size_t k = 0; k < stamps.size(); ++k) {
    const TrajectoryPoint tp = traj.evaluate(to_seconds(stamps[k]));
    const Pose left = compose(camera.extrinsics.as_pose(), Pose{tp.q_GB, tp.p_GB});
    const Pose right = camera.rig.right_pose(left);

    FrameObservations frame;
    frame.frame_id = static_cast<int>(k);
    frame.timestamp_ns = stamps[k];

    // Points.
    std::vector<int> visible;
    std::vector<char> seen(world.points.size(), 0);
    for (const SimPoint& p : world.points) {
      const Vec3 pc = left.to_frame(p.p);
      if (pc.z() < camera.z_min || pc.z() > camera.z_max) continue;
      if (!camera.in_image(pc.head<2>() / pc.z())) continue;
      visible.push_back(p.id);
      seen[static_cast<std::size_t>(p.id)] = 1;
    }
    for (std::size_t i = 0; i < point_slots.size(); ++i) {
      if (!seen[i]) point_slots[i] = TrackSlot{};
    }
    const std::vector<int> chosen_points =
        select_visible(visible, point_slots, params.max_points, params.dropout_rate, params.max_track_frames, rng);
    std::vector<char> chosen_mask(world.points.size(), 0);
    for (int id : chosen_points) chosen_mask[static_cast<std::size_t>(id)] = 1;
    for (int id : visible) {
      if (!chosen_mask[static_cast<std::size_t>(id)]) point_slots[static_cast<std::size_t>(id)] = TrackSlot{};
    }
    for (int id : chosen_points) {
      const SimPoint& p = world.points[static_cast<std::size_t>(id)];
      TrackSlot& slot = point_slots[static_cast<std::size_t>(id)];
      if (slot.track_id < 0) slot = TrackSlot{next_track++, 0};
      ++slot.frames;

      PointMeasurement m;
      m.track_id = slot.track_id;
      m.landmark_id = p.id;
      const Vec3 pl = left.to_frame(p.p);
      const Vec3 pr = right.to_frame(p.p);
      m.left_uv = pl.head<2>() / pl.z() + sigma * Vec2(gauss(rng), gauss(rng));
      if (pr.z() > camera.z_min && camera.in_image(pr.head<2>() / pr.z())) {
        m.right_uv = pr.head<2>() / pr.z() + sigma * Vec2(gauss(rng), gauss(rng));
      }
      if (params.outlier_rate > 0.0 && unit(rng) < params.outlier_rate) {
        m.outlier = true;
        m.left_uv = Vec2((2.0 * unit(rng) - 1.0) * camera.u_limit(), (2.0 * unit(rng) - 1.0) * camera.v_limit());
        if (m.right_uv) m.right_uv = m.left_uv - Vec2(0.05 * unit(rng), 0.0);
      }
      m.descriptor = observe_descriptor(p.signature, params.descriptor_flip, rng);
      frame.points.push_back(m);
    }

    // Lines.
    std::vector<int> visible_lines;
    std::vector<std::pair<Vec2, Vec2>> left_proj(world.segments.size());
    std::vector<char> line_seen(world.segments.size(), 0);
    for (const SimSegment& s : world.segments) {
      const auto proj = project_segment(left.to_frame(s.p_b), left.to_frame(s.p_e), camera);
      if (!proj || (proj->second - proj->first).norm() < min_line) continue;
      left_proj[static_cast<std::size_t>(s.id)] = *proj;
      visible_lines.push_back(s.id);
      line_seen[static_cast<std::size_t>(s.id)] = 1;
    }
    for (std::size_t i = 0; i < line_slots.size(); ++i) {
      if (!line_seen[i]) line_slots[i] = TrackSlot{};
    }
    const std::vector<int> chosen_lines =
        select_visible(visible_lines, line_slots, params.max_lines, params.dropout_rate, params.max_track_frames, rng);
    std::vector<char> chosen_line_mask(world.segments.size(), 0);
    for (int id : chosen_lines) chosen_line_mask[static_cast<std::size_t>(id)] = 1;
    for (int id : visible_lines) {
      if (!chosen_line_mask[static_cast<std::size_t>(id)]) line_slots[static_cast<std::size_t>(id)] = TrackSlot{};
    }
    for (int id : chosen_lines) {
      const SimSegment& s = world.segments[static_cast<std::size_t>(id)];
      TrackSlot& slot = line_slots[static_cast<std::size_t>(id)];
      if (slot.track_id < 0) slot = TrackSlot{next_line++, 0};
      ++slot.frames;

      LineMeasurement m;
      m.line_id = slot.track_id;
      m.segment_id = s.id;
      const auto& lp = left_proj[static_cast<std::size_t>(id)];
      m.left = LineView::from_segment(lp.first + sigma * Vec2(gauss(rng), gauss(rng)),
                                      lp.second + sigma * Vec2(gauss(rng), gauss(rng)));
      const auto rp = project_segment(right.to_frame(s.p_b), right.to_frame(s.p_e), camera);
      if (rp && (rp->second - rp->first).norm() >= min_line) {
        m.right = LineView::from_segment(rp->first + sigma * Vec2(gauss(rng), gauss(rng)),
                                         rp->second + sigma * Vec2(gauss(rng), gauss(rng)));
      }
      frame.lines.push_back(m);
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace plvio
