#pragma once

// Deterministic synthetic sensors: an analytic trajectory, a landmark world
// on the walls of a cylindrical room, IMU synthesis and stereo point/line
// observations with noise, wrong associations and track dropout.
//
// Every stream is a pure function of the parameters and the seed.

#include "plvio/line_meas.hpp"
#include "plvio/propagation.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace plvio {

// 256-bit binary descriptor.
using Descriptor = std::array<std::uint64_t, 4>;
int hamming_distance(const Descriptor& a, const Descriptor& b);
// 64 lowercase hex digits, most significant word first.
std::string descriptor_to_hex(const Descriptor& d);
Descriptor descriptor_from_hex(const std::string& s);

// Sum of sinusoids a_k sin(2 pi f_k t + phi_k) plus an offset and a linear rate.
struct Harmonic {
  double amplitude = 0.0;
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad
};

struct Signal {
  double offset = 0.0;
  double rate = 0.0;
  std::vector<Harmonic> harmonics;

  double value(double t) const;
  double d1(double t) const;
  double d2(double t) const;
};

struct TrajectoryPoint {
  UnitQuaternion q_GB;
  Vec3 p_GB;
  Vec3 v_GB;
  Vec3 a_G;       // acceleration in the global frame
  Vec3 omega_B;   // angular rate in the body frame
};

// Body position per axis and Z-Y-X Euler angles (yaw, pitch, roll), each an
// analytic Signal. The body -> global rotation is Rz(yaw) Ry(pitch) Rx(roll).
class SimTrajectory {
 public:
  SimTrajectory() = default;
  SimTrajectory(std::array<Signal, 3> position, Signal yaw, Signal pitch, Signal roll, double duration);

  // Small hand-held style motion around the room center.
  static SimTrajectory sinusoid(double duration);
  // Rounded-square loop of half-width `radius` traversed in `lap_period`
  // seconds, facing outward.
  static SimTrajectory square_loop(double radius, double lap_period, double duration);
  static SimTrajectory stationary(const UnitQuaternion& q_GB, const Vec3& p, double duration);

  TrajectoryPoint evaluate(double t) const;
  double duration() const { return duration_; }

 private:
  std::array<Signal, 3> position_;
  Signal yaw_;
  Signal pitch_;
  Signal roll_;
  double duration_ = 0.0;
};

struct SimPoint {
  int id = 0;
  Vec3 p = Vec3::Zero();
  Descriptor signature{};
};

struct SimSegment {
  int id = 0;
  Vec3 p_b = Vec3::Zero();
  Vec3 p_e = Vec3::Zero();
};

struct WorldParams {
  int num_points = 1500;
  int num_segments = 150;
  double room_radius = 8.0;  // m
  double floor_z = -2.0;
  double ceiling_z = 3.0;
  double min_segment_length = 0.4;
  double max_segment_length = 1.5;
};

struct SimWorld {
  std::vector<SimPoint> points;
  std::vector<SimSegment> segments;
  std::uint64_t seed = 0;
};

SimWorld make_world(const WorldParams& params, std::uint64_t seed);

struct CameraParams {
  double focal = 460.0;  // px, used to convert pixel quantities
  int width = 752;
  int height = 480;
  Extrinsics extrinsics;  // body -> left camera
  StereoRig rig;
  double z_min = 0.2;
  double z_max = 30.0;

  // Forward-looking camera: camera z = body x, camera x = -body y.
  static CameraParams standard();
  double u_limit() const { return 0.5 * width / focal; }
  double v_limit() const { return 0.5 * height / focal; }
  bool in_image(const Vec2& uv) const { return std::abs(uv.x()) <= u_limit() && std::abs(uv.y()) <= v_limit(); }
};

struct ImuSimParams {
  double rate = 200.0;  // Hz
  NoiseParams noise;
  bool zero_noise = false;
  Vec3 initial_gyro_bias = Vec3::Zero();
  Vec3 initial_accel_bias = Vec3::Zero();
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

struct GroundTruthSample {
  Timestamp timestamp_ns = 0;
  ImuState state;
};

struct ImuStream {
  std::vector<ImuSample> samples;
  std::vector<GroundTruthSample> truth;  // one per sample
};

ImuStream synthesize_imu(const SimTrajectory& traj, const ImuSimParams& params, std::uint64_t seed);

struct PointMeasurement {
  int track_id = 0;
  Vec2 left_uv = Vec2::Zero();
  std::optional<Vec2> right_uv;
  Descriptor descriptor{};
  // Ground-truth labels, not used by the estimator.
  int landmark_id = -1;
  bool outlier = false;
};

struct LineMeasurement {
  int line_id = 0;
  LineView left;
  std::optional<LineView> right;
  int segment_id = -1;
};

struct FrameObservations {
  int frame_id = 0;
  Timestamp timestamp_ns = 0;
  std::vector<PointMeasurement> points;
  std::vector<LineMeasurement> lines;
};

struct ObservationParams {
  double camera_rate = 20.0;  // Hz
  double pixel_noise = 1.0;   // px std, converted by the focal length
  double outlier_rate = 0.0;
  double dropout_rate = 0.0;
  int max_points = 150;
  int max_lines = 30;
  double min_line_pixels = 20.0;
  double descriptor_flip = 0.05;
  double max_track_frames = 1e9;  // tracks longer than this are restarted
};

std::vector<FrameObservations> synthesize_observations(const SimWorld& world, const SimTrajectory& traj,
                                                       const CameraParams& camera,
                                                       const ObservationParams& params, std::uint64_t seed);

// Camera timestamps used by synthesize_observations.
std::vector<Timestamp> camera_timestamps(double duration, double camera_rate);

}  // namespace plvio
