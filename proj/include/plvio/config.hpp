#pragma once

// Run configuration: a flat key=value file. Blank lines and '#' comments are
// ignored; unknown keys and malformed values are errors. Pixel quantities are
// converted to normalized image units with camera.focal.

#include "plvio/frontend.hpp"
#include "plvio/kernels.hpp"
#include "plvio/loopdet.hpp"
#include "plvio/sim.hpp"
#include "plvio/state.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace plvio {

enum class TrajectoryKind { kSinusoid, kSquareLoop, kStationary };

struct EstimatorConfig {
  NoiseParams noise;
  UpdateConfig update;
  BlockBuildOptions blocks;
  LoopConfig loop;
  Extrinsics extrinsics;
  StereoRig rig;
  int max_clones = 20;
  PrunePolicy prune_policy = PrunePolicy::kEveryOtherOldestHalf;
  bool oc_fix = true;
  bool estimate_extrinsics = false;
  bool use_points = true;
  bool use_lines = true;
  bool loop_closure = true;
  bool sync_loop_detection = true;
  bool parallel = true;
  bool two_point_ransac = true;
  TwoPointRansacOptions ransac;
  int min_point_track = 3;
  int min_line_track = 3;
  int max_loop_matches_per_frame = 1000;
};

struct RunConfig {
  std::uint64_t seed = 1;

  TrajectoryKind trajectory = TrajectoryKind::kSinusoid;
  double duration = 60.0;
  double square_radius = 4.0;
  double lap_period = 40.0;
  double camera_rate = 20.0;
  double imu_rate = 200.0;
  bool zero_imu_noise = false;
  Vec3 initial_gyro_bias = Vec3::Zero();
  Vec3 initial_accel_bias = Vec3::Zero();
  double pixel_noise = 1.0;  // px
  double outlier_rate = 0.0;
  double dropout_rate = 0.0;
  int max_points = 150;
  int max_lines = 30;
  double min_line_pixels = 20.0;
  double descriptor_flip = 0.05;
  double max_track_frames = 1e9;
  WorldParams world;

  double focal = 460.0;
  int width = 752;
  int height = 480;
  double baseline = 0.11;

  NoiseParams imu_noise;

  int max_clones = 20;
  PrunePolicy prune_policy = PrunePolicy::kEveryOtherOldestHalf;
  bool oc_fix = true;
  bool estimate_extrinsics = false;
  int min_point_track = 3;
  int min_line_track = 3;
  bool two_point_ransac = true;
  double ransac_threshold_px = 3.0;
  bool parallel = true;
  double init_sigma_theta = 0.01;  // rad
  double init_sigma_bg = 1e-3;     // rad/s
  double init_sigma_v = 0.05;      // m/s
  double init_sigma_ba = 0.02;     // m/s^2
  double init_sigma_p = 0.01;      // m
  bool sample_initial_error = false;

  double sigma_point_px = 1.0;
  double sigma_line_px = 1.0;
  double sigma_loop_px = 2.0;
  double map_point_sigma = 0.0;
  double chi2_confidence = 0.95;
  int max_stacked_rows = 2000;

  double min_baseline = 0.02;
  double reprojection_gate_px = 4.6;
  double line_min_length = 0.05;
  double line_min_angle_deg = 1.0;

  bool use_points = true;
  bool use_lines = true;
  bool loop_closure = true;
  bool sync_loop_detection = true;
  LoopConfig loop;
  double loop_ransac_threshold_px = 3.0;
  int max_loop_matches_per_frame = 1000;

  // Recorded input streams; when all are set, `run` reads them instead of
  // simulating.
  std::string imu_path;
  std::string tracks_path;
  std::string groundtruth_path;

  void validate() const;

  WorldParams world_params() const { return world; }
  ImuSimParams imu_sim_params() const;
  ObservationParams observation_params() const;
  CameraParams camera_params() const;
  EstimatorConfig estimator_config() const;
  MatX initial_covariance() const;
};

// Applies one key=value assignment. Throws InvalidArgument for unknown keys
// and ParseError for malformed values.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

// All keys with their current values, one "key = value" per line.
std::string dump_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace plvio
