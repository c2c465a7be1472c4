#pragma once

// The estimator: IMU propagation, clone augmentation, feature-track
// bookkeeping with two-point RANSAC, joint point/line MSCKF updates, clone
// pruning, keyframe selection and loop-closure updates.

#include "plvio/config.hpp"
#include "plvio/io.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace plvio {

struct FrameResult {
  int frame_id = 0;
  TrajectorySample pose;
  double update_seconds = 0.0;  // block building, compression and EKF update
  int point_blocks = 0;
  int line_blocks = 0;
  int update_rows = 0;
  bool loop_detected = false;
  LoopUpdateStats loop;
};

struct RunStats {
  int frames = 0;
  int point_blocks = 0;
  int line_blocks = 0;
  int gated = 0;
  std::map<std::string, int> failures;
  double max_point_nullspace = 0.0;
  double max_line_nullspace = 0.0;
  int marginalizations = 0;
  int ransac_rejected = 0;
  int keyframes = 0;
  int loop_queries = 0;
  int loop_detections = 0;
  int loop_update_frames = 0;
  int loop_matches_accepted = 0;
  int loop_all_gated = 0;
  int async_dropped = 0;
};

class Estimator {
 public:
  Estimator(EstimatorConfig cfg, FilterState initial, std::uint64_t seed);
  ~Estimator();
  Estimator(const Estimator&) = delete;
  Estimator& operator=(const Estimator&) = delete;

  // IMU samples must arrive in time order and cover the frames that follow.
  void add_imu(const ImuSample& sample);
  FrameResult process_frame(const FrameObservations& frame);

  const FilterState& state() const { return state_; }
  const RunStats& stats() const { return stats_; }
  const KeyframeDatabase& keyframes() const { return db_; }

 private:
  struct PointTrackState {
    PointTrack track;
    int instance = 0;
    int last_frame = -1;
  };
  struct LineTrackState {
    LineTrack track;
    int last_frame = -1;
  };
  struct PendingFeature {
    int instance = 0;
    int track_id = 0;
    Descriptor descriptor{};
    Vec2 uv = Vec2::Zero();
  };

  void propagate_to(Timestamp t);
  void msckf_update(const std::vector<PointTrack>& points, const std::vector<int>& instances,
                    const std::vector<LineTrack>& lines, FrameResult& result);
  std::optional<LoopCandidate> run_loop_detection(const LoopQuery& query);
  void loop_update(const FrameObservations& frame, const std::set<int>& accepted_tracks, FrameResult& result);
  void retire_clones(const std::vector<int>& frame_ids);

  EstimatorConfig cfg_;
  FilterState state_;
  std::uint64_t seed_;
  RunStats stats_;

  std::vector<ImuSample> imu_;
  std::size_t imu_next_ = 0;  // first sample after the filter time

  std::map<int, PointTrackState> points_;
  std::map<int, LineTrackState> lines_;
  int next_instance_ = 0;
  int prev_frame_id_ = -1;

  KeyframeDatabase db_;
  std::optional<Pose> last_keyframe_;
  std::map<int, std::vector<PendingFeature>> pending_keyframes_;
  std::map<int, Vec3> known_points_;  // track instance -> triangulated position
  std::map<int, Vec3> loop_tracks_;   // track id -> map point
  std::unique_ptr<LoopWorker> worker_;
  std::optional<int> awaited_query_;
};

struct SimData {
  SimTrajectory trajectory;
  SimWorld world;
  ImuStream imu;
  std::vector<FrameObservations> frames;
};

SimTrajectory make_trajectory(const RunConfig& cfg);
SimData simulate(const RunConfig& cfg);

struct RunOutput {
  std::vector<TrajectorySample> trajectory;
  std::vector<TrajectorySample> truth;  // at the trajectory timestamps
  std::vector<double> nees;             // 6-dof pose NEES per frame
  std::vector<double> position_error;   // m, per frame, unaligned
  std::vector<FrameResult> frames;
  RunStats stats;
  KeyframeDatabase keyframes;
};

// Ground-truth state at `t`, interpolated between samples. Throws NoOverlap
// outside the sample range.
ImuState truth_at(const std::vector<GroundTruthSample>& truth, Timestamp t);

// Initial filter state from the ground truth at the first frame, perturbed
// by a draw from the initial covariance when cfg.sample_initial_error is set.
FilterState initial_state(const RunConfig& cfg, const std::vector<GroundTruthSample>& truth, Timestamp t0);

RunOutput run_estimator(const RunConfig& cfg, const std::vector<ImuSample>& imu,
                        const std::vector<FrameObservations>& frames, const std::vector<GroundTruthSample>& truth);

// Simulates with cfg and runs the estimator on the result.
RunOutput run_simulation(const RunConfig& cfg);

// 6-dof pose NEES with the error ordered [dtheta, dp].
double pose_nees(const FilterState& state, const ImuState& truth);

}  // namespace plvio
