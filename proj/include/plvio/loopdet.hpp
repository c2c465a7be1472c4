#pragma once

// Keyframe selection, the keyframe database and loop detection by
// descriptor voting followed by fundamental-matrix RANSAC (2D-2D) and PnP
// RANSAC (3D-2D).

#include "plvio/sim.hpp"
#include "plvio/update.hpp"

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace plvio {

struct KeyframeFeature {
  int track_id = 0;
  Descriptor descriptor{};
  Vec2 uv = Vec2::Zero();  // left image, normalized
  Vec3 p_G = Vec3::Zero();
};

struct KeyframeRecord {
  int frame_id = 0;
  Timestamp timestamp_ns = 0;
  Pose pose;  // left camera at marginalization time
  std::vector<KeyframeFeature> features;
};

struct QueryFeature {
  int track_id = 0;
  Descriptor descriptor{};
  StereoObservation obs;
};

struct LoopQuery {
  int frame_id = 0;
  std::vector<QueryFeature> features;
};

struct LoopCandidate {
  int query_frame_id = 0;
  int match_frame_id = 0;
  std::vector<LoopMatch> matches;   // verified inliers
  std::vector<int> query_track_ids;  // parallel to `matches`
  int inlier_count = 0;
  Pose query_pose;  // PnP estimate of the query left camera in the map
};

struct LoopConfig {
  int max_keyframes = 500;
  int exclusion_window = 30;
  int min_loop_inliers = 20;
  int max_hamming = 64;
  double ratio = 0.8;
  int max_candidates = 3;
  double fundamental_threshold = 3.0 / 460.0;  // Sampson distance
  double pnp_threshold = 3.0 / 460.0;          // reprojection error
  double ransac_confidence = 0.99;
  int ransac_max_iterations = 500;
  // Keyframe selection.
  double keyframe_distance = 0.3;  // m
  double keyframe_angle_deg = 15.0;
  int keyframe_min_tracked = 20;
};

class KeyframeDatabase {
 public:
  using RecordPtr = std::shared_ptr<const KeyframeRecord>;

  explicit KeyframeDatabase(int max_keyframes = 500) : max_keyframes_(max_keyframes) {}

  // Throws DuplicateFrameId. Evicts the oldest record when full.
  void insert(KeyframeRecord record);
  const KeyframeRecord* find(int frame_id) const;
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  // Records in insertion order.
  const std::deque<RecordPtr>& records() const { return records_; }
  // Cheap read-only copy for the detection worker.
  std::deque<RecordPtr> snapshot() const { return records_; }

  void dump(const std::string& path) const;
  static KeyframeDatabase load(const std::string& path, int max_keyframes = 500);

 private:
  int max_keyframes_;
  std::deque<RecordPtr> records_;
};

// True iff tracked_count >= min_tracked and the pose is at least
// keyframe_distance or keyframe_angle_deg away from `last_keyframe`
// (always true when there is none).
bool select_keyframe(const Pose& camera_pose, int tracked_count, const std::optional<Pose>& last_keyframe,
                     const LoopConfig& cfg);

std::optional<LoopCandidate> detect_loop(const LoopQuery& query, const std::deque<KeyframeDatabase::RecordPtr>& db,
                                         const LoopConfig& cfg, std::uint64_t seed);

// ---- geometric verification building blocks --------------------------------

// Normalized 8-point fundamental matrix with rank-2 enforcement, x2^T F x1 = 0.
std::optional<Mat3> fundamental_8point(const std::vector<Vec2>& x1, const std::vector<Vec2>& x2);
double fundamental_sampson(const Mat3& F, const Vec2& x1, const Vec2& x2);
std::vector<bool> fundamental_ransac(const std::vector<Vec2>& x1, const std::vector<Vec2>& x2, double threshold,
                                     double confidence, int max_iterations, std::uint64_t seed);

// Camera pose (global -> camera) from >= 6 correspondences by DLT.
std::optional<Pose> pnp_dlt(const std::vector<Vec3>& points, const std::vector<Vec2>& uv);
// Gauss-Newton refinement of the reprojection error.
Pose pnp_refine(const Pose& initial, const std::vector<Vec3>& points, const std::vector<Vec2>& uv,
                int iterations = 10);
struct PnpResult {
  Pose pose;
  std::vector<bool> inliers;
};
std::optional<PnpResult> pnp_ransac(const std::vector<Vec3>& points, const std::vector<Vec2>& uv, double threshold,
                                    double confidence, int max_iterations, std::uint64_t seed);

// Runs detect_loop on a background thread. One request is in flight at a
// time; a result is only handed out for the request that is currently
// awaited and is otherwise dropped.
class LoopWorker {
 public:
  explicit LoopWorker(LoopConfig cfg);
  ~LoopWorker();
  LoopWorker(const LoopWorker&) = delete;
  LoopWorker& operator=(const LoopWorker&) = delete;

  // Returns false (and drops the request) if the worker is still busy.
  bool submit(LoopQuery query, std::deque<KeyframeDatabase::RecordPtr> snapshot, std::uint64_t seed);
  // Non-blocking. Returns the finished result for `query_frame_id`, if any;
  // an unfinished request is abandoned.
  std::optional<std::optional<LoopCandidate>> collect(int query_frame_id);

 private:
  void run();

  LoopConfig cfg_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
  bool busy_ = false;
  std::optional<LoopQuery> pending_;
  std::deque<KeyframeDatabase::RecordPtr> pending_db_;
  std::uint64_t pending_seed_ = 0;
  std::optional<std::pair<int, std::optional<LoopCandidate>>> done_;
  int abandoned_frame_ = -1;
  std::thread thread_;
};

}  // namespace plvio
