#pragma once

// Filter state: IMU state, sliding window of camera clones and the joint
// error-state covariance.
//
// Error-state layout (rows/columns of FilterState::cov):
//   [ dtheta(3) dbg(3) dv(3) dba(3) dp(3) | dtheta_BC(3) dp_BC(3) ]  IMU block
//   [ dtheta_C(3) dp_C(3) ] per clone, in window order.
// The extrinsic columns exist only when extrinsics are estimated. Rotations
// use the left-multiplicative error q = small_angle_quat(dtheta) * q_hat, all
// other quantities the additive error x = x_hat + dx.

#include "plvio/geom.hpp"

#include <optional>
#include <vector>

namespace plvio {

namespace idx {
constexpr int kTheta = 0;
constexpr int kBg = 3;
constexpr int kV = 6;
constexpr int kBa = 9;
constexpr int kP = 12;
constexpr int kExtTheta = 15;
constexpr int kExtP = 18;
constexpr int kImuDim = 15;
constexpr int kImuDimWithExtrinsics = 21;
constexpr int kCloneDim = 6;
}  // namespace idx

// Body -> left camera calibration. q_BC maps body vectors into the camera
// frame, p_BC is the camera origin in the body frame.
struct Extrinsics {
  UnitQuaternion q_BC;
  Vec3 p_BC = Vec3::Zero();

  Pose as_pose() const { return Pose{q_BC, p_BC}; }
};

struct ImuState {
  UnitQuaternion q_GB;  // global -> body
  Vec3 bg = Vec3::Zero();
  Vec3 v_GB = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  Vec3 p_GB = Vec3::Zero();
  Extrinsics extrinsics;

  Pose body_pose() const { return Pose{q_GB, p_GB}; }
  Pose camera_pose() const { return compose(extrinsics.as_pose(), body_pose()); }
};

struct CameraClone {
  Pose pose;  // left camera: rotation global -> camera, origin in global
  Timestamp timestamp_ns = 0;
  int frame_id = 0;
  // Pose at augmentation time, used as the linearization anchor of the
  // observability constraint.
  Pose first_estimate;
};

// First-estimate anchor of the IMU state for the observability constraint.
struct ImuAnchor {
  UnitQuaternion q_GB;
  Vec3 v_GB = Vec3::Zero();
  Vec3 p_GB = Vec3::Zero();
};

class FilterState {
 public:
  FilterState() = default;
  FilterState(const ImuState& imu, const MatX& imu_cov, const Vec3& gravity, Timestamp t,
              bool estimate_extrinsics = false);

  ImuState imu;
  std::vector<CameraClone> clones;
  MatX cov;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  Timestamp timestamp_ns = 0;
  bool estimate_extrinsics = false;
  ImuAnchor anchor;

  int imu_dim() const { return estimate_extrinsics ? idx::kImuDimWithExtrinsics : idx::kImuDim; }
  int dim() const { return imu_dim() + idx::kCloneDim * static_cast<int>(clones.size()); }
  int clone_offset(std::size_t clone_index) const {
    return imu_dim() + idx::kCloneDim * static_cast<int>(clone_index);
  }
  // Index in `clones`, or nullopt.
  std::optional<std::size_t> find_clone(int frame_id) const;
  const CameraClone& clone(int frame_id) const;

  // Throws DimensionMismatch if cov does not match the layout.
  void check_consistency() const;
};

// 0.5 (P + P^T).
void symmetrize(MatX& cov);

// Jacobian (6 x dim) of a new clone pose w.r.t. the current error state.
MatX clone_jacobian(const FilterState& state);

// Appends the current left-camera pose as a clone. Throws WindowFull when
// the window already holds `max_clones` clones and NonMonotonicTime when the
// timestamp does not advance past the newest clone.
void augment_clone(FilterState& state, Timestamp timestamp_ns, int frame_id, int max_clones);

enum class PrunePolicy {
  kOldestFirst,            // remove the single oldest clone
  kEveryOtherOldestHalf,   // remove clones 0, 2, 4, ... of the oldest half
};

// Frame ids that the policy would remove from the current window.
std::vector<int> select_clones_to_prune(const FilterState& state, PrunePolicy policy);

// Removes the given clones and marginalizes them out of the covariance.
std::vector<CameraClone> remove_clones(FilterState& state, const std::vector<int>& frame_ids);

std::vector<CameraClone> prune_clones(FilterState& state, PrunePolicy policy);

// Applies an error-state correction in place.
void inject_error(FilterState& state, const VecX& dx);

// Error-state difference a [-] b such that inject_error(b, d) reproduces a to
// first order (exactly for the additive parts). Requires identical layouts.
VecX state_difference(const FilterState& a, const FilterState& b);

}  // namespace plvio
