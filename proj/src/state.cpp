#include "plvio/state.hpp"

#include <algorithm>
#include <string>

namespace plvio {

FilterState::FilterState(const ImuState& imu_state, const MatX& imu_cov, const Vec3& g, Timestamp t,
                         bool estimate_ext)
    : imu(imu_state), cov(imu_cov), gravity(g), timestamp_ns(t), estimate_extrinsics(estimate_ext) {
  anchor = ImuAnchor{imu.q_GB, imu.v_GB, imu.p_GB};
  check_consistency();
}

std::optional<std::size_t> FilterState::find_clone(int frame_id) const {
  for (std::size_t i = 0; i < clones.size(); ++i) {
    if (clones[i].frame_id == frame_id) return i;
  }
  return std::nullopt;
}

const CameraClone& FilterState::clone(int frame_id) const {
  const auto i = find_clone(frame_id);
  if (!i) throw VioError(ErrorCode::kInvalidArgument, "frame " + std::to_string(frame_id) + " not in window");
  return clones[*i];
}

void FilterState::check_consistency() const {
  if (cov.rows() != dim() || cov.cols() != dim()) {
    throw VioError(ErrorCode::kDimensionMismatch,
                   "covariance is " + std::to_string(cov.rows()) + "x" + std::to_string(cov.cols()) +
                       ", error state has dimension " + std::to_string(dim()));
  }
}

void symmetrize(MatX& cov) {
  const MatX sym = 0.5 * (cov + cov.transpose());
  cov = sym;
}

MatX clone_jacobian(const FilterState& state) {
  const int n = state.dim();
  MatX J = MatX::Zero(6, n);
  const Mat3 R_GB = state.imu.q_GB.matrix();
  const Mat3 R_BC = state.imu.extrinsics.q_BC.matrix();
  const Vec3& p_BC = state.imu.extrinsics.p_BC;

  J.block<3, 3>(0, idx::kTheta) = R_BC;
  J.block<3, 3>(3, idx::kP) = Mat3::Identity();
  J.block<3, 3>(3, idx::kTheta) = R_GB.transpose() * skew(p_BC);
  if (state.estimate_extrinsics) {
    J.block<3, 3>(0, idx::kExtTheta) = Mat3::Identity();
    J.block<3, 3>(3, idx::kExtP) = R_GB.transpose();
  }
  return J;
}

void augment_clone(FilterState& state, Timestamp timestamp_ns, int frame_id, int max_clones) {
  if (static_cast<int>(state.clones.size()) >= max_clones) {
    throw VioError(ErrorCode::kWindowFull, "window holds " + std::to_string(state.clones.size()) + " clones");
  }
  if (!state.clones.empty() && timestamp_ns <= state.clones.back().timestamp_ns) {
    throw VioError(ErrorCode::kNonMonotonicTime, "clone timestamp does not advance");
  }
  if (state.find_clone(frame_id)) {
    throw VioError(ErrorCode::kInvalidArgument, "frame id " + std::to_string(frame_id) + " already cloned");
  }

  const int n = state.dim();
  const MatX J = clone_jacobian(state);
  const MatX PJt = state.cov * J.transpose();  // n x 6

  MatX cov(n + 6, n + 6);
  cov.topLeftCorner(n, n) = state.cov;
  cov.topRightCorner(n, 6) = PJt;
  cov.bottomLeftCorner(6, n) = PJt.transpose();
  cov.bottomRightCorner(6, 6) = J * PJt;
  state.cov = std::move(cov);
  symmetrize(state.cov);

  CameraClone clone;
  clone.pose = state.imu.camera_pose();
  clone.first_estimate = clone.pose;
  clone.timestamp_ns = timestamp_ns;
  clone.frame_id = frame_id;
  state.clones.push_back(clone);
}

std::vector<int> select_clones_to_prune(const FilterState& state, PrunePolicy policy) {
  std::vector<int> ids;
  if (state.clones.empty()) return ids;
  switch (policy) {
    case PrunePolicy::kOldestFirst:
      ids.push_back(state.clones.front().frame_id);
      break;
    case PrunePolicy::kEveryOtherOldestHalf: {
      const std::size_t half = std::max<std::size_t>(1, state.clones.size() / 2);
      for (std::size_t i = 0; i < half; i += 2) ids.push_back(state.clones[i].frame_id);
      break;
    }
  }
  return ids;
}

std::vector<CameraClone> remove_clones(FilterState& state, const std::vector<int>& frame_ids) {
  std::vector<CameraClone> removed;
  std::vector<bool> drop(state.clones.size(), false);
  for (int id : frame_ids) {
    const auto i = state.find_clone(id);
    if (i && !drop[*i]) {
      drop[*i] = true;
      removed.push_back(state.clones[*i]);
    }
  }
  if (removed.empty()) return removed;

  // Keep the principal submatrix of the surviving error-state entries.
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(state.dim()));
  for (int i = 0; i < state.imu_dim(); ++i) keep.push_back(i);
  std::vector<CameraClone> survivors;
  for (std::size_t c = 0; c < state.clones.size(); ++c) {
    if (drop[c]) continue;
    const int offset = state.clone_offset(c);
    for (int k = 0; k < idx::kCloneDim; ++k) keep.push_back(offset + k);
    survivors.push_back(state.clones[c]);
  }
  const int m = static_cast<int>(keep.size());
  MatX cov(m, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) cov(i, j) = state.cov(keep[i], keep[j]);
  }
  state.cov = std::move(cov);
  state.clones = std::move(survivors);
  std::sort(removed.begin(), removed.end(),
            [](const CameraClone& a, const CameraClone& b) { return a.timestamp_ns < b.timestamp_ns; });
  return removed;
}

std::vector<CameraClone> prune_clones(FilterState& state, PrunePolicy policy) {
  return remove_clones(state, select_clones_to_prune(state, policy));
}

void inject_error(FilterState& state, const VecX& dx) {
  if (dx.size() != state.dim()) {
    throw VioError(ErrorCode::kDimensionMismatch, "correction has dimension " + std::to_string(dx.size()) +
                                                      ", state has " + std::to_string(state.dim()));
  }
  ImuState& imu = state.imu;
  imu.q_GB = small_angle_quat(dx.segment<3>(idx::kTheta)) * imu.q_GB;
  imu.bg += dx.segment<3>(idx::kBg);
  imu.v_GB += dx.segment<3>(idx::kV);
  imu.ba += dx.segment<3>(idx::kBa);
  imu.p_GB += dx.segment<3>(idx::kP);
  if (state.estimate_extrinsics) {
    imu.extrinsics.q_BC = small_angle_quat(dx.segment<3>(idx::kExtTheta)) * imu.extrinsics.q_BC;
    imu.extrinsics.p_BC += dx.segment<3>(idx::kExtP);
  }
  for (std::size_t c = 0; c < state.clones.size(); ++c) {
    const int o = state.clone_offset(c);
    Pose& pose = state.clones[c].pose;
    pose.rotation = small_angle_quat(dx.segment<3>(o)) * pose.rotation;
    pose.position += dx.segment<3>(o + 3);
  }
}

namespace {

// Inverse of small_angle_quat: dtheta with small_angle_quat(dtheta) * b == a.
Vec3 rotation_difference(const UnitQuaternion& a, const UnitQuaternion& b) {
  const UnitQuaternion d = a * b.inverse();
  return 2.0 * Vec3(d.x(), d.y(), d.z()) / d.w();
}

}  // namespace

VecX state_difference(const FilterState& a, const FilterState& b) {
  if (a.dim() != b.dim() || a.clones.size() != b.clones.size() || a.estimate_extrinsics != b.estimate_extrinsics) {
    throw VioError(ErrorCode::kDimensionMismatch, "states have different layouts");
  }
  VecX d(a.dim());
  d.segment<3>(idx::kTheta) = rotation_difference(a.imu.q_GB, b.imu.q_GB);
  d.segment<3>(idx::kBg) = a.imu.bg - b.imu.bg;
  d.segment<3>(idx::kV) = a.imu.v_GB - b.imu.v_GB;
  d.segment<3>(idx::kBa) = a.imu.ba - b.imu.ba;
  d.segment<3>(idx::kP) = a.imu.p_GB - b.imu.p_GB;
  if (a.estimate_extrinsics) {
    d.segment<3>(idx::kExtTheta) = rotation_difference(a.imu.extrinsics.q_BC, b.imu.extrinsics.q_BC);
    d.segment<3>(idx::kExtP) = a.imu.extrinsics.p_BC - b.imu.extrinsics.p_BC;
  }
  for (std::size_t c = 0; c < a.clones.size(); ++c) {
    const int o = a.clone_offset(c);
    d.segment<3>(o) = rotation_difference(a.clones[c].pose.rotation, b.clones[c].pose.rotation);
    d.segment<3>(o + 3) = a.clones[c].pose.position - b.clones[c].pose.position;
  }
  return d;
}

}  // namespace plvio
