#pragma once

// Stereo point-feature measurement model: pinhole projection in normalized
// image coordinates, multi-view triangulation, reprojection residuals with
// analytic Jacobians, and feature marginalization by left-nullspace
// projection.
//
// Jacobians are measurement Jacobians: r = z - h(x_hat) ~= H dx + n, so
// H = dh/dx = -dr/dx.

#include "plvio/state.hpp"

#include <optional>
#include <vector>

namespace plvio {

// Fixed stereo calibration. `left_to_right` maps left-camera coordinates into
// the right camera; its position is the right camera origin in the left frame.
struct StereoRig {
  Pose left_to_right{UnitQuaternion(), Vec3(0.11, 0.0, 0.0)};

  Pose right_pose(const Pose& left) const { return compose(left_to_right, left); }
};

struct StereoObservation {
  int frame_id = 0;
  Vec2 left_uv = Vec2::Zero();
  std::optional<Vec2> right_uv;
};

struct PointTrack {
  int track_id = 0;
  std::vector<StereoObservation> observations;
};

struct ResidualBlock {
  VecX r;
  MatX H;  // rows(r) x error-state dimension
  double noise_sigma = 1.0;

  long rows() const { return r.size(); }
};

// Throws BehindCamera if p_cam.z() <= z_min.
Vec2 pinhole_project(const Vec3& p_cam, double z_min = 1e-3);

// Projection of a global point into a camera with Jacobians w.r.t. the left
// clone error (dtheta, dp) and the point. For the right camera pass the rig.
struct ProjectionJacobian {
  Vec2 z_hat;
  Mat23 d_theta;
  Mat23 d_position;
  Mat23 d_point;
  double depth = 0.0;
};
std::optional<ProjectionJacobian> project_with_jacobian(const Pose& left_clone, const StereoRig* right_of,
                                                        const Vec3& p_global, double z_min);

struct TriangulationOptions {
  double min_baseline = 0.02;       // m
  double reprojection_gate = 0.01;  // mean residual, normalized units
  double z_min = 1e-3;              // m
  int max_iterations = 10;
  double step_tolerance = 1e-8;
};

// Gauss-Newton triangulation in inverse depth anchored at the first
// observing left camera, initialized by two-view DLT.
Vec3 triangulate(const PointTrack& track, const FilterState& state, const StereoRig& rig,
                 const TriangulationOptions& options = {});

struct FeatureJacobians {
  VecX r;
  MatX H_x;  // rows x state dim
  MatX H_f;  // rows x 3 (points) or rows x 6 (lines)
  std::vector<std::size_t> row_clone;  // clone index of every row
  std::vector<int> row_endpoint;       // lines: 0 = begin, 1 = end; points: 0
  int dropped_rows = 0;
};

FeatureJacobians point_residual_jacobian(const PointTrack& track, const Vec3& p_f, const FilterState& state,
                                         const StereoRig& rig, double z_min = 1e-3);

// Observability-constrained modification of point or line Jacobians: every
// clone block row is projected so that it annihilates the global yaw
// direction (at the clones' first estimates) and the feature columns are set
// to minus the clone position columns.
void apply_observability_constraint(FeatureJacobians& jac, const FilterState& state,
                                    const std::vector<Vec3>& feature_points);

// Projects (r, H_x) onto the left nullspace of H_f. If `nullspace_residual`
// is given it receives max |A^T H_f|.
ResidualBlock marginalize_feature(const VecX& r, const MatX& H_x, const MatX& H_f, double noise_sigma,
                                  double* nullspace_residual = nullptr);

}  // namespace plvio
