#pragma once

// Line features: a 2D observation is stored in point-normal form (z, n) and a
// 3D line as two endpoints. The residual of each endpoint is the signed
// distance of its projection to the observed image line,
//   r = n^T z - n^T pi(p),
// so a view contributes one row per endpoint (two rows per camera).

#include "plvio/point_meas.hpp"

#include <optional>
#include <vector>

namespace plvio {

struct LineView {
  Vec2 z = Vec2::Zero();         // a point on the line, normalized coordinates
  Vec2 n = Vec2(0.0, 1.0);       // unit normal
  Vec2 p1 = Vec2::Zero();        // detected segment endpoints
  Vec2 p2 = Vec2::Zero();

  // Point-normal form from a detected segment; z is its midpoint.
  static LineView from_segment(const Vec2& p1, const Vec2& p2);
};

struct LineObservation {
  int frame_id = 0;
  LineView left;
  std::optional<LineView> right;
};

struct LineEndpoints {
  Vec3 p_b = Vec3::Zero();
  Vec3 p_e = Vec3::Zero();
};

struct LineTrack {
  int line_id = 0;
  std::vector<LineObservation> observations;
  std::optional<LineEndpoints> L_G;
};

struct LineTriangulationOptions {
  double min_plane_angle_deg = 1.0;
  double min_length = 0.05;  // m
  double z_min = 1e-3;
};

// Plane-intersection triangulation over all views; endpoints are the points
// on the 3D line closest to the rays through the first view's detected
// endpoints, p_b being the one with the smaller u.
LineEndpoints triangulate_line(const LineTrack& track, const FilterState& state, const StereoRig& rig,
                               const LineTriangulationOptions& options = {});

// Residual of one camera view. `camera` is the pose of the observing camera.
// Throws BehindCamera.
Vec2 line_residual(const LineView& view, const LineEndpoints& L, const Pose& camera, double z_min = 1e-3);

struct LineViewJacobian {
  Vec2 r;
  Mat26 H_clone;  // w.r.t. the left clone error [dtheta, dp]
  Eigen::Matrix<double, 2, 6> H_l;  // w.r.t. [p_b, p_e]
};

// Residual and Jacobians of a view taken by the left clone, or by the right
// camera when `right_of` is given.
std::optional<LineViewJacobian> line_jacobians(const LineView& view, const LineEndpoints& L, const Pose& left_clone,
                                               const StereoRig* right_of, double z_min = 1e-3);

// Stacked rows for all views of a track. H_f has six columns [p_b, p_e].
FeatureJacobians line_residual_jacobian(const LineTrack& track, const LineEndpoints& L, const FilterState& state,
                                        const StereoRig& rig, double z_min = 1e-3);

// Left-nullspace projection of H_l. The numerical rank of H_l is at most 6
// and typically 4 for noiseless data (each endpoint may slide along the line).
ResidualBlock marginalize_line(const VecX& r, const MatX& H_x, const MatX& H_l, double noise_sigma,
                               double* nullspace_residual = nullptr);

}  // namespace plvio
