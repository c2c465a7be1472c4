#include "plvio/point_meas.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace plvio {

Vec2 pinhole_project(const Vec3& p_cam, double z_min) {
  if (!(p_cam.z() > z_min)) {
    throw VioError(ErrorCode::kBehindCamera, "point depth " + std::to_string(p_cam.z()) + " <= " +
                                                 std::to_string(z_min));
  }
  return p_cam.head<2>() / p_cam.z();
}

namespace {

Mat23 projection_derivative(const Vec3& p) {
  const double inv_z = 1.0 / p.z();
  Mat23 J;
  J << inv_z, 0.0, -p.x() * inv_z * inv_z,
       0.0, inv_z, -p.y() * inv_z * inv_z;
  return J;
}

}  // namespace

std::optional<ProjectionJacobian> project_with_jacobian(const Pose& left_clone, const StereoRig* right_of,
                                                        const Vec3& p_global, double z_min) {
  const Mat3 R = left_clone.rotation.matrix();
  const Vec3 p_left = R * (p_global - left_clone.position);

  Mat3 dp_dtheta = -skew(p_left);
  Mat3 dp_dposition = -R;
  Mat3 dp_dpoint = R;
  Vec3 p_cam = p_left;
  if (right_of != nullptr) {
    const Mat3 R12 = right_of->left_to_right.rotation.matrix();
    p_cam = R12 * (p_left - right_of->left_to_right.position);
    dp_dtheta = R12 * dp_dtheta;
    dp_dposition = R12 * dp_dposition;
    dp_dpoint = R12 * dp_dpoint;
  }
  if (!(p_cam.z() > z_min)) return std::nullopt;

  const Mat23 Jpi = projection_derivative(p_cam);
  ProjectionJacobian out;
  out.z_hat = p_cam.head<2>() / p_cam.z();
  out.d_theta = Jpi * dp_dtheta;
  out.d_position = Jpi * dp_dposition;
  out.d_point = Jpi * dp_dpoint;
  out.depth = p_cam.z();
  return out;
}

namespace {

struct View {
  Mat3 R;
  Vec3 center;
  Vec2 uv;
};

std::vector<View> collect_views(const PointTrack& track, const FilterState& state, const StereoRig& rig) {
  std::vector<View> views;
  views.reserve(track.observations.size() * 2);
  for (const StereoObservation& obs : track.observations) {
    const Pose& left = state.clone(obs.frame_id).pose;
    views.push_back(View{left.rotation.matrix(), left.position, obs.left_uv});
    if (obs.right_uv) {
      const Pose right = rig.right_pose(left);
      views.push_back(View{right.rotation.matrix(), right.position, *obs.right_uv});
    }
  }
  return views;
}

}  // namespace

Vec3 triangulate(const PointTrack& track, const FilterState& state, const StereoRig& rig,
                 const TriangulationOptions& options) {
  if (track.observations.empty()) {
    throw VioError(ErrorCode::kInsufficientBaseline, "track has no observations");
  }
  const std::vector<View> views = collect_views(track, state, rig);
  const View& anchor = views.front();

  // The second DLT view is the camera farthest from the anchor.
  std::size_t partner = 0;
  double baseline = 0.0;
  for (std::size_t i = 1; i < views.size(); ++i) {
    const double d = (views[i].center - anchor.center).norm();
    if (d > baseline) {
      baseline = d;
      partner = i;
    }
  }
  if (views.size() < 2 || baseline <= options.min_baseline) {
    throw VioError(ErrorCode::kInsufficientBaseline,
                   "track " + std::to_string(track.track_id) + " baseline " + std::to_string(baseline));
  }

  Eigen::Matrix4d A;
  for (int k = 0; k < 2; ++k) {
    const View& v = k == 0 ? anchor : views[partner];
    Eigen::Matrix<double, 3, 4> P;
    P.leftCols<3>() = v.R;
    P.col(3) = -v.R * v.center;
    A.row(2 * k) = v.uv.x() * P.row(2) - P.row(0);
    A.row(2 * k + 1) = v.uv.y() * P.row(2) - P.row(1);
  }
  const Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  const Vec4 X = svd.matrixV().col(3);
  if (std::abs(X.w()) < 1e-12) {
    throw VioError(ErrorCode::kInsufficientBaseline, "point at infinity");
  }
  const Vec3 p_init = X.head<3>() / X.w();
  const Vec3 p_anchor = anchor.R * (p_init - anchor.center);
  if (!(p_anchor.z() > options.z_min)) {
    throw VioError(ErrorCode::kNegativeDepth, "track " + std::to_string(track.track_id) + " behind anchor");
  }

  // Inverse-depth parameters (alpha, beta, rho) in the anchor frame.
  Vec3 params(p_anchor.x() / p_anchor.z(), p_anchor.y() / p_anchor.z(), 1.0 / p_anchor.z());
  std::vector<Mat3> R_rel(views.size());
  std::vector<Vec3> t_rel(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    R_rel[i] = views[i].R * anchor.R.transpose();
    t_rel[i] = views[i].R * (anchor.center - views[i].center);
  }

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Mat3 JtJ = Mat3::Zero();
    Vec3 Jte = Vec3::Zero();
    for (std::size_t i = 0; i < views.size(); ++i) {
      const Vec3 h = R_rel[i] * Vec3(params.x(), params.y(), 1.0) + params.z() * t_rel[i];
      if (!(h.z() > 0.0)) {
        throw VioError(ErrorCode::kNegativeDepth, "track " + std::to_string(track.track_id));
      }
      const Vec2 e = views[i].uv - h.head<2>() / h.z();
      Mat3 dh;
      dh.col(0) = R_rel[i].col(0);
      dh.col(1) = R_rel[i].col(1);
      dh.col(2) = t_rel[i];
      const Mat23 J = projection_derivative(h) * dh;
      JtJ += J.transpose() * J;
      Jte += J.transpose() * e;
    }
    const Vec3 step = JtJ.ldlt().solve(Jte);
    if (!step.allFinite()) {
      throw VioError(ErrorCode::kDivergedTriangulation, "singular normal equations");
    }
    params += step;
    if (step.norm() < options.step_tolerance) break;
  }

  if (!(params.z() > 0.0)) {
    throw VioError(ErrorCode::kNegativeDepth, "track " + std::to_string(track.track_id) + " inverse depth <= 0");
  }
  const Vec3 p_global = anchor.R.transpose() * (Vec3(params.x(), params.y(), 1.0) / params.z()) + anchor.center;

  double total = 0.0;
  for (const View& v : views) {
    const Vec3 p_cam = v.R * (p_global - v.center);
    if (!(p_cam.z() > options.z_min)) {
      throw VioError(ErrorCode::kNegativeDepth, "track " + std::to_string(track.track_id) + " behind a view");
    }
    total += (v.uv - p_cam.head<2>() / p_cam.z()).norm();
  }
  const double mean_residual = total / static_cast<double>(views.size());
  if (!(mean_residual <= options.reprojection_gate)) {
    throw VioError(ErrorCode::kDivergedTriangulation,
                   "track " + std::to_string(track.track_id) + " mean residual " + std::to_string(mean_residual));
  }
  return p_global;
}

FeatureJacobians point_residual_jacobian(const PointTrack& track, const Vec3& p_f, const FilterState& state,
                                         const StereoRig& rig, double z_min) {
  const long max_rows = 4 * static_cast<long>(track.observations.size());
  FeatureJacobians out;
  out.r.resize(max_rows);
  out.H_x = MatX::Zero(max_rows, state.dim());
  out.H_f.resize(max_rows, 3);

  long row = 0;
  long attempted = 0;
  auto add = [&](std::size_t clone_index, const Pose& left, const StereoRig* right, const Vec2& z) {
    attempted += 2;
    const auto proj = project_with_jacobian(left, right, p_f, z_min);
    if (!proj) {
      out.dropped_rows += 2;
      return;
    }
    const int o = state.clone_offset(clone_index);
    out.r.segment<2>(row) = z - proj->z_hat;
    out.H_x.block<2, 3>(row, o) = proj->d_theta;
    out.H_x.block<2, 3>(row, o + 3) = proj->d_position;
    out.H_f.block<2, 3>(row, 0) = proj->d_point;
    out.row_clone.push_back(clone_index);
    out.row_clone.push_back(clone_index);
    out.row_endpoint.push_back(0);
    out.row_endpoint.push_back(0);
    row += 2;
  };

  for (const StereoObservation& obs : track.observations) {
    const auto ci = state.find_clone(obs.frame_id);
    if (!ci) {
      throw VioError(ErrorCode::kDanglingTrackId, "track " + std::to_string(track.track_id) +
                                                      " references frame " + std::to_string(obs.frame_id) +
                                                      " outside the window");
    }
    const Pose& left = state.clones[*ci].pose;
    add(*ci, left, nullptr, obs.left_uv);
    if (obs.right_uv) add(*ci, left, &rig, *obs.right_uv);
  }
  if (2 * out.dropped_rows > attempted) {
    throw VioError(ErrorCode::kBehindCamera, "track " + std::to_string(track.track_id) + " dropped " +
                                                 std::to_string(out.dropped_rows) + " of " +
                                                 std::to_string(attempted) + " rows");
  }
  out.r.conservativeResize(row);
  out.H_x.conservativeResize(row, Eigen::NoChange);
  out.H_f.conservativeResize(row, Eigen::NoChange);
  return out;
}

void apply_observability_constraint(FeatureJacobians& jac, const FilterState& state,
                                    const std::vector<Vec3>& feature_points) {
  const Vec3& g = state.gravity;
  for (long i = 0; i < jac.r.size(); ++i) {
    const std::size_t c = jac.row_clone[static_cast<std::size_t>(i)];
    const int endpoint = jac.row_endpoint[static_cast<std::size_t>(i)];
    const Pose& fe = state.clones[c].first_estimate;
    Vec6 u;
    u.head<3>() = fe.rotation.rotate(g);
    u.tail<3>() = skew(fe.position - feature_points[static_cast<std::size_t>(endpoint)]) * g;

    const int o = state.clone_offset(c);
    const Eigen::Matrix<double, 1, 6> a = jac.H_x.block<1, 6>(i, o);
    const Eigen::Matrix<double, 1, 6> a_star = a - (a.dot(u) / u.squaredNorm()) * u.transpose();
    jac.H_x.block<1, 6>(i, o) = a_star;
    jac.H_f.row(i).setZero();
    jac.H_f.block<1, 3>(i, 3 * endpoint) = -a_star.tail<3>();
  }
}

ResidualBlock marginalize_feature(const VecX& r, const MatX& H_x, const MatX& H_f, double noise_sigma,
                                  double* nullspace_residual) {
  const long rows = r.size();
  if (H_x.rows() != rows || H_f.rows() != rows) {
    throw VioError(ErrorCode::kDimensionMismatch, "residual and Jacobian row counts differ");
  }
  if (rows <= 3) {
    throw VioError(ErrorCode::kInvalidArgument, "feature with " + std::to_string(rows) +
                                                    " rows adds no constraint after marginalization");
  }
  const Eigen::HouseholderQR<MatX> qr(H_f);
  double max_diag = 0.0;
  double min_diag = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    max_diag = std::max(max_diag, std::abs(qr.matrixQR()(k, k)));
    min_diag = std::min(min_diag, std::abs(qr.matrixQR()(k, k)));
  }
  if (!(min_diag > 1e-9 * max_diag) || !(max_diag > 0.0)) {
    throw VioError(ErrorCode::kRankDeficient, "feature Jacobian rank < 3");
  }

  MatX stacked(rows, 1 + H_x.cols() + 3);
  stacked.col(0) = r;
  stacked.middleCols(1, H_x.cols()) = H_x;
  stacked.rightCols(3) = H_f;
  stacked.applyOnTheLeft(qr.householderQ().adjoint());

  ResidualBlock block;
  block.r = stacked.col(0).tail(rows - 3);
  block.H = stacked.block(3, 1, rows - 3, H_x.cols());
  block.noise_sigma = noise_sigma;
  if (nullspace_residual != nullptr) {
    *nullspace_residual = stacked.bottomRightCorner(rows - 3, 3).cwiseAbs().maxCoeff();
  }
  return block;
}

}  // namespace plvio
