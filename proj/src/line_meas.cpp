#include "plvio/line_meas.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace plvio {

LineView LineView::from_segment(const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len = d.norm();
  if (!(len > 0.0)) throw VioError(ErrorCode::kDegenerateLine, "segment has zero length");
  LineView v;
  v.p1 = a;
  v.p2 = b;
  v.z = 0.5 * (a + b);
  v.n = Vec2(-d.y(), d.x()) / len;
  return v;
}

namespace {

struct CameraView {
  Mat3 R;
  Vec3 center;
  const LineView* view;
};

std::vector<CameraView> collect_views(const LineTrack& track, const FilterState& state, const StereoRig& rig) {
  std::vector<CameraView> views;
  for (const LineObservation& obs : track.observations) {
    const Pose& left = state.clone(obs.frame_id).pose;
    views.push_back(CameraView{left.rotation.matrix(), left.position, &obs.left});
    if (obs.right) {
      const Pose right = rig.right_pose(left);
      views.push_back(CameraView{right.rotation.matrix(), right.position, &*obs.right});
    }
  }
  return views;
}

// Point on the line p0 + t d closest to the ray c + s r.
Vec3 closest_on_line(const Vec3& p0, const Vec3& d, const Vec3& c, const Vec3& r) {
  const Vec3 w = p0 - c;
  const double a = d.dot(d);
  const double b = d.dot(r);
  const double cc = r.dot(r);
  const double dd = d.dot(w);
  const double e = r.dot(w);
  const double denom = a * cc - b * b;
  if (std::abs(denom) < 1e-14 * a * cc) {
    throw VioError(ErrorCode::kDegenerateLine, "endpoint ray parallel to the line");
  }
  const double t = (b * e - cc * dd) / denom;
  return p0 + t * d;
}

}  // namespace

LineEndpoints triangulate_line(const LineTrack& track, const FilterState& state, const StereoRig& rig,
                               const LineTriangulationOptions& options) {
  const std::vector<CameraView> views = collect_views(track, state, rig);
  if (views.size() < 2) {
    throw VioError(ErrorCode::kInsufficientViews, "line " + std::to_string(track.line_id) + " has " +
                                                      std::to_string(views.size()) + " view(s)");
  }

  Eigen::MatrixX4d planes(static_cast<long>(views.size()), 4);
  std::vector<Vec3> normals;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const LineView& v = *views[i].view;
    const Vec3 l(v.n.x(), v.n.y(), -v.n.dot(v.z));
    Vec3 normal = views[i].R.transpose() * l;
    const double scale = normal.norm();
    normal /= scale;
    planes.row(static_cast<long>(i)) << normal.transpose(), -normal.dot(views[i].center);
    normals.push_back(normal);
  }

  double max_angle = 0.0;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    for (std::size_t j = i + 1; j < normals.size(); ++j) {
      const double s = normals[i].cross(normals[j]).norm();
      max_angle = std::max(max_angle, std::asin(std::min(1.0, s)));
    }
  }
  if (max_angle * 180.0 / M_PI < options.min_plane_angle_deg) {
    throw VioError(ErrorCode::kDegenerateLine, "line " + std::to_string(track.line_id) +
                                                   " view planes are near-parallel");
  }

  // Homogeneous points on the line span the two-dimensional right nullspace.
  const Eigen::JacobiSVD<Eigen::MatrixX4d> svd(planes, Eigen::ComputeFullV);
  const Vec4 X1 = svd.matrixV().col(2);
  const Vec4 X2 = svd.matrixV().col(3);
  const double a = X1.w();
  const double b = X2.w();
  const double w = a * a + b * b;
  if (w < 1e-12) throw VioError(ErrorCode::kDegenerateLine, "line at infinity");
  const Vec3 p0 = (a * X1 + b * X2).head<3>() / w;
  Vec3 d = (b * X1 - a * X2).head<3>();
  d.normalize();

  const CameraView& first = views.front();
  const LineView& fv = *first.view;
  const Vec3 ray1 = first.R.transpose() * Vec3(fv.p1.x(), fv.p1.y(), 1.0);
  const Vec3 ray2 = first.R.transpose() * Vec3(fv.p2.x(), fv.p2.y(), 1.0);
  const Vec3 e1 = closest_on_line(p0, d, first.center, ray1);
  const Vec3 e2 = closest_on_line(p0, d, first.center, ray2);

  LineEndpoints L;
  if (fv.p1.x() <= fv.p2.x()) {
    L = LineEndpoints{e1, e2};
  } else {
    L = LineEndpoints{e2, e1};
  }
  if ((L.p_b - L.p_e).norm() < options.min_length) {
    throw VioError(ErrorCode::kDegenerateLine, "line " + std::to_string(track.line_id) + " shorter than " +
                                                   std::to_string(options.min_length) + " m");
  }
  for (const CameraView& v : views) {
    if (!((v.R * (L.p_b - v.center)).z() > options.z_min) || !((v.R * (L.p_e - v.center)).z() > options.z_min)) {
      throw VioError(ErrorCode::kNegativeDepth, "line " + std::to_string(track.line_id) + " behind a view");
    }
  }
  return L;
}

Vec2 line_residual(const LineView& view, const LineEndpoints& L, const Pose& camera, double z_min) {
  const Vec2 zb = pinhole_project(camera.to_frame(L.p_b), z_min);
  const Vec2 ze = pinhole_project(camera.to_frame(L.p_e), z_min);
  const double nz = view.n.dot(view.z);
  return Vec2(nz - view.n.dot(zb), nz - view.n.dot(ze));
}

std::optional<LineViewJacobian> line_jacobians(const LineView& view, const LineEndpoints& L, const Pose& left_clone,
                                               const StereoRig* right_of, double z_min) {
  const auto jb = project_with_jacobian(left_clone, right_of, L.p_b, z_min);
  const auto je = project_with_jacobian(left_clone, right_of, L.p_e, z_min);
  if (!jb || !je) return std::nullopt;

  const Eigen::RowVector2d nt = view.n.transpose();
  const double nz = view.n.dot(view.z);
  LineViewJacobian out;
  out.r = Vec2(nz - nt * jb->z_hat, nz - nt * je->z_hat);
  out.H_clone.row(0) << nt * jb->d_theta, nt * jb->d_position;
  out.H_clone.row(1) << nt * je->d_theta, nt * je->d_position;
  out.H_l.setZero();
  out.H_l.block<1, 3>(0, 0) = nt * jb->d_point;
  out.H_l.block<1, 3>(1, 3) = nt * je->d_point;
  return out;
}

FeatureJacobians line_residual_jacobian(const LineTrack& track, const LineEndpoints& L, const FilterState& state,
                                        const StereoRig& rig, double z_min) {
  const long max_rows = 4 * static_cast<long>(track.observations.size());
  FeatureJacobians out;
  out.r.resize(max_rows);
  out.H_x = MatX::Zero(max_rows, state.dim());
  out.H_f = MatX::Zero(max_rows, 6);

  long row = 0;
  long attempted = 0;
  auto add = [&](std::size_t clone_index, const Pose& left, const StereoRig* right, const LineView& view) {
    attempted += 2;
    const auto jac = line_jacobians(view, L, left, right, z_min);
    if (!jac) {
      out.dropped_rows += 2;
      return;
    }
    const int o = state.clone_offset(clone_index);
    out.r.segment<2>(row) = jac->r;
    out.H_x.block<2, 6>(row, o) = jac->H_clone;
    out.H_f.block<2, 6>(row, 0) = jac->H_l;
    out.row_clone.push_back(clone_index);
    out.row_clone.push_back(clone_index);
    out.row_endpoint.push_back(0);
    out.row_endpoint.push_back(1);
    row += 2;
  };

  for (const LineObservation& obs : track.observations) {
    const auto ci = state.find_clone(obs.frame_id);
    if (!ci) {
      throw VioError(ErrorCode::kDanglingTrackId, "line " + std::to_string(track.line_id) + " references frame " +
                                                      std::to_string(obs.frame_id) + " outside the window");
    }
    const Pose& left = state.clones[*ci].pose;
    add(*ci, left, nullptr, obs.left);
    if (obs.right) add(*ci, left, &rig, *obs.right);
  }
  if (2 * out.dropped_rows > attempted) {
    throw VioError(ErrorCode::kBehindCamera, "line " + std::to_string(track.line_id) + " dropped " +
                                                 std::to_string(out.dropped_rows) + " of " +
                                                 std::to_string(attempted) + " rows");
  }
  out.r.conservativeResize(row);
  out.H_x.conservativeResize(row, Eigen::NoChange);
  out.H_f.conservativeResize(row, Eigen::NoChange);
  return out;
}

ResidualBlock marginalize_line(const VecX& r, const MatX& H_x, const MatX& H_l, double noise_sigma,
                               double* nullspace_residual) {
  const long rows = r.size();
  if (H_x.rows() != rows || H_l.rows() != rows) {
    throw VioError(ErrorCode::kDimensionMismatch, "residual and Jacobian row counts differ");
  }
  const Eigen::JacobiSVD<MatX> svd(H_l, Eigen::ComputeFullU);
  const VecX& sv = svd.singularValues();
  // Directions with singular value below this bound are kept in the nullspace;
  // their leakage into the projected system stays below it.
  constexpr double kRankTolerance = 1e-11;
  long rank = 0;
  for (long i = 0; i < sv.size(); ++i) {
    if (sv(i) > kRankTolerance) ++rank;
  }
  if (rank < 2 || rows <= rank) {
    throw VioError(ErrorCode::kRankDeficient, "line Jacobian rank " + std::to_string(rank) + " with " +
                                                  std::to_string(rows) + " rows");
  }
  const MatX A = svd.matrixU().rightCols(rows - rank);

  ResidualBlock block;
  block.r = A.transpose() * r;
  block.H = A.transpose() * H_x;
  block.noise_sigma = noise_sigma;
  if (nullspace_residual != nullptr) {
    *nullspace_residual = (A.transpose() * H_l).cwiseAbs().maxCoeff();
  }
  return block;
}

}  // namespace plvio
