#include "plvio/geom.hpp"

#include <cmath>

namespace plvio {

UnitQuaternion::UnitQuaternion(double x, double y, double z, double w) : q_(w, x, y, z) {
  canonicalize();
}

UnitQuaternion::UnitQuaternion(const Eigen::Quaterniond& q) : q_(q) { canonicalize(); }

UnitQuaternion UnitQuaternion::from_rotation_matrix(const Mat3& rotation) {
  return UnitQuaternion(Eigen::Quaterniond(rotation));
}

UnitQuaternion UnitQuaternion::exp(const Vec3& rotation_vector) {
  const double angle = rotation_vector.norm();
  if (angle < 1e-12) {
    // Second-order series keeps tiny rotations accurate.
    const Vec3 half = 0.5 * rotation_vector;
    return UnitQuaternion(half.x(), half.y(), half.z(), 1.0 - 0.125 * angle * angle);
  }
  const Vec3 axis = rotation_vector / angle;
  const double s = std::sin(0.5 * angle);
  return UnitQuaternion(axis.x() * s, axis.y() * s, axis.z() * s, std::cos(0.5 * angle));
}

UnitQuaternion UnitQuaternion::from_coeffs(const Vec4& xyzw) {
  return UnitQuaternion(xyzw.x(), xyzw.y(), xyzw.z(), xyzw.w());
}

void UnitQuaternion::canonicalize() {
  const double n = q_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw VioError(ErrorCode::kInvalidArgument, "quaternion with zero or non-finite norm");
  }
  q_.coeffs() /= n;
  if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
}

Vec3 UnitQuaternion::log() const {
  const Vec3 v = q_.vec();
  const double sin_half = v.norm();
  if (sin_half < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(sin_half, q_.w());
  return v * (angle / sin_half);
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  return UnitQuaternion(a.eigen() * b.eigen());
}

UnitQuaternion small_angle_quat(const Vec3& dtheta) {
  const Vec3 half = 0.5 * dtheta;
  return UnitQuaternion(half.x(), half.y(), half.z(), 1.0);
}

double angular_distance(const UnitQuaternion& a, const UnitQuaternion& b) {
  return (a.inverse() * b).angle();
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat4 omega_matrix(const Vec3& w) {
  Mat4 m;
  m.topLeftCorner<3, 3>() = -skew(w);
  m.topRightCorner<3, 1>() = w;
  m.bottomLeftCorner<1, 3>() = -w.transpose();
  m(3, 3) = 0.0;
  return m;
}

Vec3 log_so3(const Mat3& rotation) {
  return UnitQuaternion::from_rotation_matrix(rotation).log();
}

Pose Pose::inverse() const {
  const UnitQuaternion inv = rotation.inverse();
  return Pose{inv, -rotation.rotate(position)};
}

Pose compose(const Pose& a, const Pose& b) {
  // a(b(p)) = Ra (Rb (p - tb) - ta) = Ra Rb (p - tb - Rb^T ta)
  return Pose{a.rotation * b.rotation, b.position + b.rotation.inverse().rotate(a.position)};
}

bool approx_equal(const Pose& a, const Pose& b, double tol) {
  return angular_distance(a.rotation, b.rotation) <= tol &&
         (a.position - b.position).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace plvio
