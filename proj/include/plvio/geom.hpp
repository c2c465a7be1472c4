#pragma once

// Rotation and pose algebra.
//
// Quaternions follow the Hamilton convention with components stored as
// (x, y, z, w). Composition matches rotation-matrix products:
//   R(a * b) == R(a) * R(b).
// A quaternion named q_AB rotates vectors from frame A into frame B, i.e.
// v_B = R(q_AB) v_A. The estimator's orientation is q_GB (global -> body).
//
// Note that omega_matrix() builds the 4x4 rate matrix with the layout
//   [ -[w]x  w ]
//   [ -w^T   0 ]
// which for Hamilton quaternions satisfies Omega(w) q == q * (w, 0). The
// kinematics q_dot = 0.5 Omega(w) q therefore hold for the body -> global
// quaternion q_BG = q_GB^-1 with w the body-frame angular rate.

#include "plvio/common.hpp"

#include <Eigen/Geometry>

namespace plvio {

class UnitQuaternion {
 public:
  UnitQuaternion() : q_(Eigen::Quaterniond::Identity()) {}
  UnitQuaternion(double x, double y, double z, double w);
  explicit UnitQuaternion(const Eigen::Quaterniond& q);

  static UnitQuaternion identity() { return UnitQuaternion(); }
  static UnitQuaternion from_rotation_matrix(const Mat3& rotation);
  // Exact exponential map of a rotation vector (radians).
  static UnitQuaternion exp(const Vec3& rotation_vector);
  // Coefficients in (x, y, z, w) order; normalized on construction.
  static UnitQuaternion from_coeffs(const Vec4& xyzw);

  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  double w() const { return q_.w(); }
  Vec4 coeffs() const { return q_.coeffs(); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  UnitQuaternion inverse() const { return UnitQuaternion(q_.conjugate()); }
  // Rotation vector with angle in [0, pi].
  Vec3 log() const;
  double angle() const { return log().norm(); }
  const Eigen::Quaterniond& eigen() const { return q_; }

 private:
  void canonicalize();
  Eigen::Quaterniond q_;
};

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);
inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_multiply(a, b);
}

// First-order error quaternion normalize([dtheta / 2, 1]).
UnitQuaternion small_angle_quat(const Vec3& dtheta);

// Angle of a^-1 * b in radians.
double angular_distance(const UnitQuaternion& a, const UnitQuaternion& b);

Mat3 skew(const Vec3& v);
Mat4 omega_matrix(const Vec3& w);

// Rotation vector of a rotation matrix.
Vec3 log_so3(const Mat3& rotation);

// A frame pose: `rotation` maps global vectors into the frame and `position`
// is the frame origin expressed in the global frame. As a transform it maps a
// global point p to rotation * (p - position).
struct Pose {
  UnitQuaternion rotation;
  Vec3 position = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  Vec3 to_frame(const Vec3& p_global) const { return rotation.rotate(p_global - position); }
  Vec3 to_global(const Vec3& p_frame) const { return rotation.inverse().rotate(p_frame) + position; }
  Pose inverse() const;
};

// (a o b)(p) = a(b(p)).
Pose compose(const Pose& a, const Pose& b);

bool approx_equal(const Pose& a, const Pose& b, double tol);

}  // namespace plvio
