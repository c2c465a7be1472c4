#pragma once

#include "plvio/line_meas.hpp"
#include "plvio/sim.hpp"

#include <random>

namespace plvio::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen_); }
  double normal(double s = 1.0) { return std::normal_distribution<double>(0.0, s)(gen_); }
  Vec3 vec(double s) { return Vec3(uniform(-s, s), uniform(-s, s), uniform(-s, s)); }
  UnitQuaternion rotation(double max_angle = M_PI) { return UnitQuaternion::exp(vec(max_angle / std::sqrt(3.0))); }
  MatX spd(int n, double scale = 1.0) {
    MatX A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = normal();
    return scale * (A * A.transpose() / n + 0.1 * MatX::Identity(n, n));
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline ImuState random_imu(Rng& r) {
  ImuState s;
  s.q_GB = r.rotation();
  s.p_GB = r.vec(3.0);
  s.v_GB = r.vec(1.0);
  s.bg = r.vec(0.01);
  s.ba = r.vec(0.1);
  s.extrinsics = CameraParams::standard().extrinsics;
  return s;
}

// Window of `n` nearby clones around a random body pose, with a random SPD
// covariance.
inline FilterState random_window(Rng& r, int n, double spread = 0.3) {
  const ImuState base = random_imu(r);
  FilterState state(base, r.spd(idx::kImuDim, 1e-3), Vec3(0, 0, -9.81), 0);
  for (int i = 0; i < n; ++i) {
    state.imu.q_GB = UnitQuaternion::exp(r.vec(0.1)) * base.q_GB;
    state.imu.p_GB = base.p_GB + r.vec(spread);
    augment_clone(state, (i + 1) * 50'000'000LL, i, 1000);
  }
  state.imu = base;
  return state;
}

inline Vec3 visible_point(Rng& r, const FilterState& state) {
  while (true) {
    const Vec3 p = state.clones.front().pose.to_global(Vec3(r.uniform(-1, 1), r.uniform(-0.7, 0.7), r.uniform(3, 8)));
    bool ok = true;
    for (const CameraClone& c : state.clones) ok = ok && c.pose.to_frame(p).z() > 1.0;
    if (ok) return p;
  }
}

inline Vec2 project(const Pose& camera, const Vec3& p) {
  const Vec3 c = camera.to_frame(p);
  return c.head<2>() / c.z();
}

inline PointTrack exact_point_track(const FilterState& state, const StereoRig& rig, const Vec3& p, bool stereo = true) {
  PointTrack t;
  t.track_id = 7;
  for (const CameraClone& c : state.clones) {
    StereoObservation o{c.frame_id, project(c.pose, p), std::nullopt};
    if (stereo) o.right_uv = project(rig.right_pose(c.pose), p);
    t.observations.push_back(o);
  }
  return t;
}

inline LineTrack exact_line_track(const FilterState& state, const StereoRig& rig, const Vec3& a, const Vec3& b,
                                  bool stereo = true) {
  LineTrack t;
  t.line_id = 3;
  for (const CameraClone& c : state.clones) {
    LineObservation o;
    o.frame_id = c.frame_id;
    o.left = LineView::from_segment(project(c.pose, a), project(c.pose, b));
    if (stereo) {
      const Pose right = rig.right_pose(c.pose);
      o.right = LineView::from_segment(project(right, a), project(right, b));
    }
    t.observations.push_back(o);
  }
  return t;
}

}  // namespace plvio::testing
