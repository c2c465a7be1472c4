#include "plvio/jacobian_check.hpp"

#include "plvio/line_meas.hpp"
#include "plvio/propagation.hpp"
#include "plvio/sim.hpp"

#include <chrono>
#include <functional>
#include <random>

namespace plvio {

namespace {

constexpr double kStep = 1e-6;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  Vec3 vec(double s) { return Vec3(uniform(-s, s), uniform(-s, s), uniform(-s, s)); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }

 private:
  std::mt19937_64 rng_;
};

double rel_error(const MatX& analytic, const MatX& fd) {
  const double denom = std::max(fd.norm(), 1e-12);
  return (analytic - fd).norm() / denom;
}

// Central differences of a vector function of the error state.
MatX fd_state(const FilterState& state, const std::function<VecX(const FilterState&)>& f) {
  const VecX f0 = f(state);
  MatX J(f0.size(), state.dim());
  for (int j = 0; j < state.dim(); ++j) {
    FilterState plus = state, minus = state;
    VecX dx = VecX::Zero(state.dim());
    dx[j] = kStep;
    inject_error(plus, dx);
    inject_error(minus, -dx);
    J.col(j) = (f(plus) - f(minus)) / (2.0 * kStep);
  }
  return J;
}

MatX fd_vector(const VecX& x, const std::function<VecX(const VecX&)>& f) {
  const VecX f0 = f(x);
  MatX J(f0.size(), x.size());
  for (int j = 0; j < x.size(); ++j) {
    VecX plus = x, minus = x;
    plus[j] += kStep;
    minus[j] -= kStep;
    J.col(j) = (f(plus) - f(minus)) / (2.0 * kStep);
  }
  return J;
}

ImuState random_imu(Sampler& s, bool random_extrinsics) {
  ImuState imu;
  imu.q_GB = UnitQuaternion::exp(s.vec(M_PI));
  imu.p_GB = s.vec(3.0);
  imu.v_GB = s.vec(2.0);
  imu.bg = s.vec(0.01);
  imu.ba = s.vec(0.1);
  imu.extrinsics = CameraParams::standard().extrinsics;
  if (random_extrinsics) {
    imu.extrinsics.q_BC = UnitQuaternion::exp(s.vec(0.2)) * imu.extrinsics.q_BC;
    imu.extrinsics.p_BC += s.vec(0.05);
  }
  return imu;
}

// A window of 3..5 nearby clones.
FilterState random_window(Sampler& s) {
  const ImuState base = random_imu(s, true);
  FilterState state(base, 1e-4 * MatX::Identity(idx::kImuDim, idx::kImuDim), Vec3(0, 0, -9.81), 0);
  const int n = s.integer(3, 5);
  for (int i = 0; i < n; ++i) {
    state.imu.q_GB = UnitQuaternion::exp(s.vec(0.1)) * base.q_GB;
    state.imu.p_GB = base.p_GB + s.vec(0.3);
    augment_clone(state, (i + 1) * 50'000'000LL, i, 100);
  }
  state.imu = base;
  return state;
}

// Global point at moderate depth in front of every clone.
Vec3 random_visible_point(Sampler& s, const FilterState& state) {
  while (true) {
    const Vec3 p_c(s.uniform(-1.0, 1.0), s.uniform(-0.7, 0.7), s.uniform(3.0, 8.0));
    const Vec3 p = state.clones.front().pose.to_global(p_c);
    bool ok = true;
    for (const CameraClone& c : state.clones) ok = ok && c.pose.to_frame(p).z() > 1.0;
    if (ok) return p;
  }
}

Vec2 noisy_projection(Sampler& s, const Pose& camera, const Vec3& p) {
  return pinhole_project(camera.to_frame(p)) + Vec2(s.uniform(-2e-3, 2e-3), s.uniform(-2e-3, 2e-3));
}

struct PointScene {
  FilterState state;
  PointTrack track;
  Vec3 p_f;
  StereoRig rig;
};

PointScene random_point_scene(Sampler& s) {
  PointScene sc;
  sc.state = random_window(s);
  const Vec3 p = random_visible_point(s, sc.state);
  sc.track.track_id = 1;
  for (const CameraClone& c : sc.state.clones) {
    sc.track.observations.push_back(
        StereoObservation{c.frame_id, noisy_projection(s, c.pose, p), noisy_projection(s, sc.rig.right_pose(c.pose), p)});
  }
  sc.p_f = p + s.vec(0.05);
  return sc;
}

struct LineScene {
  FilterState state;
  LineTrack track;
  LineEndpoints L;
  StereoRig rig;
};

LineScene random_line_scene(Sampler& s) {
  LineScene sc;
  sc.state = random_window(s);
  Vec3 a, b;
  do {
    a = random_visible_point(s, sc.state);
    b = random_visible_point(s, sc.state);
  } while ((a - b).norm() < 0.5);
  sc.track.line_id = 1;
  for (const CameraClone& c : sc.state.clones) {
    const Pose right = sc.rig.right_pose(c.pose);
    LineObservation o;
    o.frame_id = c.frame_id;
    o.left = LineView::from_segment(noisy_projection(s, c.pose, a), noisy_projection(s, c.pose, b));
    o.right = LineView::from_segment(noisy_projection(s, right, a), noisy_projection(s, right, b));
    sc.track.observations.push_back(o);
  }
  sc.L = LineEndpoints{a + s.vec(0.05), b + s.vec(0.05)};
  return sc;
}

template <typename Body>
JacobianCheckResult run_suite(const std::string& name, int configs, std::uint64_t seed, Body&& body) {
  const auto start = std::chrono::steady_clock::now();
  Sampler s(seed);
  JacobianCheckResult r;
  r.name = name;
  r.configs = configs;
  for (int i = 0; i < configs; ++i) r.max_rel_error = std::max(r.max_rel_error, body(s));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

JacobianCheckResult check_point_state_jacobian(int configs, std::uint64_t seed) {
  return run_suite("point H_x", configs, seed, [](Sampler& s) {
    const PointScene sc = random_point_scene(s);
    const FeatureJacobians jac = point_residual_jacobian(sc.track, sc.p_f, sc.state, sc.rig);
    const MatX fd = -fd_state(sc.state, [&](const FilterState& st) {
      return point_residual_jacobian(sc.track, sc.p_f, st, sc.rig).r;
    });
    return rel_error(jac.H_x, fd);
  });
}

JacobianCheckResult check_point_feature_jacobian(int configs, std::uint64_t seed) {
  return run_suite("point H_f", configs, seed, [](Sampler& s) {
    const PointScene sc = random_point_scene(s);
    const FeatureJacobians jac = point_residual_jacobian(sc.track, sc.p_f, sc.state, sc.rig);
    const MatX fd = -fd_vector(sc.p_f, [&](const VecX& p) {
      return point_residual_jacobian(sc.track, Vec3(p), sc.state, sc.rig).r;
    });
    return rel_error(jac.H_f, fd);
  });
}

JacobianCheckResult check_line_state_jacobian(int configs, std::uint64_t seed) {
  return run_suite("line H_x", configs, seed, [](Sampler& s) {
    const LineScene sc = random_line_scene(s);
    const FeatureJacobians jac = line_residual_jacobian(sc.track, sc.L, sc.state, sc.rig);
    const MatX fd = -fd_state(sc.state, [&](const FilterState& st) {
      return line_residual_jacobian(sc.track, sc.L, st, sc.rig).r;
    });
    return rel_error(jac.H_x, fd);
  });
}

JacobianCheckResult check_line_feature_jacobian(int configs, std::uint64_t seed) {
  return run_suite("line H_l", configs, seed, [](Sampler& s) {
    const LineScene sc = random_line_scene(s);
    const FeatureJacobians jac = line_residual_jacobian(sc.track, sc.L, sc.state, sc.rig);
    Vec6 x;
    x << sc.L.p_b, sc.L.p_e;
    const MatX fd = -fd_vector(x, [&](const VecX& v) {
      const LineEndpoints L{v.head<3>(), v.tail<3>()};
      return line_residual_jacobian(sc.track, L, sc.state, sc.rig).r;
    });
    return rel_error(jac.H_f, fd);
  });
}

JacobianCheckResult check_clone_jacobian(int configs, std::uint64_t seed) {
  return run_suite("clone augmentation", configs, seed, [](Sampler& s) {
    const ImuState imu = random_imu(s, true);
    const FilterState state(imu, MatX::Identity(idx::kImuDimWithExtrinsics, idx::kImuDimWithExtrinsics),
                            Vec3(0, 0, -9.81), 0, true);
    const Pose nominal = state.imu.camera_pose();
    const MatX fd = fd_state(state, [&](const FilterState& st) {
      const Pose p = st.imu.camera_pose();
      const UnitQuaternion d = p.rotation * nominal.rotation.inverse();
      VecX e(6);
      e << 2.0 * Vec3(d.x(), d.y(), d.z()) / d.w(), p.position - nominal.position;
      return e;
    });
    return rel_error(clone_jacobian(state), fd);
  });
}

JacobianCheckResult check_transition_jacobian(int configs, std::uint64_t seed) {
  return run_suite("transition", configs, seed, [](Sampler& s) {
    const bool ext = s.integer(0, 1) == 1;
    const int n = ext ? idx::kImuDimWithExtrinsics : idx::kImuDim;
    const ImuState imu = random_imu(s, ext);
    const Vec3 g(0, 0, -9.81);
    ImuSample sample;
    sample.gyro = s.vec(1.0);
    sample.accel = s.vec(5.0) + Vec3(0, 0, 9.81);
    const double dt = s.uniform(0.002, 0.01);
    const FilterState state(imu, MatX::Identity(n, n), g, 0, ext);
    const ImuInput held{sample.gyro, sample.accel};
    auto step = [&](const FilterState& st) {
      FilterState out = st;
      out.imu = integrate_imu(st.imu, g, ext, [&](double) { return held; }, dt).state;
      return out;
    };
    const FilterState base = step(state);
    const MatX fd = fd_state(state, [&](const FilterState& st) { return state_difference(step(st), base); });
    return rel_error(state_transition(imu, sample, dt, g, ext), fd);
  });
}

std::vector<JacobianCheckResult> run_jacobian_suite(int configs, std::uint64_t seed) {
  return {check_point_state_jacobian(configs, seed),     check_point_feature_jacobian(configs, seed + 1),
          check_line_state_jacobian(configs, seed + 2),  check_line_feature_jacobian(configs, seed + 3),
          check_clone_jacobian(configs, seed + 4),       check_transition_jacobian(configs, seed + 5)};
}

}  // namespace plvio
