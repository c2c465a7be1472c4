#include "plvio/point_meas.hpp"
#include "plvio/propagation.hpp"
#include "plvio/sim.hpp"
#include "test_util.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <gtest/gtest.h>

using namespace plvio;
using plvio::testing::Rng;

TEST(Propagation, StaticBodyStaysPut) {
  Rng r(1);
  ImuState imu = plvio::testing::random_imu(r);
  imu.v_GB.setZero();
  imu.bg.setZero();
  imu.ba.setZero();
  FilterState s(imu, 1e-4 * MatX::Identity(15, 15), Vec3(0, 0, -9.81), 0);
  ImuSample a;
  a.accel = imu.q_GB.rotate(Vec3(0, 0, 9.81));
  ImuSample b = a;
  for (int k = 1; k <= 200; ++k) {
    b.timestamp_ns = k * 5'000'000LL;
    propagate(s, a, b, NoiseParams{});
    a = b;
  }
  EXPECT_LT((s.imu.p_GB - imu.p_GB).norm(), 1e-10);
  EXPECT_LT(s.imu.v_GB.norm(), 1e-10);
  EXPECT_LT(angular_distance(s.imu.q_GB, imu.q_GB), 1e-12);
}

TEST(Propagation, ZeroNoiseSyntheticImuRecoversTrajectory) {
  const SimTrajectory traj = SimTrajectory::sinusoid(60.0);
  ImuSimParams p;
  p.zero_noise = true;
  const ImuStream imu = synthesize_imu(traj, p, 1);
  FilterState s(imu.truth.front().state, 1e-6 * MatX::Identity(15, 15), p.gravity, imu.samples.front().timestamp_ns);
  s.imu.extrinsics = CameraParams::standard().extrinsics;
  const std::span<const ImuSample> all(imu.samples);
  for (std::size_t k = 1; k < all.size(); ++k) {
    const std::size_t first = k >= 3 ? k - 3 : 0;
    propagate(s, all.subspan(first, k - first + 1), all[k].timestamp_ns, p.noise);
  }
  EXPECT_LT((s.imu.p_GB - imu.truth.back().state.p_GB).norm(), 1e-4);
  EXPECT_LT(angular_distance(s.imu.q_GB, imu.truth.back().state.q_GB), 1e-5);
}

TEST(Propagation, InterpolationIsExactForCubics) {
  auto f = [](double t) { return Vec3(1 + 2 * t - t * t + 0.5 * t * t * t, -t * t * t, 3.0); };
  std::vector<ImuSample> nodes;
  for (double t : {0.0, 0.004, 0.011, 0.015}) nodes.push_back(ImuSample{from_seconds(t), f(t), 2.0 * f(t)});
  for (double t : {0.012, 0.0135, 0.015}) {
    const ImuInput in = interpolate_readings(nodes, from_seconds(t));
    EXPECT_LT((in.gyro - f(t)).norm(), 1e-12);
    EXPECT_LT((in.accel - 2.0 * f(t)).norm(), 1e-12);
  }
}

TEST(Propagation, CovarianceStaysSymmetricPsd) {
  Rng r(2);
  FilterState s = plvio::testing::random_window(r, 3);
  ImuSample a, b;
  a.gyro = r.vec(0.5);
  a.accel = r.vec(2.0) + Vec3(0, 0, 9.81);
  for (int k = 1; k <= 10000; ++k) {
    b.timestamp_ns = k * 5'000'000LL;
    b.gyro = r.vec(0.5);
    b.accel = r.vec(2.0) + Vec3(0, 0, 9.81);
    propagate(s, a, b, NoiseParams{}, true);
    a = b;
  }
  EXPECT_LT((s.cov - s.cov.transpose()).norm(), 1e-15 * s.cov.norm() + 1e-18);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatX>(s.cov).eigenvalues().minCoeff(), -1e-8);
}

TEST(Propagation, Rk4IsFourthOrder) {
  const SimTrajectory traj = SimTrajectory::sinusoid(10.0);
  const Vec3 g = ImuSimParams{}.gravity;
  auto reading = [&](double t) {
    const TrajectoryPoint tp = traj.evaluate(t);
    return ImuInput{tp.omega_B, tp.q_GB.rotate(tp.a_G - g)};
  };
  auto position_error = [&](int steps) {
    const double t0 = 1.0, horizon = 2.0, h = horizon / steps;
    const TrajectoryPoint start = traj.evaluate(t0);
    ImuState s;
    s.q_GB = start.q_GB;
    s.v_GB = start.v_GB;
    s.p_GB = start.p_GB;
    for (int k = 0; k < steps; ++k) {
      const double tk = t0 + k * h;
      s = integrate_imu(s, g, false, [&](double tau) { return reading(tk + tau); }, h).state;
    }
    return (s.p_GB - traj.evaluate(t0 + horizon).p_GB).norm();
  };
  const double ratio = position_error(50) / position_error(100);
  EXPECT_GE(ratio, 8.0);
  EXPECT_LE(ratio, 32.0);
}

namespace {

// Nullity of the observability matrix of a window built from a synthetic
// run. Every step is linearized at a perturbed estimate, as after EKF
// updates, and the clones' current poses differ from their first estimates.
long unobservable_dimension(bool oc) {
  Rng r(6);
  const SimTrajectory traj = SimTrajectory::sinusoid(10.0);
  const Vec3 g(0, 0, -9.81);
  const double dt = 0.05;
  const int n_clones = 12;
  ImuState truth;
  const TrajectoryPoint t0 = traj.evaluate(0.0);
  truth.q_GB = t0.q_GB;
  truth.v_GB = t0.v_GB;
  truth.p_GB = t0.p_GB;
  truth.extrinsics = CameraParams::standard().extrinsics;
  FilterState s(truth, MatX::Identity(15, 15), g, 0);

  std::vector<MatX> to_clone;  // clone k error w.r.t. the initial IMU error
  MatX phi_0k = MatX::Identity(15, 15);
  for (int k = 0; k < n_clones; ++k) {
    to_clone.push_back(clone_jacobian(s).leftCols(15) * phi_0k);
    augment_clone(s, (k + 1) * 50'000'000LL, k, 100);
    ImuState updated = s.imu;
    updated.q_GB = UnitQuaternion::exp(r.vec(0.01)) * updated.q_GB;
    updated.v_GB += r.vec(0.01);
    updated.p_GB += r.vec(0.01);
    const TrajectoryPoint tp = traj.evaluate(k * dt);
    const ImuInput held{tp.omega_B, tp.q_GB.rotate(tp.a_G - g)};
    ImuStep step = integrate_imu(updated, g, false, [&](double) { return held; }, dt);
    if (oc) oc_fix_transition(step.phi, s.anchor, step.state, g, dt);
    phi_0k = step.phi * phi_0k;
    s.imu = step.state;
    s.anchor = ImuAnchor{step.state.q_GB, step.state.v_GB, step.state.p_GB};
  }
  for (CameraClone& c : s.clones) c.pose = Pose(UnitQuaternion::exp(r.vec(0.01)) * c.pose.rotation, c.pose.position + r.vec(0.01));

  const StereoRig rig;
  const int n_points = 3;
  MatX O = MatX::Zero(0, 15 + 3 * n_points);
  for (int j = 0; j < n_points; ++j) {
    const Vec3 p = plvio::testing::visible_point(r, s);
    FeatureJacobians jac = point_residual_jacobian(plvio::testing::exact_point_track(s, rig, p), p, s, rig);
    if (oc) apply_observability_constraint(jac, s, {p});
    for (long i = 0; i < jac.r.size(); ++i) {
      const std::size_t c = jac.row_clone[static_cast<std::size_t>(i)];
      O.conservativeResize(O.rows() + 1, Eigen::NoChange);
      O.row(O.rows() - 1).setZero();
      O.block(O.rows() - 1, 0, 1, 15) = jac.H_x.block(i, s.clone_offset(c), 1, 6) * to_clone[c];
      O.block(O.rows() - 1, 15 + 3 * j, 1, 3) = jac.H_f.row(i);
    }
  }
  const VecX sv = Eigen::JacobiSVD<MatX>(O).singularValues();
  long rank = 0;
  for (long i = 0; i < sv.size(); ++i) rank += sv(i) > 1e-8 * sv(0);
  return O.cols() - rank;
}

}  // namespace

TEST(Propagation, ObservabilityMatrixKeepsFourUnobservableDirections) {
  EXPECT_EQ(unobservable_dimension(true), 4);
  // Without the fix global yaw gains spurious information.
  EXPECT_EQ(unobservable_dimension(false), 3);
}

TEST(Propagation, TransitionFixMapsUnobservableDirections) {
  Rng r(3);
  const Vec3 g(0, 0, -9.81);
  for (int i = 0; i < 20; ++i) {
    const ImuState prev = plvio::testing::random_imu(r);
    ImuSample sample;
    sample.gyro = r.vec(1.0);
    sample.accel = r.vec(3.0);
    const double dt = 0.005;
    const ImuInput held{sample.gyro, sample.accel};
    const ImuState next = integrate_imu(prev, g, false, [&](double) { return held; }, dt).state;
    // A slightly different anchor, as after an EKF update.
    ImuAnchor anchor{UnitQuaternion::exp(r.vec(0.01)) * prev.q_GB, prev.v_GB + r.vec(0.01), prev.p_GB + r.vec(0.01)};
    MatX phi = state_transition(prev, sample, dt, g, false);
    oc_fix_transition(phi, anchor, next, g, dt);
    const MatX N0 = imu_unobservable_directions(anchor, g, 15);
    const MatX N1 = imu_unobservable_directions(ImuAnchor{next.q_GB, next.v_GB, next.p_GB}, g, 15);
    EXPECT_LT((phi * N0 - N1).norm(), 1e-9);
  }
}

TEST(Propagation, GenericOcFixIsExact) {
  Rng r(4);
  const MatX phi = MatX::Random(15, 15);
  const MatX H = MatX::Random(4, 15);
  const MatX N0 = MatX::Random(15, 4);
  const MatX N1 = MatX::Random(15, 4);
  const auto [phi_s, H_s] = oc_fix(phi, H, N0, N1);
  EXPECT_LT((phi_s * N0 - N1).norm(), 1e-9);
  EXPECT_LT((H_s * N1).norm(), 1e-9);
}

namespace {

// Row-wise minimum-norm change of `m` with m* N = T, from the KKT system
// [I N; N^T 0] [x; l] = [m_i; t_i].
MatX kkt_projection(const MatX& m, const MatX& N, const MatX& T) {
  const long n = m.cols(), k = N.cols();
  MatX K = MatX::Zero(n + k, n + k);
  K.topLeftCorner(n, n).setIdentity();
  K.topRightCorner(n, k) = N;
  K.bottomLeftCorner(k, n) = N.transpose();
  const Eigen::FullPivLU<MatX> lu(K);
  MatX out(m.rows(), n);
  for (long i = 0; i < m.rows(); ++i) {
    VecX rhs(n + k);
    rhs << m.row(i).transpose(), T.row(i).transpose();
    out.row(i) = lu.solve(rhs).head(n).transpose();
  }
  return out;
}

}  // namespace

TEST(Propagation, OcFixMatchesConstrainedLeastSquares) {
  for (int t = 0; t < 10; ++t) {
    const MatX phi = MatX::Random(15, 15), H = MatX::Random(6, 15);
    const MatX N0 = MatX::Random(15, 4), N1 = MatX::Random(15, 4);
    const auto [phi_s, H_s] = oc_fix(phi, H, N0, N1);
    EXPECT_LT((phi_s - kkt_projection(phi, N0, N1)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((H_s - kkt_projection(H, N1, MatX::Zero(6, 4))).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Propagation, OcFixKeepsConstrainedJacobian) {
  const MatX N0 = MatX::Random(15, 4), N1 = MatX::Random(15, 4);
  const MatX phi = MatX::Random(15, 15);
  // Rows of H in the left nullspace of N1.
  const MatX basis = Eigen::FullPivLU<MatX>(N1.transpose()).kernel();
  const MatX H = MatX::Random(5, basis.cols()) * basis.transpose();
  ASSERT_LT((H * N1).norm(), 1e-12);
  EXPECT_LT((oc_fix(phi, H, N0, N1).second - H).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagation, NonMonotonicSamplesRejected) {
  Rng r(5);
  FilterState s(plvio::testing::random_imu(r), MatX::Identity(15, 15), Vec3(0, 0, -9.81), 0);
  ImuSample a, b;
  a.timestamp_ns = 10;
  b.timestamp_ns = 10;
  try {
    propagate(s, a, b, NoiseParams{});
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonMonotonicTime);
  }
}
