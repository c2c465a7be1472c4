#include "plvio/point_meas.hpp"
#include "plvio/propagation.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace plvio;
using plvio::testing::Rng;

TEST(PointMeas, TriangulationRecoversNoiselessPoint) {
  Rng r(1);
  const StereoRig rig;
  for (int i = 0; i < 50; ++i) {
    const FilterState s = plvio::testing::random_window(r, 4);
    const Vec3 p = plvio::testing::visible_point(r, s);
    EXPECT_LT((triangulate(plvio::testing::exact_point_track(s, rig, p), s, rig) - p).norm(), 1e-8);
  }
}

TEST(PointMeas, SingleMonocularViewHasNoBaseline) {
  Rng r(2);
  const StereoRig rig;
  const FilterState s = plvio::testing::random_window(r, 1);
  const Vec3 p = plvio::testing::visible_point(r, s);
  try {
    triangulate(plvio::testing::exact_point_track(s, rig, p, false), s, rig);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientBaseline);
  }
}

TEST(PointMeas, ResidualVanishesAtTruth) {
  Rng r(3);
  const StereoRig rig;
  const FilterState s = plvio::testing::random_window(r, 4);
  const Vec3 p = plvio::testing::visible_point(r, s);
  const FeatureJacobians j = point_residual_jacobian(plvio::testing::exact_point_track(s, rig, p), p, s, rig);
  EXPECT_EQ(j.r.size(), 16);
  EXPECT_LT(j.r.norm(), 1e-12);
}

TEST(PointMeas, UnknownFrameIsDangling) {
  Rng r(4);
  const StereoRig rig;
  const FilterState s = plvio::testing::random_window(r, 3);
  const Vec3 p = plvio::testing::visible_point(r, s);
  PointTrack t = plvio::testing::exact_point_track(s, rig, p);
  t.observations.back().frame_id = 99;
  try {
    point_residual_jacobian(t, p, s, rig);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDanglingTrackId);
  }
}

TEST(PointMeas, MarginalizationAnnihilatesFeatureJacobian) {
  Rng r(5);
  const StereoRig rig;
  for (int i = 0; i < 50; ++i) {
    const FilterState s = plvio::testing::random_window(r, 5);
    const Vec3 p = plvio::testing::visible_point(r, s);
    PointTrack t = plvio::testing::exact_point_track(s, rig, p);
    for (auto& o : t.observations) o.left_uv += Vec2(r.normal(1e-3), r.normal(1e-3));
    const FeatureJacobians j = point_residual_jacobian(t, p, s, rig);
    double leak = 1.0;
    const ResidualBlock b = marginalize_feature(j.r, j.H_x, j.H_f, 1e-3, &leak);
    EXPECT_LT(leak, 1e-10);
    EXPECT_EQ(b.rows(), j.r.size() - 3);
    // Independent check: Q^T of the block equals a left-nullspace projection,
    // so the projected residual norm equals the norm of r minus its H_f part.
    const MatX Hf = j.H_f;
    const VecX proj = j.r - Hf * (Hf.transpose() * Hf).ldlt().solve(Hf.transpose() * j.r);
    EXPECT_NEAR(b.r.norm(), proj.norm(), 1e-12);
  }
}

TEST(PointMeas, ObservabilityConstraintZeroesYawAndTranslation) {
  Rng r(6);
  const StereoRig rig;
  FilterState s = plvio::testing::random_window(r, 4);
  // Move the current estimates away from the first estimates.
  for (auto& c : s.clones) {
    c.pose.rotation = UnitQuaternion::exp(r.vec(0.01)) * c.pose.rotation;
    c.pose.position += r.vec(0.02);
  }
  const Vec3 p = plvio::testing::visible_point(r, s);
  FeatureJacobians j = point_residual_jacobian(plvio::testing::exact_point_track(s, rig, p), p, s, rig);
  apply_observability_constraint(j, s, {p});
  // Unobservable directions of the window and the feature (yaw about
  // gravity, global translation).
  const MatX N = unobservable_directions(s);
  MatX Nf(3, 4);
  Nf.col(0) = skew(p) * s.gravity;
  Nf.rightCols(3) = Mat3::Identity();
  const MatX HN = j.H_x * N + j.H_f * Nf;
  EXPECT_LT(HN.norm(), 1e-9 * (j.H_x.norm() + 1.0));
}

TEST(PointMeas, BehindCameraThrows) {
  try {
    pinhole_project(Vec3(0, 0, -1));
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
}

TEST(PointMeas, TooFewRowsToMarginalize) {
  try {
    marginalize_feature(VecX::Zero(3), MatX::Zero(3, 21), MatX::Identity(3, 3), 1.0);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}
