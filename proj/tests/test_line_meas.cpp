#include "plvio/line_meas.hpp"
#include "test_util.hpp"

#include <Eigen/SVD>
#include <gtest/gtest.h>

using namespace plvio;
using plvio::testing::Rng;

namespace {

double distance_to_line(const Vec3& x, const Vec3& a, const Vec3& b) {
  const Vec3 d = (b - a).normalized();
  return ((x - a) - d * d.dot(x - a)).norm();
}

void random_segment(Rng& r, const FilterState& s, Vec3& a, Vec3& b) {
  do {
    a = plvio::testing::visible_point(r, s);
    b = plvio::testing::visible_point(r, s);
  } while ((a - b).norm() < 0.5);
}

}  // namespace

TEST(LineMeas, FromSegmentNormal) {
  const LineView v = LineView::from_segment(Vec2(0, 0), Vec2(2, 0));
  EXPECT_LT((v.z - Vec2(1, 0)).norm(), 1e-15);
  EXPECT_NEAR(std::abs(v.n.y()), 1.0, 1e-15);
}

TEST(LineMeas, TriangulationRecoversNoiselessLine) {
  Rng r(1);
  const StereoRig rig;
  for (int i = 0; i < 50; ++i) {
    const FilterState s = plvio::testing::random_window(r, 4);
    Vec3 a, b;
    random_segment(r, s, a, b);
    const LineEndpoints L = triangulate_line(plvio::testing::exact_line_track(s, rig, a, b), s, rig);
    EXPECT_LT(distance_to_line(L.p_b, a, b), 1e-7);
    EXPECT_LT(distance_to_line(L.p_e, a, b), 1e-7);
  }
}

TEST(LineMeas, CoplanarViewsAreDegenerate) {
  // Every camera center lies on the line's own axis extension: all
  // interpretation planes coincide.
  Rng r(2);
  FilterState s(plvio::testing::random_imu(r), MatX::Identity(15, 15), Vec3(0, 0, -9.81), 0);
  s.imu.q_GB = UnitQuaternion();
  s.imu.p_GB.setZero();
  for (int i = 0; i < 3; ++i) {
    s.imu.p_GB = Vec3(0.2 * i, 0, 0);  // body x = camera z, along the line below
    augment_clone(s, i + 1, i, 10);
  }
  const Vec3 a(4, 0, -1), b(6, 0, -1);
  try {
    triangulate_line(plvio::testing::exact_line_track(s, StereoRig{}, a, b, false), s, StereoRig{});
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateLine);
  }
}

TEST(LineMeas, SingleMonocularViewIsInsufficient) {
  Rng r(3);
  const StereoRig rig;
  const FilterState s = plvio::testing::random_window(r, 1);
  Vec3 a, b;
  random_segment(r, s, a, b);
  try {
    triangulate_line(plvio::testing::exact_line_track(s, rig, a, b, false), s, rig);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientViews);
  }
}

TEST(LineMeas, ResidualIsSignedDistance) {
  // Independent oracle: distance of the projected endpoint to the observed
  // image line.
  Rng r(4);
  const FilterState s = plvio::testing::random_window(r, 1);
  Vec3 a, b;
  random_segment(r, s, a, b);
  const Pose cam = s.clones[0].pose;
  const LineView v = LineView::from_segment(Vec2(0.1, -0.2), Vec2(-0.3, 0.25));
  const Vec2 res = line_residual(v, LineEndpoints{a, b}, cam);
  const Vec2 pa = plvio::testing::project(cam, a), pb = plvio::testing::project(cam, b);
  const Vec2 d = (v.p2 - v.p1).normalized();
  auto dist = [&](const Vec2& x) { return d.x() * (x.y() - v.p1.y()) - d.y() * (x.x() - v.p1.x()); };
  EXPECT_NEAR(std::abs(res[0]), std::abs(dist(pa)), 1e-12);
  EXPECT_NEAR(std::abs(res[1]), std::abs(dist(pb)), 1e-12);
}

TEST(LineMeas, ResidualVanishesAtTruthAndMarginalizes) {
  Rng r(5);
  const StereoRig rig;
  for (int i = 0; i < 50; ++i) {
    const FilterState s = plvio::testing::random_window(r, 5);
    Vec3 a, b;
    random_segment(r, s, a, b);
    const FeatureJacobians j =
        line_residual_jacobian(plvio::testing::exact_line_track(s, rig, a, b), LineEndpoints{a, b}, s, rig);
    EXPECT_LT(j.r.norm(), 1e-12);
    // Each endpoint can slide along the line: rank(H_l) = 4.
    Eigen::JacobiSVD<MatX> svd(j.H_f);
    const VecX sv = svd.singularValues();
    EXPECT_LT(sv[4], 1e-9 * sv[0]);
    EXPECT_GT(sv[3], 1e-6 * sv[0]);
    double leak = 1.0;
    const ResidualBlock blk = marginalize_line(j.r, j.H_x, j.H_f, 1e-3, &leak);
    EXPECT_LT(leak, 1e-10);
    EXPECT_EQ(blk.rows(), j.r.size() - 4);
  }
}

TEST(LineMeas, MarginalizationRejectsTooFewRows) {
  try {
    marginalize_line(VecX::Zero(4), MatX::Zero(4, 21), MatX::Random(4, 6), 1.0);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankDeficient);
  }
}

TEST(LineMeas, SlidingAlongObservedLineKeepsResidual) {
  Rng r(20);
  for (int t = 0; t < 100; ++t) {
    const FilterState s = plvio::testing::random_window(r, 1);
    Vec3 a, b;
    random_segment(r, s, a, b);
    const Pose& cam = s.clones.front().pose;
    LineView v = LineView::from_segment(plvio::testing::project(cam, a) + r.vec(0.01).head<2>(),
                                        plvio::testing::project(cam, b));
    const Vec2 r0 = line_residual(v, LineEndpoints{a, b}, cam);
    v.z += r.uniform(-2, 2) * Vec2(-v.n.y(), v.n.x());
    EXPECT_LT((line_residual(v, LineEndpoints{a, b}, cam) - r0).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(LineMeas, RigidTransformKeepsResidual) {
  Rng r(21);
  for (int t = 0; t < 100; ++t) {
    const FilterState s = plvio::testing::random_window(r, 1);
    Vec3 a, b;
    random_segment(r, s, a, b);
    const Pose& cam = s.clones.front().pose;
    const LineView v = LineView::from_segment(plvio::testing::project(cam, a) + r.vec(0.02).head<2>(),
                                              plvio::testing::project(cam, b) + r.vec(0.02).head<2>());
    const UnitQuaternion R = r.rotation();
    const Vec3 shift = r.vec(5.0);
    auto move = [&](const Vec3& p) { return Vec3(R.inverse().rotate(p) + shift); };
    const Pose moved(cam.rotation * R, move(cam.position));
    const Vec2 before = line_residual(v, LineEndpoints{a, b}, cam);
    const Vec2 after = line_residual(v, LineEndpoints{move(a), move(b)}, moved);
    EXPECT_LT((after - before).cwiseAbs().maxCoeff(), 1e-10);
  }
}
