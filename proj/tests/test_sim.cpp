#include "plvio/sim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace plvio;

namespace {

bool same_samples(const ImuStream& a, const ImuStream& b) {
  if (a.samples.size() != b.samples.size()) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    if (a.samples[i].timestamp_ns != b.samples[i].timestamp_ns || a.samples[i].gyro != b.samples[i].gyro ||
        a.samples[i].accel != b.samples[i].accel)
      return false;
  }
  return true;
}

double sample_std(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace

TEST(Sim, DescriptorHexRoundTrip) {
  const Descriptor d{0x0123456789abcdefULL, 0ULL, ~0ULL, 42ULL};
  const std::string hex = descriptor_to_hex(d);
  EXPECT_EQ(hex.size(), 64u);
  EXPECT_EQ(descriptor_from_hex(hex), d);
  EXPECT_EQ(hamming_distance(d, d), 0);
  Descriptor e = d;
  e[1] = 0b1011;
  EXPECT_EQ(hamming_distance(d, e), 3);
}

TEST(Sim, TrajectoryDerivativesMatchFiniteDifferences) {
  const SimTrajectory traj = SimTrajectory::square_loop(4.0, 40.0, 40.0);
  for (double t : {1.0, 7.3, 15.0, 33.3}) {
    const double h = 1e-5;
    const TrajectoryPoint a = traj.evaluate(t - h), b = traj.evaluate(t + h), c = traj.evaluate(t);
    EXPECT_LT(((b.p_GB - a.p_GB) / (2 * h) - c.v_GB).norm(), 1e-6);
    EXPECT_LT(((b.v_GB - a.v_GB) / (2 * h) - c.a_G).norm(), 1e-5);
    // d/dt R_GB = -[w]x R_GB
    const Vec3 w = -(b.q_GB * a.q_GB.inverse()).log() / (2 * h);
    EXPECT_LT((w - c.omega_B).norm(), 1e-5);
  }
}

TEST(Sim, StreamsAreDeterministic) {
  const SimTrajectory traj = SimTrajectory::sinusoid(5.0);
  ImuSimParams p;
  EXPECT_TRUE(same_samples(synthesize_imu(traj, p, 9), synthesize_imu(traj, p, 9)));
  EXPECT_FALSE(same_samples(synthesize_imu(traj, p, 9), synthesize_imu(traj, p, 10)));

  const SimWorld w = make_world(WorldParams{}, 3);
  ObservationParams op;
  op.outlier_rate = 0.1;
  op.dropout_rate = 0.05;
  const auto f1 = synthesize_observations(w, traj, CameraParams::standard(), op, 4);
  const auto f2 = synthesize_observations(w, traj, CameraParams::standard(), op, 4);
  ASSERT_EQ(f1.size(), f2.size());
  for (std::size_t k = 0; k < f1.size(); ++k) {
    ASSERT_EQ(f1[k].points.size(), f2[k].points.size());
    for (std::size_t i = 0; i < f1[k].points.size(); ++i) {
      EXPECT_EQ(f1[k].points[i].track_id, f2[k].points[i].track_id);
      EXPECT_EQ(f1[k].points[i].left_uv, f2[k].points[i].left_uv);
    }
  }
}

TEST(Sim, StaticZeroNoiseImu) {
  const UnitQuaternion q = UnitQuaternion::exp(Vec3(0.3, -0.2, 1.0));
  ImuSimParams p;
  p.zero_noise = true;
  const ImuStream s = synthesize_imu(SimTrajectory::stationary(q, Vec3(1, 2, 3), 2.0), p, 1);
  const Vec3 expected = q.rotate(-p.gravity);
  for (const ImuSample& m : s.samples) {
    EXPECT_LT(m.gyro.norm(), 1e-15);
    EXPECT_LT((m.accel - expected).norm(), 1e-12);
  }
}

TEST(Sim, WhiteNoiseStandardDeviation) {
  ImuSimParams p;
  p.noise.gyro_bias_randomwalk = 0.0;
  p.noise.accel_bias_randomwalk = 0.0;
  const ImuStream s = synthesize_imu(SimTrajectory::stationary(UnitQuaternion(), Vec3::Zero(), 500.0), p, 2);
  ASSERT_GE(s.samples.size(), 100000u);
  std::vector<double> gx, az;
  for (const ImuSample& m : s.samples) {
    gx.push_back(m.gyro.x());
    az.push_back(m.accel.z());
  }
  const double sq = std::sqrt(p.rate);
  EXPECT_NEAR(sample_std(gx) / (p.noise.gyro_noise_density * sq), 1.0, 0.05);
  EXPECT_NEAR(sample_std(az) / (p.noise.accel_noise_density * sq), 1.0, 0.05);
}

TEST(Sim, ObservationsAreInsideTheImage) {
  const SimTrajectory traj = SimTrajectory::sinusoid(10.0);
  const CameraParams cam = CameraParams::standard();
  ObservationParams op;
  op.pixel_noise = 0.0;
  const auto frames = synthesize_observations(make_world(WorldParams{}, 5), traj, cam, op, 6);
  ASSERT_EQ(frames.size(), camera_timestamps(10.0, op.camera_rate).size());
  for (const FrameObservations& f : frames) {
    EXPECT_LE(static_cast<int>(f.points.size()), op.max_points);
    EXPECT_LE(static_cast<int>(f.lines.size()), op.max_lines);
    for (const PointMeasurement& m : f.points) {
      EXPECT_TRUE(cam.in_image(m.left_uv));
      if (m.right_uv) {
        EXPECT_TRUE(cam.in_image(*m.right_uv));
      }
    }
    for (const LineMeasurement& m : f.lines) {
      EXPECT_TRUE(cam.in_image(m.left.p1) && cam.in_image(m.left.p2));
      EXPECT_GE((m.left.p2 - m.left.p1).norm() * cam.focal, op.min_line_pixels - 1e-9);
    }
  }
}

TEST(Sim, ZeroNoiseResidualsVanishAtTruth) {
  const SimTrajectory traj = SimTrajectory::sinusoid(5.0);
  const CameraParams cam = CameraParams::standard();
  const SimWorld world = make_world(WorldParams{}, 7);
  ObservationParams op;
  op.pixel_noise = 0.0;
  const auto frames = synthesize_observations(world, traj, cam, op, 8);
  int checked_lines = 0;
  for (const FrameObservations& f : frames) {
    const TrajectoryPoint tp = traj.evaluate(to_seconds(f.timestamp_ns));
    const Pose left = compose(cam.extrinsics.as_pose(), Pose{tp.q_GB, tp.p_GB});
    for (const PointMeasurement& m : f.points) {
      const Vec3& p = world.points[static_cast<std::size_t>(m.landmark_id)].p;
      EXPECT_LT((m.left_uv - plvio::testing::project(left, p)).norm(), 1e-12);
      if (m.right_uv) {
        EXPECT_LT((*m.right_uv - plvio::testing::project(cam.rig.right_pose(left), p)).norm(), 1e-12);
      }
    }
    for (const LineMeasurement& m : f.lines) {
      const SimSegment& s = world.segments[static_cast<std::size_t>(m.segment_id)];
      if (left.to_frame(s.p_b).z() < 0.1 || left.to_frame(s.p_e).z() < 0.1) continue;
      EXPECT_LT(line_residual(m.left, LineEndpoints{s.p_b, s.p_e}, left).norm(), 1e-10);
      ++checked_lines;
    }
  }
  EXPECT_GT(checked_lines, 100);
}
