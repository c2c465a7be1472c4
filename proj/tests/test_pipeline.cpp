#include "plvio/evaluate.hpp"
#include "plvio/pipeline.hpp"

#include <gtest/gtest.h>

using namespace plvio;

namespace {

RunConfig short_noiseless(double duration) {
  RunConfig c;
  c.duration = duration;
  c.zero_imu_noise = true;
  c.pixel_noise = 0.0;
  c.loop_closure = false;
  return c;
}

}  // namespace

TEST(Pipeline, TruthInterpolation) {
  RunConfig c;
  c.duration = 2.0;
  const SimData d = simulate(c);
  const auto& truth = d.imu.truth;
  const ImuState exact = truth_at(truth, truth[10].timestamp_ns);
  EXPECT_EQ(exact.p_GB, truth[10].state.p_GB);
  const Timestamp mid = (truth[10].timestamp_ns + truth[11].timestamp_ns) / 2;
  EXPECT_LT((truth_at(truth, mid).p_GB - 0.5 * (truth[10].state.p_GB + truth[11].state.p_GB)).norm(), 1e-12);
  try {
    truth_at(truth, truth.back().timestamp_ns + 1);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoOverlap);
  }
}

TEST(Pipeline, NoiselessShortRun) {
  const RunOutput out = run_simulation(short_noiseless(8.0));
  EXPECT_EQ(out.trajectory.size(), out.frames.size());
  EXPECT_GT(out.stats.point_blocks, 100);
  EXPECT_GT(out.stats.line_blocks, 10);
  EXPECT_LT(out.stats.max_point_nullspace, 1e-10);
  EXPECT_LT(out.stats.max_line_nullspace, 1e-10);
  EXPECT_LT(evaluate_ate(out.trajectory, out.truth).rmse, 1e-4);
  EXPECT_LT(out.position_error.back(), 1e-4);
}

TEST(Pipeline, DeterministicTrajectory) {
  RunConfig c;
  c.duration = 6.0;
  c.seed = 5;
  EXPECT_EQ(format_tum(run_simulation(c).trajectory), format_tum(run_simulation(c).trajectory));
  RunConfig other = c;
  other.seed = 6;
  EXPECT_NE(format_tum(run_simulation(c).trajectory), format_tum(run_simulation(other).trajectory));
}

TEST(Pipeline, NeesIsZeroAtTruth) {
  RunConfig c;
  c.duration = 1.0;
  const SimData d = simulate(c);
  const FilterState s = initial_state(c, d.imu.truth, d.frames.front().timestamp_ns);
  EXPECT_NEAR(pose_nees(s, truth_at(d.imu.truth, d.frames.front().timestamp_ns)), 0.0, 1e-20);
}

TEST(Pipeline, FeatureSubsetsRun) {
  RunConfig c = short_noiseless(4.0);
  c.use_lines = false;
  const RunOutput p = run_simulation(c);
  EXPECT_EQ(p.stats.line_blocks, 0);
  c.use_lines = true;
  c.use_points = false;
  const RunOutput l = run_simulation(c);
  EXPECT_EQ(l.stats.point_blocks, 0);
  EXPECT_GT(l.stats.line_blocks, 0);
}

TEST(Pipeline, RejectsOutOfOrderFrames) {
  RunConfig c;
  c.duration = 1.0;
  const SimData d = simulate(c);
  Estimator est(c.estimator_config(), initial_state(c, d.imu.truth, d.frames[5].timestamp_ns), c.seed);
  for (const ImuSample& s : d.imu.samples) est.add_imu(s);
  est.process_frame(d.frames[5]);
  try {
    est.process_frame(d.frames[4]);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonMonotonicTime);
  }
}

TEST(Pipeline, LinesBoundAttitudeDrift) {
  RunConfig c;
  c.duration = 30.0;
  c.pixel_noise = 0.0;
  c.loop_closure = false;
  c.use_points = false;
  // Consumer-grade gyro, so that dead reckoning drifts well past what
  // 1 px measurements resolve.
  c.imu_noise.gyro_noise_density *= 10;
  c.imu_noise.gyro_bias_randomwalk *= 10;
  auto mean_attitude_error = [](const RunOutput& o) {
    double sum = 0.0;
    for (std::size_t k = 0; k < o.trajectory.size(); ++k) {
      sum += angular_distance(o.trajectory[k].q_GB, o.truth[k].q_GB);
    }
    return sum / static_cast<double>(o.trajectory.size());
  };
  const double lines = mean_attitude_error(run_simulation(c));
  c.use_lines = false;
  const double dead_reckoning = mean_attitude_error(run_simulation(c));
  EXPECT_LT(lines, dead_reckoning);
}
