#include "plvio/config.hpp"

#include <gtest/gtest.h>

using namespace plvio;

namespace {

template <typename F>
ErrorCode error_of(F&& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const VioError& e) {
    if (message) *message = e.what();
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(Config, ParsesValuesAndComments) {
  const RunConfig c = parse_config_text(
      "# comment\n\nseed = 42\nsim.trajectory = square\nsim.duration=12.5\nfilter.oc_fix = false\n"
      "features.lines = off\nloop.min_inliers = 15  # trailing\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.trajectory, TrajectoryKind::kSquareLoop);
  EXPECT_DOUBLE_EQ(c.duration, 12.5);
  EXPECT_FALSE(c.oc_fix);
  EXPECT_FALSE(c.use_lines);
  EXPECT_EQ(c.loop.min_loop_inliers, 15);
}

TEST(Config, ErrorsCarrySourceLine) {
  std::string msg;
  EXPECT_EQ(error_of([] { parse_config_text("seed = 1\nno.such.key = 3\n", "cfg"); }, &msg),
            ErrorCode::kInvalidArgument);
  EXPECT_NE(msg.find("cfg:2:"), std::string::npos) << msg;
  EXPECT_EQ(error_of([] { parse_config_text("sim.duration = fast\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(error_of([] { parse_config_text("just text\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(error_of([] { parse_config_text("sim.duration = -1\n").validate(); }), ErrorCode::kInvalidArgument);
}

TEST(Config, DumpParsesBackToSameDump) {
  RunConfig c;
  apply_config_value(c, "imu.gyro_noise_density", "3.3e-4");
  apply_config_value(c, "sim.trajectory", "stationary");
  apply_config_value(c, "filter.prune_policy", "oldest");
  const std::string text = dump_config(c);
  EXPECT_EQ(dump_config(parse_config_text(text)), text);
  for (const std::string& key : config_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

TEST(Config, PixelUnitsConvertedByFocal) {
  RunConfig c;
  apply_config_value(c, "camera.focal", "400");
  apply_config_value(c, "update.sigma_point_px", "2");
  apply_config_value(c, "filter.ransac_threshold_px", "4");
  const EstimatorConfig e = c.estimator_config();
  EXPECT_DOUBLE_EQ(e.update.sigma_point, 2.0 / 400.0);
  EXPECT_DOUBLE_EQ(e.ransac.threshold, 4.0 / 400.0);
  // The simulator converts pixels itself.
  EXPECT_DOUBLE_EQ(c.observation_params().pixel_noise, c.pixel_noise);
}

TEST(Config, InitialCovarianceDiagonal) {
  RunConfig c;
  const MatX P = c.initial_covariance();
  EXPECT_EQ(P.rows(), idx::kImuDim);
  EXPECT_DOUBLE_EQ(P(idx::kP, idx::kP), c.init_sigma_p * c.init_sigma_p);
  EXPECT_DOUBLE_EQ(P(idx::kTheta, idx::kTheta), c.init_sigma_theta * c.init_sigma_theta);
  EXPECT_EQ(P, P.diagonal().asDiagonal().toDenseMatrix());
}
