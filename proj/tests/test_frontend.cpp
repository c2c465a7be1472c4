#include "plvio/frontend.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

using namespace plvio;
using plvio::testing::Rng;

namespace {

struct LabeledMatches {
  std::vector<TemporalMatch> matches;
  std::vector<bool> inlier;
  UnitQuaternion R_prev_to_curr;
};

// Two camera poses with a small motion; a fraction of matches is replaced by
// random image points.
LabeledMatches make_matches(Rng& r, int n, double outlier_fraction, double noise) {
  LabeledMatches out;
  const Pose prev(UnitQuaternion(), Vec3::Zero());
  const Pose curr(UnitQuaternion::exp(r.vec(0.05)), Vec3(0.2, r.uniform(-0.05, 0.05), r.uniform(-0.05, 0.05)));
  out.R_prev_to_curr = curr.rotation * prev.rotation.inverse();
  for (int i = 0; i < n; ++i) {
    const Vec3 p(r.uniform(-3, 3), r.uniform(-2, 2), r.uniform(4, 10));
    TemporalMatch m{plvio::testing::project(prev, p), plvio::testing::project(curr, p)};
    m.uv_prev += Vec2(r.normal(noise), r.normal(noise));
    m.uv_curr += Vec2(r.normal(noise), r.normal(noise));
    const bool outlier = r.uniform(0, 1) < outlier_fraction;
    if (outlier) m.uv_curr = Vec2(r.uniform(-0.8, 0.8), r.uniform(-0.5, 0.5));
    out.matches.push_back(m);
    out.inlier.push_back(!outlier);
  }
  return out;
}

GrayImage gradient(int w, int h, int offset) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>(std::clamp((x + y) % 180 + offset, 0, 255));
  return img;
}

}  // namespace

TEST(TwoPointRansac, AllInliersNoiseless) {
  Rng r(1);
  const LabeledMatches m = make_matches(r, 60, 0.0, 0.0);
  const std::vector<bool> flags = two_point_ransac(m.matches, m.R_prev_to_curr, TwoPointRansacOptions{}, 3);
  EXPECT_EQ(std::count(flags.begin(), flags.end(), true), 60);
}

TEST(TwoPointRansac, RejectsLabeledOutliers) {
  Rng r(2);
  int tp = 0, fp = 0, fn = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const LabeledMatches m = make_matches(r, 100, 0.25, 1.0 / 460.0);
    const std::vector<bool> flags = two_point_ransac(m.matches, m.R_prev_to_curr, TwoPointRansacOptions{}, trial);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      tp += flags[i] && m.inlier[i];
      fp += flags[i] && !m.inlier[i];
      fn += !flags[i] && m.inlier[i];
    }
  }
  EXPECT_GE(static_cast<double>(tp) / (tp + fp), 0.95);
  EXPECT_GE(static_cast<double>(tp) / (tp + fn), 0.95);
}

TEST(TwoPointRansac, TooFewMatches) {
  try {
    two_point_ransac({TemporalMatch{}}, UnitQuaternion(), TwoPointRansacOptions{}, 1);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewMatches);
  }
}

TEST(CircularCheck, IdentityAndBrokenLinks) {
  const std::vector<int> id{0, 1, 2, 3};
  EXPECT_EQ(circular_check(id, id, id, id), std::vector<bool>(4, true));
  std::vector<int> broken = id;
  broken[2] = -1;
  broken[3] = 0;
  EXPECT_EQ(circular_check(id, broken, id, id), std::vector<bool>({true, true, false, false}));
}

TEST(CircularCheck, RandomCycleSurvivalRate) {
  // With one map a random permutation, a feature survives iff that map has
  // a fixed point there: one survivor per trial on average.
  Rng r(3);
  const int n = 200;
  std::vector<int> id(n), perm(n);
  std::iota(id.begin(), id.end(), 0);
  double survived = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    perm = id;
    std::shuffle(perm.begin(), perm.end(), r.engine());
    const std::vector<bool> ok = circular_check(id, perm, id, id);
    survived += static_cast<double>(std::count(ok.begin(), ok.end(), true));
  }
  EXPECT_NEAR(survived / trials, 1.0, 0.3);
}

TEST(HistogramMatch, IdenticalImagesUnchanged) {
  const GrayImage a = gradient(64, 48, 20);
  EXPECT_EQ(match_histogram(a, a).pixels, a.pixels);
}

TEST(HistogramMatch, ConstantImages) {
  const GrayImage ref(32, 32, 100), target(32, 32, 50);
  const GrayImage out = match_histogram(ref, target);
  for (std::uint8_t v : out.pixels) EXPECT_EQ(v, 100);
}

TEST(HistogramMatch, OffsetGradientPerPixel) {
  const GrayImage ref = gradient(128, 96, 0), target = gradient(128, 96, 60);
  const GrayImage out = brightness_check_and_match(ref, target, 10.0);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) EXPECT_LE(std::abs(out.pixels[i] - ref.pixels[i]), 2);
  EXPECT_NEAR(out.mean(), ref.mean(), 2.0);
}

TEST(HistogramMatch, SmallGapSkipsMatching) {
  const GrayImage ref = gradient(64, 48, 0), target = gradient(64, 48, 5);
  EXPECT_EQ(brightness_check_and_match(ref, target, 10.0).pixels, target.pixels);
}

TEST(HistogramMatch, Idempotent) {
  const GrayImage ref = gradient(80, 60, 10), target = gradient(80, 60, 70);
  const GrayImage once = match_histogram(ref, target);
  EXPECT_EQ(match_histogram(ref, once).pixels, once.pixels);
}

TEST(HistogramMatch, DimensionMismatch) {
  try {
    match_histogram(GrayImage(10, 10), GrayImage(10, 11));
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}
