#include "plvio/evaluate.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace plvio;
using plvio::testing::Rng;

namespace {

std::vector<TrajectorySample> random_path(Rng& r, int n) {
  std::vector<TrajectorySample> out;
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    p += r.vec(0.2);
    out.push_back(TrajectorySample{i * 50'000'000LL, r.rotation(), p});
  }
  return out;
}

}  // namespace

TEST(Evaluate, RigidCopyHasZeroError) {
  Rng r(1);
  const auto truth = random_path(r, 50);
  const UnitQuaternion q = r.rotation();
  const Vec3 t = r.vec(5.0);
  auto est = truth;
  for (auto& s : est) s.p_GB = q.rotate(s.p_GB) + t;
  const AteResult a = evaluate_ate(est, truth);
  EXPECT_LT(a.rmse, 1e-10);
  EXPECT_EQ(a.pairs, 50);
  // Alignment maps the estimate back: R = q^-1.
  EXPECT_LT((a.alignment.R - q.inverse().matrix()).norm(), 1e-10);
}

TEST(Evaluate, UnalignedMatchesDirectComputation) {
  Rng r(2);
  const auto truth = random_path(r, 31);
  auto est = truth;
  double sq = 0.0;
  std::vector<double> e;
  for (auto& s : est) {
    const Vec3 d = r.vec(0.1);
    s.p_GB += d;
    sq += d.squaredNorm();
    e.push_back(d.norm());
  }
  const AteResult a = evaluate_ate(est, truth, 1'000'000, false);
  EXPECT_NEAR(a.rmse, std::sqrt(sq / 31.0), 1e-12);
  std::sort(e.begin(), e.end());
  EXPECT_NEAR(a.median, e[15], 1e-12);
  EXPECT_NEAR(a.max, e.back(), 1e-12);
  // Alignment can only reduce the error.
  EXPECT_LE(evaluate_ate(est, truth).rmse, a.rmse + 1e-12);
}

TEST(Evaluate, AssociationWindow) {
  Rng r(3);
  const auto truth = random_path(r, 20);
  auto est = truth;
  for (auto& s : est) s.timestamp_ns += 2'000'000;
  try {
    evaluate_ate(est, truth);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoOverlap);
  }
  EXPECT_EQ(evaluate_ate(est, truth, 3'000'000).pairs, 20);
}

TEST(Evaluate, MedianOfRuns) {
  EXPECT_DOUBLE_EQ(median_of_runs({5, 1, 4, 2, 3}), 3.0);
  EXPECT_DOUBLE_EQ(median_of_runs({7}), 7.0);
  try {
    median_of_runs({1, 2});
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}
