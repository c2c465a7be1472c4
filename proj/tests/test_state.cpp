#include "plvio/state.hpp"
#include "test_util.hpp"

#include <Eigen/Eigenvalues>
#include <set>
#include <gtest/gtest.h>

using namespace plvio;
using plvio::testing::Rng;

namespace {

double min_eigenvalue(const MatX& P) { return Eigen::SelfAdjointEigenSolver<MatX>(P).eigenvalues().minCoeff(); }

}  // namespace

TEST(State, AugmentCovarianceBlocks) {
  Rng r(1);
  FilterState s(plvio::testing::random_imu(r), r.spd(idx::kImuDim), Vec3(0, 0, -9.81), 0);
  const MatX P = s.cov;
  const MatX J = clone_jacobian(s);
  augment_clone(s, 1, 0, 10);
  ASSERT_EQ(s.dim(), idx::kImuDim + 6);
  EXPECT_LT((s.cov.topLeftCorner(15, 15) - P).norm(), 1e-12);
  EXPECT_LT((s.cov.topRightCorner(15, 6) - P * J.transpose()).norm(), 1e-12);
  EXPECT_LT((s.cov.bottomRightCorner(6, 6) - J * P * J.transpose()).norm(), 1e-12);
  EXPECT_TRUE(approx_equal(s.clones.back().pose, s.imu.camera_pose(), 1e-15));
  EXPECT_GT(min_eigenvalue(s.cov), -1e-12);
}

TEST(State, WindowFullAndTimeOrder) {
  Rng r(2);
  FilterState s(plvio::testing::random_imu(r), r.spd(idx::kImuDim), Vec3(0, 0, -9.81), 0);
  augment_clone(s, 10, 0, 2);
  try {
    augment_clone(s, 10, 1, 2);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonMonotonicTime);
  }
  augment_clone(s, 20, 1, 2);
  try {
    augment_clone(s, 30, 2, 2);
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWindowFull);
  }
}

TEST(State, PrunePolicies) {
  Rng r(3);
  FilterState s = plvio::testing::random_window(r, 10);
  EXPECT_EQ(select_clones_to_prune(s, PrunePolicy::kOldestFirst), std::vector<int>({0}));
  EXPECT_EQ(select_clones_to_prune(s, PrunePolicy::kEveryOtherOldestHalf), std::vector<int>({0, 2, 4}));
}

TEST(State, RemoveClonesKeepsPrincipalSubmatrix) {
  Rng r(4);
  FilterState s = plvio::testing::random_window(r, 5);
  const MatX P = s.cov;
  remove_clones(s, {1, 3});
  std::vector<int> keep;
  for (int i = 0; i < 15; ++i) keep.push_back(i);
  for (int c : {0, 2, 4})
    for (int k = 0; k < 6; ++k) keep.push_back(15 + 6 * c + k);
  EXPECT_EQ(s.cov, P(keep, keep));
  ASSERT_EQ(s.clones.size(), 3u);
  EXPECT_EQ(s.clones[1].frame_id, 2);
}

TEST(State, InjectThenDifference) {
  Rng r(5);
  const FilterState a = plvio::testing::random_window(r, 3);
  FilterState b = a;
  VecX dx(a.dim());
  for (int i = 0; i < dx.size(); ++i) dx[i] = r.uniform(-1e-3, 1e-3);
  inject_error(b, dx);
  EXPECT_LT((state_difference(b, a) - dx).norm(), 1e-12);
}

TEST(State, InjectRejectsWrongDimension) {
  Rng r(6);
  FilterState s = plvio::testing::random_window(r, 2);
  try {
    inject_error(s, VecX::Zero(5));
    FAIL();
  } catch (const VioError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(State, RandomOperationSequenceKeepsLayout) {
  Rng r(11);
  FilterState s(plvio::testing::random_imu(r), r.spd(15, 1e-3), Vec3(0, 0, -9.81), 0);
  Timestamp t = 0;
  int next_id = 0;
  for (int step = 0; step < 500; ++step) {
    const double u = r.uniform(0, 1);
    if (u < 0.5 && s.clones.size() < 20) {
      s.imu.p_GB += r.vec(0.1);
      t += 50'000'000;
      augment_clone(s, t, next_id++, 20);
    } else if (u < 0.7 && s.clones.size() >= 2) {
      prune_clones(s, r.uniform(0, 1) < 0.5 ? PrunePolicy::kOldestFirst : PrunePolicy::kEveryOtherOldestHalf);
    } else {
      VecX dx(s.dim());
      for (long i = 0; i < dx.size(); ++i) dx[i] = r.normal(1e-3);
      inject_error(s, dx);
    }
    ASSERT_EQ(s.cov.rows(), s.dim());
    ASSERT_EQ(s.cov.cols(), s.dim());
    ASSERT_LT((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    std::set<int> ids;
    for (std::size_t c = 0; c < s.clones.size(); ++c) {
      ASSERT_TRUE(ids.insert(s.clones[c].frame_id).second);
      if (c > 0) ASSERT_LT(s.clones[c - 1].timestamp_ns, s.clones[c].timestamp_ns);
    }
  }
}
