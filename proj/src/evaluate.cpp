#include "plvio/evaluate.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace plvio {

RigidAlignment align_rigid(const std::vector<Vec3>& source, const std::vector<Vec3>& target) {
  if (source.size() != target.size()) {
    throw VioError(ErrorCode::kDimensionMismatch, "alignment needs equally many source and target points");
  }
  if (source.size() < 3) throw VioError(ErrorCode::kInvalidArgument, "alignment needs at least 3 points");
  const double n = static_cast<double>(source.size());
  Vec3 ms = Vec3::Zero(), mt = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    ms += source[i];
    mt += target[i];
  }
  ms /= n;
  mt /= n;
  Mat3 S = Mat3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) S += (target[i] - mt) * (source[i] - ms).transpose();
  Eigen::JacobiSVD<Mat3> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  RigidAlignment a;
  a.R = svd.matrixU() * D * svd.matrixV().transpose();
  a.t = mt - a.R * ms;
  return a;
}

AteResult evaluate_ate(const std::vector<TrajectorySample>& estimate, const std::vector<TrajectorySample>& truth,
                       Timestamp max_dt_ns, bool align) {
  std::vector<Vec3> est, gt;
  for (const TrajectorySample& e : estimate) {
    const auto it = std::lower_bound(truth.begin(), truth.end(), e.timestamp_ns,
                                     [](const TrajectorySample& s, Timestamp t) { return s.timestamp_ns < t; });
    const TrajectorySample* best = nullptr;
    Timestamp best_dt = max_dt_ns + 1;
    if (it != truth.end() && it->timestamp_ns - e.timestamp_ns < best_dt) {
      best = &*it;
      best_dt = it->timestamp_ns - e.timestamp_ns;
    }
    if (it != truth.begin() && e.timestamp_ns - (it - 1)->timestamp_ns < best_dt) best = &*(it - 1);
    if (!best) continue;
    est.push_back(e.p_GB);
    gt.push_back(best->p_GB);
  }
  if (est.size() < 3) {
    throw VioError(ErrorCode::kNoOverlap, "only " + std::to_string(est.size()) +
                                              " estimate/ground-truth pairs within the association window");
  }
  AteResult r;
  r.pairs = static_cast<int>(est.size());
  if (align) r.alignment = align_rigid(est, gt);
  std::vector<double> errors(est.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    errors[i] = (r.alignment.R * est[i] + r.alignment.t - gt[i]).norm();
    sq += errors[i] * errors[i];
    r.mean += errors[i];
    r.max = std::max(r.max, errors[i]);
  }
  r.rmse = std::sqrt(sq / static_cast<double>(errors.size()));
  r.mean /= static_cast<double>(errors.size());
  std::sort(errors.begin(), errors.end());
  const std::size_t m = errors.size() / 2;
  r.median = errors.size() % 2 ? errors[m] : 0.5 * (errors[m - 1] + errors[m]);
  return r;
}

double median_of_runs(std::vector<double> values) {
  if (values.empty() || values.size() % 2 == 0) {
    throw VioError(ErrorCode::kInvalidArgument, "median of runs needs an odd number of values, got " +
                                                    std::to_string(values.size()));
  }
  std::nth_element(values.begin(), values.begin() + static_cast<long>(values.size() / 2), values.end());
  return values[values.size() / 2];
}

}  // namespace plvio
