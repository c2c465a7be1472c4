#pragma once

// Absolute trajectory error after rigid (rotation + translation) alignment,
// and the median-over-runs protocol.

#include "plvio/io.hpp"

#include <vector>

namespace plvio {

struct RigidAlignment {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();  // truth ~= R * estimate + t
};

// Least-squares rigid alignment of `source` onto `target` (Umeyama without
// scale). Requires at least 3 pairs.
RigidAlignment align_rigid(const std::vector<Vec3>& source, const std::vector<Vec3>& target);

struct AteResult {
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  int pairs = 0;
  RigidAlignment alignment;
};

// Associates each estimate with the ground-truth sample nearest in time,
// accepting pairs within `max_dt_ns`. Throws NoOverlap when fewer than 3
// pairs remain.
AteResult evaluate_ate(const std::vector<TrajectorySample>& estimate, const std::vector<TrajectorySample>& truth,
                       Timestamp max_dt_ns = 1'000'000, bool align = true);

// Median of an odd number of values. Throws InvalidArgument for an even or
// empty input.
double median_of_runs(std::vector<double> values);

}  // namespace plvio
