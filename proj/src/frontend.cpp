#include "plvio/frontend.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace plvio {

namespace {

double sampson_distance(const Mat3& E, const Vec3& x_prev, const Vec3& x_curr) {
  const Vec3 Ex = E * x_prev;
  const Vec3 Etx = E.transpose() * x_curr;
  const double e = x_curr.dot(Ex);
  const double denom = Ex.x() * Ex.x() + Ex.y() * Ex.y() + Etx.x() * Etx.x() + Etx.y() * Etx.y();
  if (denom <= 0.0) return std::abs(e) > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return std::abs(e) / std::sqrt(denom);
}

int count_inliers(const Mat3& E, const std::vector<Vec3>& prev, const std::vector<Vec3>& curr, double threshold,
                  std::vector<bool>* mask) {
  int n = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    const bool in = sampson_distance(E, prev[i], curr[i]) < threshold;
    if (mask != nullptr) (*mask)[i] = in;
    n += in ? 1 : 0;
  }
  return n;
}

}  // namespace

std::vector<bool> two_point_ransac(const std::vector<TemporalMatch>& matches, const UnitQuaternion& R_prev_to_curr,
                                   const TwoPointRansacOptions& options, std::uint64_t seed) {
  const std::size_t n = matches.size();
  if (n < 2) {
    throw VioError(ErrorCode::kTooFewMatches, "two-point RANSAC needs 2 matches, got " + std::to_string(n));
  }
  const Mat3 R = R_prev_to_curr.matrix();
  std::vector<Vec3> prev(n), curr(n), rotated(n), constraint(n);
  std::vector<double> disparity(n);
  for (std::size_t i = 0; i < n; ++i) {
    prev[i] = Vec3(matches[i].uv_prev.x(), matches[i].uv_prev.y(), 1.0);
    curr[i] = Vec3(matches[i].uv_curr.x(), matches[i].uv_curr.y(), 1.0);
    rotated[i] = R * prev[i];
    constraint[i] = rotated[i].cross(curr[i]);
    disparity[i] = (rotated[i].head<2>() / rotated[i].z() - matches[i].uv_curr).norm();
  }

  std::vector<double> sorted = disparity;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(n / 2), sorted.end());
  std::vector<bool> mask(n, false);
  if (sorted[n / 2] < options.threshold) {
    // Rotation explains the motion; translation is unobservable.
    for (std::size_t i = 0; i < n; ++i) mask[i] = disparity[i] < 2.0 * options.threshold;
    return mask;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Vec3 best_t = Vec3::Zero();
  int best = -1;
  long iterations = options.max_iterations;
  for (long it = 0; it < iterations; ++it) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    while (j == i) j = pick(rng);
    Vec3 t = constraint[i].cross(constraint[j]);
    const double norm = t.norm();
    if (norm < 1e-12) continue;
    t /= norm;
    const int inliers = count_inliers(skew(t) * R, prev, curr, options.threshold, nullptr);
    if (inliers > best) {
      best = inliers;
      best_t = t;
      const double w = static_cast<double>(inliers) / static_cast<double>(n);
      if (w >= 1.0) break;
      const double needed = std::log(1.0 - options.confidence) / std::log(1.0 - w * w);
      iterations = std::min<long>(options.max_iterations, static_cast<long>(std::ceil(needed)));
    }
  }
  if (best < 0) return mask;

  count_inliers(skew(best_t) * R, prev, curr, options.threshold, &mask);
  // Least-squares translation direction over the consensus set.
  const long m = std::count(mask.begin(), mask.end(), true);
  if (m >= 2) {
    MatX A(m, 3);
    long r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) A.row(r++) = constraint[i].normalized().transpose();
    }
    const Eigen::JacobiSVD<MatX> svd(A, Eigen::ComputeFullV);
    const Vec3 t = svd.matrixV().col(2);
    std::vector<bool> refined(n, false);
    if (count_inliers(skew(t) * R, prev, curr, options.threshold, &refined) >= best) mask = refined;
  }
  return mask;
}

std::vector<bool> circular_check(const std::vector<int>& prev_left_to_curr_left,
                                 const std::vector<int>& curr_left_to_curr_right,
                                 const std::vector<int>& curr_right_to_prev_right,
                                 const std::vector<int>& prev_right_to_prev_left) {
  auto follow = [](const std::vector<int>& map, int i) {
    if (i < 0 || static_cast<std::size_t>(i) >= map.size()) return -1;
    return map[static_cast<std::size_t>(i)];
  };
  std::vector<bool> mask(prev_left_to_curr_left.size(), false);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int a = follow(prev_left_to_curr_left, static_cast<int>(i));
    const int b = follow(curr_left_to_curr_right, a);
    const int c = follow(curr_right_to_prev_right, b);
    const int d = follow(prev_right_to_prev_left, c);
    mask[i] = d == static_cast<int>(i);
  }
  return mask;
}

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
  if (w < 0 || h < 0) throw VioError(ErrorCode::kInvalidArgument, "negative image size");
}

double GrayImage::mean() const {
  if (pixels.empty()) return 0.0;
  const double sum = std::accumulate(pixels.begin(), pixels.end(), 0.0);
  return sum / static_cast<double>(pixels.size());
}

namespace {

std::array<std::int64_t, 256> cumulative_histogram(const GrayImage& img) {
  std::array<std::int64_t, 256> h{};
  for (std::uint8_t p : img.pixels) ++h[p];
  for (std::size_t i = 1; i < h.size(); ++i) h[i] += h[i - 1];
  return h;
}

void check_sizes(const GrayImage& ref, const GrayImage& target) {
  if (ref.width != target.width || ref.height != target.height ||
      ref.pixels.size() != static_cast<std::size_t>(ref.width) * static_cast<std::size_t>(ref.height) ||
      target.pixels.size() != ref.pixels.size()) {
    throw VioError(ErrorCode::kDimensionMismatch, "images differ in size: " + std::to_string(ref.width) + "x" +
                                                      std::to_string(ref.height) + " vs " +
                                                      std::to_string(target.width) + "x" +
                                                      std::to_string(target.height));
  }
}

}  // namespace

GrayImage match_histogram(const GrayImage& ref, const GrayImage& target) {
  check_sizes(ref, target);
  if (target.pixels.empty()) return target;
  const auto cdf_ref = cumulative_histogram(ref);
  const auto cdf_target = cumulative_histogram(target);
  // Both images have the same pixel count, so the CDFs compare as counts.
  std::array<std::uint8_t, 256> lut{};
  std::size_t r = 0;
  for (std::size_t g = 0; g < 256; ++g) {
    while (r < 255 && cdf_ref[r] < cdf_target[g]) ++r;
    lut[g] = static_cast<std::uint8_t>(r);
  }
  GrayImage out = target;
  for (auto& p : out.pixels) p = lut[p];
  return out;
}

GrayImage brightness_check_and_match(const GrayImage& ref, const GrayImage& target, double mean_gap_threshold) {
  check_sizes(ref, target);
  if (std::abs(ref.mean() - target.mean()) <= mean_gap_threshold) return target;
  return match_histogram(ref, target);
}

}  // namespace plvio
