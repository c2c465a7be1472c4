#pragma once

// Correspondence-level outlier rejection and photometric normalization:
// gyro-aided two-point RANSAC, four-way circular match consistency and
// histogram matching between images of differing brightness.

#include "plvio/geom.hpp"

#include <cstdint>
#include <vector>

namespace plvio {

struct TemporalMatch {
  Vec2 uv_prev = Vec2::Zero();  // normalized coordinates
  Vec2 uv_curr = Vec2::Zero();
};

struct TwoPointRansacOptions {
  double threshold = 3.0 / 460.0;  // Sampson distance, normalized units
  double confidence = 0.99;
  int max_iterations = 200;
};

// `R_prev_to_curr` rotates previous-camera vectors into the current camera
// (from integrated gyro). Returns one flag per match. Throws TooFewMatches.
std::vector<bool> two_point_ransac(const std::vector<TemporalMatch>& matches, const UnitQuaternion& R_prev_to_curr,
                                   const TwoPointRansacOptions& options, std::uint64_t seed);

// Directed match maps between feature indices; -1 marks "no match". A
// previous-left feature i survives iff
//   prev_right_to_prev_left[curr_right_to_prev_right[curr_left_to_curr_right[prev_left_to_curr_left[i]]]] == i.
std::vector<bool> circular_check(const std::vector<int>& prev_left_to_curr_left,
                                 const std::vector<int>& curr_left_to_curr_right,
                                 const std::vector<int>& curr_right_to_prev_right,
                                 const std::vector<int>& prev_right_to_prev_left);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double mean() const;
};

// Returns `target` unchanged if its mean brightness is within
// `mean_gap_threshold` of `ref`, otherwise its CDF-based histogram match onto
// `ref`. Throws DimensionMismatch.
GrayImage brightness_check_and_match(const GrayImage& ref, const GrayImage& target, double mean_gap_threshold);

// Unconditional histogram matching.
GrayImage match_histogram(const GrayImage& ref, const GrayImage& target);

}  // namespace plvio
