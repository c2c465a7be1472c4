#pragma once

// Per-feature residual block construction: triangulate, stack residuals and
// Jacobians, apply the observability constraint, marginalize the feature and
// gate. Every feature is independent given the (read-only) filter state, so
// the parallel version distributes features over OpenMP threads and writes
// each result into its own slot; output order is input order either way.

#include "plvio/line_meas.hpp"
#include "plvio/update.hpp"

#include <optional>
#include <vector>

namespace plvio {

struct BlockBuildOptions {
  TriangulationOptions point_triangulation;
  LineTriangulationOptions line_triangulation;
  double sigma_point = 1.0 / 460.0;
  double sigma_line = 1.0 / 460.0;
  double chi2_confidence = 0.95;
  bool gate = true;
  bool oc_fix = true;
};

struct FeatureBlock {
  int feature_id = 0;
  bool is_line = false;
  std::optional<ResidualBlock> block;  // set iff the feature is usable
  std::optional<ErrorCode> failure;    // why it was dropped, if it was
  bool gated_out = false;
  double nullspace_residual = 0.0;
  Vec3 p_f = Vec3::Zero();             // points: triangulated position
  std::optional<LineEndpoints> line;   // lines: triangulated endpoints
};

FeatureBlock build_point_block(const PointTrack& track, const FilterState& state, const StereoRig& rig,
                               const BlockBuildOptions& options);
FeatureBlock build_line_block(const LineTrack& track, const FilterState& state, const StereoRig& rig,
                              const BlockBuildOptions& options);

// Points first, then lines, each in input order.
std::vector<FeatureBlock> build_blocks_serial(const std::vector<PointTrack>& points,
                                              const std::vector<LineTrack>& lines, const FilterState& state,
                                              const StereoRig& rig, const BlockBuildOptions& options);
std::vector<FeatureBlock> build_blocks_parallel(const std::vector<PointTrack>& points,
                                                const std::vector<LineTrack>& lines, const FilterState& state,
                                                const StereoRig& rig, const BlockBuildOptions& options);

}  // namespace plvio
