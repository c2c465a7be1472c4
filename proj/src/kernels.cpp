#include "plvio/kernels.hpp"

namespace plvio {

FeatureBlock build_point_block(const PointTrack& track, const FilterState& state, const StereoRig& rig,
                               const BlockBuildOptions& options) {
  FeatureBlock out;
  out.feature_id = track.track_id;
  try {
    out.p_f = triangulate(track, state, rig, options.point_triangulation);
    FeatureJacobians jac = point_residual_jacobian(track, out.p_f, state, rig, options.point_triangulation.z_min);
    if (options.oc_fix) apply_observability_constraint(jac, state, {out.p_f});
    ResidualBlock block = marginalize_feature(jac.r, jac.H_x, jac.H_f, options.sigma_point, &out.nullspace_residual);
    if (options.gate && !chi2_gate(block, state.cov, options.chi2_confidence)) {
      out.gated_out = true;
      return out;
    }
    out.block = std::move(block);
  } catch (const VioError& e) {
    out.failure = e.code();
  }
  return out;
}

FeatureBlock build_line_block(const LineTrack& track, const FilterState& state, const StereoRig& rig,
                              const BlockBuildOptions& options) {
  FeatureBlock out;
  out.feature_id = track.line_id;
  out.is_line = true;
  try {
    const LineEndpoints L = triangulate_line(track, state, rig, options.line_triangulation);
    out.line = L;
    FeatureJacobians jac = line_residual_jacobian(track, L, state, rig, options.line_triangulation.z_min);
    if (options.oc_fix) apply_observability_constraint(jac, state, {L.p_b, L.p_e});
    ResidualBlock block = marginalize_line(jac.r, jac.H_x, jac.H_f, options.sigma_line, &out.nullspace_residual);
    if (options.gate && !chi2_gate(block, state.cov, options.chi2_confidence)) {
      out.gated_out = true;
      return out;
    }
    out.block = std::move(block);
  } catch (const VioError& e) {
    out.failure = e.code();
  }
  return out;
}

std::vector<FeatureBlock> build_blocks_serial(const std::vector<PointTrack>& points,
                                              const std::vector<LineTrack>& lines, const FilterState& state,
                                              const StereoRig& rig, const BlockBuildOptions& options) {
  std::vector<FeatureBlock> out;
  out.reserve(points.size() + lines.size());
  for (const PointTrack& t : points) out.push_back(build_point_block(t, state, rig, options));
  for (const LineTrack& t : lines) out.push_back(build_line_block(t, state, rig, options));
  return out;
}

std::vector<FeatureBlock> build_blocks_parallel(const std::vector<PointTrack>& points,
                                                const std::vector<LineTrack>& lines, const FilterState& state,
                                                const StereoRig& rig, const BlockBuildOptions& options) {
  const long np = static_cast<long>(points.size());
  const long total = np + static_cast<long>(lines.size());
  std::vector<FeatureBlock> out(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < total; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = i < np ? build_point_block(points[k], state, rig, options)
                    : build_line_block(lines[k - static_cast<std::size_t>(np)], state, rig, options);
  }
  return out;
}

}  // namespace plvio
