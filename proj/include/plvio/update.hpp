#pragma once

// EKF measurement updates: chi-square gating, QR compression of stacked
// residual blocks, the Joseph-form update, and the loop-closure update that
// treats stored map points as priors.

#include "plvio/point_meas.hpp"

#include <vector>

namespace plvio {

struct UpdateConfig {
  double sigma_point = 1.0 / 460.0;  // normalized image units
  double sigma_line = 1.0 / 460.0;
  double sigma_loop = 2.0 / 460.0;
  // Standard deviation (m) of stored map points, propagated into the
  // loop-closure noise.
  double map_point_sigma = 0.0;
  double chi2_confidence = 0.95;
  int max_stacked_rows = 2000;

  void validate() const;
};

// chi-square quantile at `confidence` with `dof` degrees of freedom.
double chi2_threshold(int dof, double confidence);

// Mahalanobis test r^T (H P H^T + sigma^2 I)^-1 r < chi2(dim r).
// Throws SingularInnovation.
bool chi2_gate(const ResidualBlock& block, const MatX& cov, double confidence);

// Whitens and stacks blocks, then reduces the system with a thin QR to at
// most state-dimension rows. The result has unit noise.
ResidualBlock compress(const std::vector<ResidualBlock>& blocks, int max_stacked_rows = 2000);

// Kalman update with R = sigma^2 I, Joseph-form covariance.
void ekf_update(FilterState& state, const ResidualBlock& block);

struct LoopMatch {
  Vec3 p_map = Vec3::Zero();
  StereoObservation obs;  // obs.frame_id must be a clone in the window
};

struct LoopUpdateStats {
  int accepted = 0;
  int gated = 0;
  int skipped = 0;  // behind camera or frame not in window
};

// Reprojection update of the current clones against map points, without
// feature marginalization. Each match is gated on its own; the accepted rows
// are applied in a single update. Throws AllGated when none pass.
LoopUpdateStats loop_closure_update(FilterState& state, const std::vector<LoopMatch>& matches, const StereoRig& rig,
                                    const UpdateConfig& cfg);

}  // namespace plvio
