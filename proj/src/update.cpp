#include "plvio/update.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <string>

namespace plvio {

void UpdateConfig::validate() const {
  if (!(sigma_point > 0.0) || !(sigma_line > 0.0) || !(sigma_loop > 0.0)) {
    throw VioError(ErrorCode::kInvalidArgument, "measurement noise must be strictly positive");
  }
  if (!(map_point_sigma >= 0.0)) {
    throw VioError(ErrorCode::kInvalidArgument, "map_point_sigma must be non-negative");
  }
  if (!(chi2_confidence > 0.0 && chi2_confidence < 1.0)) {
    throw VioError(ErrorCode::kInvalidArgument, "chi2_confidence must lie in (0, 1)");
  }
  if (max_stacked_rows < 1) {
    throw VioError(ErrorCode::kInvalidArgument, "max_stacked_rows must be positive");
  }
}

double chi2_threshold(int dof, double confidence) {
  if (dof < 1) throw VioError(ErrorCode::kInvalidArgument, "chi-square dof must be >= 1");
  const boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(dist, confidence);
}

namespace {

std::vector<int> nonzero_columns(const MatX& H) {
  std::vector<int> cols;
  for (int j = 0; j < H.cols(); ++j) {
    if (!H.col(j).isZero(0.0)) cols.push_back(j);
  }
  return cols;
}

}  // namespace

bool chi2_gate(const ResidualBlock& block, const MatX& cov, double confidence) {
  if (block.H.rows() != block.rows() || block.H.cols() != cov.rows()) {
    throw VioError(ErrorCode::kDimensionMismatch, "residual block does not match the covariance");
  }
  if (block.rows() == 0) return true;
  const std::vector<int> cols = nonzero_columns(block.H);
  const MatX Hs = block.H(Eigen::all, cols);
  MatX S = Hs * cov(cols, cols) * Hs.transpose();
  S.diagonal().array() += block.noise_sigma * block.noise_sigma;
  const Eigen::LLT<MatX> llt(S);
  if (llt.info() != Eigen::Success) {
    throw VioError(ErrorCode::kSingularInnovation, "innovation covariance is not positive definite");
  }
  const double m = block.r.dot(llt.solve(block.r));
  return m < chi2_threshold(static_cast<int>(block.rows()), confidence);
}

namespace {

// Replaces [H r] by the first min(rows, cols) rows of its triangular factor.
void reduce(MatX& H, VecX& r) {
  const long n = H.cols();
  if (H.rows() <= n) return;
  MatX M(H.rows(), n + 1);
  M.leftCols(n) = H;
  M.col(n) = r;
  const Eigen::HouseholderQR<MatX> qr(M);
  const MatX R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  H = R.leftCols(n);
  r = R.col(n);
}

}  // namespace

ResidualBlock compress(const std::vector<ResidualBlock>& blocks, int max_stacked_rows) {
  ResidualBlock out;
  out.noise_sigma = 1.0;
  if (blocks.empty()) return out;
  const long n = blocks.front().H.cols();
  out.H.resize(0, n);
  out.r.resize(0);
  for (const ResidualBlock& b : blocks) {
    if (b.H.cols() != n || b.H.rows() != b.rows()) {
      throw VioError(ErrorCode::kDimensionMismatch, "blocks disagree on the state dimension");
    }
    const long m = out.r.size();
    out.H.conservativeResize(m + b.rows(), Eigen::NoChange);
    out.r.conservativeResize(m + b.rows());
    out.H.bottomRows(b.rows()) = b.H / b.noise_sigma;
    out.r.tail(b.rows()) = b.r / b.noise_sigma;
    if (out.r.size() > max_stacked_rows) reduce(out.H, out.r);
  }
  reduce(out.H, out.r);
  return out;
}

void ekf_update(FilterState& state, const ResidualBlock& block) {
  const int n = state.dim();
  if (block.H.cols() != n || block.H.rows() != block.rows()) {
    throw VioError(ErrorCode::kDimensionMismatch, "block has " + std::to_string(block.H.cols()) +
                                                      " columns, state has " + std::to_string(n));
  }
  if (block.rows() == 0) return;
  const double var = block.noise_sigma * block.noise_sigma;
  const MatX PHt = state.cov * block.H.transpose();
  MatX S = block.H * PHt;
  S.diagonal().array() += var;
  const Eigen::LLT<MatX> llt(S);
  if (llt.info() != Eigen::Success) {
    throw VioError(ErrorCode::kSingularInnovation, "innovation covariance is not positive definite");
  }
  const MatX K = llt.solve(PHt.transpose()).transpose();
  const VecX dx = K * block.r;

  MatX IKH = -K * block.H;
  IKH.diagonal().array() += 1.0;
  MatX P = IKH * state.cov * IKH.transpose();
  P.noalias() += var * K * K.transpose();
  state.cov = std::move(P);
  symmetrize(state.cov);
  inject_error(state, dx);
}

LoopUpdateStats loop_closure_update(FilterState& state, const std::vector<LoopMatch>& matches, const StereoRig& rig,
                                    const UpdateConfig& cfg) {
  LoopUpdateStats stats;
  std::vector<ResidualBlock> accepted;
  const double var_loop = cfg.sigma_loop * cfg.sigma_loop;
  const double var_map = cfg.map_point_sigma * cfg.map_point_sigma;

  for (const LoopMatch& match : matches) {
    const auto ci = state.find_clone(match.obs.frame_id);
    if (!ci) {
      ++stats.skipped;
      continue;
    }
    const Pose& left = state.clones[*ci].pose;
    const int o = state.clone_offset(*ci);
    const int rows = match.obs.right_uv ? 4 : 2;
    VecX r(rows);
    MatX H = MatX::Zero(rows, state.dim());
    MatX Jf(rows, 3);
    bool ok = true;
    for (int k = 0; k < rows / 2 && ok; ++k) {
      const auto proj = project_with_jacobian(left, k == 0 ? nullptr : &rig, match.p_map, 1e-3);
      if (!proj) {
        ok = false;
        break;
      }
      const Vec2 z = k == 0 ? match.obs.left_uv : *match.obs.right_uv;
      r.segment<2>(2 * k) = z - proj->z_hat;
      H.block<2, 3>(2 * k, o) = proj->d_theta;
      H.block<2, 3>(2 * k, o + 3) = proj->d_position;
      Jf.middleRows<2>(2 * k) = proj->d_point;
    }
    if (!ok) {
      ++stats.skipped;
      continue;
    }

    MatX R = var_map * Jf * Jf.transpose();
    R.diagonal().array() += var_loop;
    const Eigen::LLT<MatX> chol(R);
    ResidualBlock block;
    block.r = chol.matrixL().solve(r);
    block.H = chol.matrixL().solve(H);
    block.noise_sigma = 1.0;
    if (chi2_gate(block, state.cov, cfg.chi2_confidence)) {
      accepted.push_back(std::move(block));
      ++stats.accepted;
    } else {
      ++stats.gated;
    }
  }

  if (accepted.empty()) {
    if (stats.gated > 0) {
      throw VioError(ErrorCode::kAllGated, "all " + std::to_string(stats.gated) + " loop matches failed the gate");
    }
    return stats;
  }
  ekf_update(state, compress(accepted, cfg.max_stacked_rows));
  return stats;
}

}  // namespace plvio
