#include "plvio/propagation.hpp"

#include <string>

namespace plvio {

void NoiseParams::validate() const {
  if (!(gyro_noise_density > 0.0) || !(accel_noise_density > 0.0) || !(gyro_bias_randomwalk > 0.0) ||
      !(accel_bias_randomwalk > 0.0)) {
    throw VioError(ErrorCode::kInvalidArgument, "IMU noise densities must be strictly positive");
  }
}

namespace {

struct Derivative {
  Vec4 q_dot;
  Vec3 v_dot;
  Vec3 p_dot;
  MatX phi_dot;
};

Mat3 rotation_of(const Vec4& xyzw) {
  Eigen::Quaterniond q(xyzw.w(), xyzw.x(), xyzw.y(), xyzw.z());
  q.normalize();
  return q.toRotationMatrix();
}

Derivative evaluate(const Vec4& q_BG, const Vec3& v, const MatX& phi, const ImuState& state,
                    const Vec3& gravity, const ImuInput& in) {
  const Vec3 w = in.gyro - state.bg;
  const Vec3 a = in.accel - state.ba;
  const Mat3 R_BG = rotation_of(q_BG);

  Derivative d;
  d.q_dot = 0.5 * omega_matrix(w) * q_BG;
  d.v_dot = R_BG * a + gravity;
  d.p_dot = v;

  // F * phi using the block structure of F.
  const long n = phi.rows();
  d.phi_dot = MatX::Zero(n, n);
  d.phi_dot.middleRows<3>(idx::kTheta) =
      -skew(w) * phi.middleRows<3>(idx::kTheta) + phi.middleRows<3>(idx::kBg);
  d.phi_dot.middleRows<3>(idx::kV) =
      R_BG * skew(a) * phi.middleRows<3>(idx::kTheta) - R_BG * phi.middleRows<3>(idx::kBa);
  d.phi_dot.middleRows<3>(idx::kP) = phi.middleRows<3>(idx::kV);
  return d;
}

}  // namespace

ImuStep integrate_imu(const ImuState& state, const Vec3& gravity, bool estimate_extrinsics,
                      const ImuInputFn& input, double dt) {
  const int n = estimate_extrinsics ? idx::kImuDimWithExtrinsics : idx::kImuDim;
  const Vec4 q0 = state.q_GB.inverse().coeffs();
  const Vec3 v0 = state.v_GB;
  const Vec3 p0 = state.p_GB;
  const MatX phi0 = MatX::Identity(n, n);

  const ImuInput in0 = input(0.0);
  const ImuInput in_mid = input(0.5 * dt);
  const ImuInput in1 = input(dt);

  const Derivative k1 = evaluate(q0, v0, phi0, state, gravity, in0);
  const Derivative k2 = evaluate(q0 + 0.5 * dt * k1.q_dot, v0 + 0.5 * dt * k1.v_dot,
                                 phi0 + 0.5 * dt * k1.phi_dot, state, gravity, in_mid);
  const Derivative k3 = evaluate(q0 + 0.5 * dt * k2.q_dot, v0 + 0.5 * dt * k2.v_dot,
                                 phi0 + 0.5 * dt * k2.phi_dot, state, gravity, in_mid);
  const Derivative k4 = evaluate(q0 + dt * k3.q_dot, v0 + dt * k3.v_dot, phi0 + dt * k3.phi_dot, state,
                                 gravity, in1);

  const double s = dt / 6.0;
  ImuStep step;
  step.state = state;
  const Vec4 q1 = q0 + s * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot);
  step.state.q_GB = UnitQuaternion::from_coeffs(q1).inverse();
  step.state.v_GB = v0 + s * (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot);
  step.state.p_GB = p0 + s * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot);
  step.phi = phi0 + s * (k1.phi_dot + 2.0 * k2.phi_dot + 2.0 * k3.phi_dot + k4.phi_dot);
  return step;
}

MatX state_transition(const ImuState& state, const ImuSample& sample, double dt, const Vec3& gravity,
                      bool estimate_extrinsics) {
  if (!(dt > 0.0)) throw VioError(ErrorCode::kNonMonotonicTime, "dt must be positive");
  const ImuInput held{sample.gyro, sample.accel};
  return integrate_imu(state, gravity, estimate_extrinsics, [&](double) { return held; }, dt).phi;
}

MatX discrete_noise(const MatX& phi, double dt, const NoiseParams& noise) {
  const long n = phi.rows();
  VecX qc = VecX::Zero(n);
  qc.segment<3>(idx::kTheta).setConstant(noise.gyro_noise_density * noise.gyro_noise_density);
  qc.segment<3>(idx::kBg).setConstant(noise.gyro_bias_randomwalk * noise.gyro_bias_randomwalk);
  qc.segment<3>(idx::kV).setConstant(noise.accel_noise_density * noise.accel_noise_density);
  qc.segment<3>(idx::kBa).setConstant(noise.accel_bias_randomwalk * noise.accel_bias_randomwalk);
  // G Qc G^T is rotation invariant here because the accelerometer noise is
  // isotropic, so the trapezoid endpoints differ only through phi.
  MatX q = phi * qc.asDiagonal() * phi.transpose();
  q.diagonal() += qc;
  q *= 0.5 * dt;
  symmetrize(q);
  return q;
}

namespace {

void propagate_with(FilterState& state, const ImuInputFn& input, double dt, const NoiseParams& noise,
                    bool oc_fix) {
  if (!(dt > 0.0)) {
    throw VioError(ErrorCode::kNonMonotonicTime, "propagation step must be positive, got " + std::to_string(dt));
  }
  ImuStep step = integrate_imu(state.imu, state.gravity, state.estimate_extrinsics, input, dt);
  if (oc_fix) oc_fix_transition(step.phi, state.anchor, step.state, state.gravity, dt);
  state.anchor = ImuAnchor{step.state.q_GB, step.state.v_GB, step.state.p_GB};

  const int n = state.imu_dim();
  const MatX q = discrete_noise(step.phi, dt, noise);
  const MatX p_ii = step.phi * state.cov.topLeftCorner(n, n) * step.phi.transpose() + q;
  state.cov.topLeftCorner(n, n) = p_ii;
  const int m = state.dim() - n;
  if (m > 0) {
    const MatX p_ic = step.phi * state.cov.topRightCorner(n, m);
    state.cov.topRightCorner(n, m) = p_ic;
    state.cov.bottomLeftCorner(m, n) = p_ic.transpose();
  }
  symmetrize(state.cov);
  state.imu = step.state;
}

}  // namespace

void propagate(FilterState& state, const ImuSample& sample, double dt, const NoiseParams& noise, bool oc_fix) {
  const ImuInput held{sample.gyro, sample.accel};
  propagate_with(state, [&](double) { return held; }, dt, noise, oc_fix);
  state.timestamp_ns += from_seconds(dt);
}

void propagate(FilterState& state, const ImuSample& begin, const ImuSample& end, const NoiseParams& noise,
               bool oc_fix) {
  if (end.timestamp_ns <= begin.timestamp_ns) {
    throw VioError(ErrorCode::kNonMonotonicTime,
                   "IMU samples out of order at t=" + std::to_string(end.timestamp_ns));
  }
  state.timestamp_ns = begin.timestamp_ns;
  const ImuSample nodes[2] = {begin, end};
  propagate(state, nodes, end.timestamp_ns, noise, oc_fix);
}

namespace {

// `x` in seconds relative to the last node.
ImuInput lagrange(std::span<const ImuSample> nodes, double x) {
  if (nodes.empty() || nodes.size() > 4) {
    throw VioError(ErrorCode::kInvalidArgument, "interpolation needs 1 to 4 samples");
  }
  const Timestamp t0 = nodes.back().timestamp_ns;
  ImuInput out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double w = 1.0;
    const double xi = to_seconds(nodes[i].timestamp_ns - t0);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (j == i) continue;
      const double xj = to_seconds(nodes[j].timestamp_ns - t0);
      if (xi == xj) throw VioError(ErrorCode::kNonMonotonicTime, "duplicate IMU timestamp");
      w *= (x - xj) / (xi - xj);
    }
    out.gyro += w * nodes[i].gyro;
    out.accel += w * nodes[i].accel;
  }
  return out;
}

}  // namespace

ImuInput interpolate_readings(std::span<const ImuSample> nodes, Timestamp t) {
  return lagrange(nodes, nodes.empty() ? 0.0 : to_seconds(t - nodes.back().timestamp_ns));
}

void propagate(FilterState& state, std::span<const ImuSample> nodes, Timestamp t_end, const NoiseParams& noise,
               bool oc_fix) {
  if (t_end <= state.timestamp_ns) {
    throw VioError(ErrorCode::kNonMonotonicTime, "propagation target " + std::to_string(t_end) +
                                                     " does not follow " + std::to_string(state.timestamp_ns));
  }
  const double dt = to_seconds(t_end - state.timestamp_ns);
  const double offset = nodes.empty() ? 0.0 : to_seconds(state.timestamp_ns - nodes.back().timestamp_ns);
  propagate_with(
      state, [&](double tau) { return lagrange(nodes, offset + tau); }, dt, noise,
      oc_fix);
  state.timestamp_ns = t_end;
}

MatX imu_unobservable_directions(const ImuAnchor& anchor, const Vec3& gravity, int imu_dim) {
  MatX N = MatX::Zero(imu_dim, 4);
  N.block<3, 1>(idx::kTheta, 0) = anchor.q_GB.rotate(gravity);
  N.block<3, 1>(idx::kV, 0) = skew(anchor.v_GB) * gravity;
  N.block<3, 1>(idx::kP, 0) = skew(anchor.p_GB) * gravity;
  N.block<3, 3>(idx::kP, 1) = Mat3::Identity();
  return N;
}

MatX unobservable_directions(const FilterState& state) {
  MatX N = MatX::Zero(state.dim(), 4);
  N.topRows(state.imu_dim()) = imu_unobservable_directions(state.anchor, state.gravity, state.imu_dim());
  for (std::size_t c = 0; c < state.clones.size(); ++c) {
    const int o = state.clone_offset(c);
    const Pose& fe = state.clones[c].first_estimate;
    N.block<3, 1>(o, 0) = fe.rotation.rotate(state.gravity);
    N.block<3, 1>(o + 3, 0) = skew(fe.position) * state.gravity;
    N.block<3, 3>(o + 3, 1) = Mat3::Identity();
  }
  return N;
}

std::pair<MatX, MatX> oc_fix(const MatX& phi, const MatX& H, const MatX& N_k, const MatX& N_k1) {
  const MatX gram_k = N_k.transpose() * N_k;
  const MatX gram_k1 = N_k1.transpose() * N_k1;
  const MatX pinv_k = gram_k.ldlt().solve(N_k.transpose());     // (N^T N)^-1 N^T
  const MatX pinv_k1 = gram_k1.ldlt().solve(N_k1.transpose());
  MatX phi_star = phi - (phi * N_k - N_k1) * pinv_k;
  MatX h_star = H - (H * N_k1) * pinv_k1;
  return {std::move(phi_star), std::move(h_star)};
}

void oc_fix_transition(MatX& phi, const ImuAnchor& prev, const ImuState& next, const Vec3& gravity, double dt) {
  const Mat3 R_prev = prev.q_GB.matrix();
  const Mat3 R_next = next.q_GB.matrix();
  phi.block<3, 3>(idx::kTheta, idx::kTheta) = R_next * R_prev.transpose();

  const Vec3 u = R_prev * gravity;
  const Eigen::RowVector3d s = u.transpose() / u.squaredNorm();

  const Mat3 A1 = phi.block<3, 3>(idx::kV, idx::kTheta);
  const Vec3 w1 = skew(next.v_GB - prev.v_GB) * gravity;
  phi.block<3, 3>(idx::kV, idx::kTheta) = A1 - (A1 * u - w1) * s;

  const Mat3 A2 = phi.block<3, 3>(idx::kP, idx::kTheta);
  const Vec3 w2 = skew(next.p_GB - prev.p_GB - dt * prev.v_GB) * gravity;
  phi.block<3, 3>(idx::kP, idx::kTheta) = A2 - (A2 * u - w2) * s;
}

}  // namespace plvio
