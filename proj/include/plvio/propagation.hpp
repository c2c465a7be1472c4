#pragma once

// IMU propagation of the filter mean and covariance.
//
// The mean follows the continuous kinematics
//   q_BG_dot = 0.5 Omega(w_hat) q_BG,  v_dot = R_BG a_hat + g,  p_dot = v
// with constant biases, integrated by classical RK4. The error-state
// transition matrix is integrated alongside the mean with the same RK4
// stages, and the discrete process noise uses trapezoidal integration.

#include "plvio/state.hpp"

#include <functional>
#include <span>
#include <utility>

namespace plvio {

struct ImuSample {
  Timestamp timestamp_ns = 0;
  Vec3 gyro = Vec3::Zero();   // rad/s, raw
  Vec3 accel = Vec3::Zero();  // m/s^2, raw specific force
};

// Continuous-time noise densities.
struct NoiseParams {
  double gyro_noise_density = 1.7e-4;       // rad/s/sqrt(Hz)
  double accel_noise_density = 2.0e-3;      // m/s^2/sqrt(Hz)
  double gyro_bias_randomwalk = 1.9393e-5;  // rad/s^2/sqrt(Hz)
  double accel_bias_randomwalk = 3.0e-3;    // m/s^3/sqrt(Hz)

  void validate() const;
};

struct ImuInput {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

// Raw IMU reading as a function of the time offset tau in [0, dt].
using ImuInputFn = std::function<ImuInput(double tau)>;

struct ImuStep {
  ImuState state;
  MatX phi;  // imu_dim x imu_dim
};

// One RK4 step of mean and transition matrix.
ImuStep integrate_imu(const ImuState& state, const Vec3& gravity, bool estimate_extrinsics,
                      const ImuInputFn& input, double dt);

// Transition matrix for a step with the sample held constant.
MatX state_transition(const ImuState& state, const ImuSample& sample, double dt,
                      const Vec3& gravity = Vec3(0.0, 0.0, -9.81), bool estimate_extrinsics = false);

// Discrete process noise for a step with transition `phi`.
MatX discrete_noise(const MatX& phi, double dt, const NoiseParams& noise);

// Propagates with the sample held constant over dt seconds.
void propagate(FilterState& state, const ImuSample& sample, double dt, const NoiseParams& noise,
               bool oc_fix = false);

// Propagates from begin.timestamp_ns to end.timestamp_ns with the readings
// linearly interpolated in between.
void propagate(FilterState& state, const ImuSample& begin, const ImuSample& end, const NoiseParams& noise,
               bool oc_fix = false);

// Readings at `t` from the Lagrange polynomial through 1 to 4 samples with
// distinct timestamps (constant, linear, quadratic or cubic).
ImuInput interpolate_readings(std::span<const ImuSample> nodes, Timestamp t);

// Propagates from the filter time to `t_end` in one step, with readings from
// interpolate_readings(nodes). Passing the last four samples up to the end of
// the interval gives a causal cubic input model.
void propagate(FilterState& state, std::span<const ImuSample> nodes, Timestamp t_end, const NoiseParams& noise,
               bool oc_fix = false);

// ---- observability constraint -------------------------------------------

// Unobservable directions of the IMU block (imu_dim x 4): global yaw about
// gravity in column 0, global translation in columns 1..3.
MatX imu_unobservable_directions(const ImuAnchor& anchor, const Vec3& gravity, int imu_dim);

// Unobservable directions of the full error state using the IMU anchor and
// the clones' first estimates (dim x 4).
MatX unobservable_directions(const FilterState& state);

// Generic minimum-norm correction: returns (phi*, H*) with phi* N_k = N_k1
// and H* N_k1 = 0, each the smallest Frobenius-norm change of its input.
std::pair<MatX, MatX> oc_fix(const MatX& phi, const MatX& H, const MatX& N_k, const MatX& N_k1);

// Structured correction of the IMU transition matrix for a step from the
// anchor `prev` to the propagated state `next`. Only the orientation column
// blocks of the orientation, velocity and position rows change.
void oc_fix_transition(MatX& phi, const ImuAnchor& prev, const ImuState& next, const Vec3& gravity, double dt);

}  // namespace plvio
