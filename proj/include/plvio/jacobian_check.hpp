#pragma once

// Central finite-difference verification of the analytic Jacobians over
// randomly drawn configurations: point and line measurement Jacobians
// (state and feature blocks), the clone augmentation Jacobian and the IMU
// error-state transition matrix.

#include <cstdint>
#include <string>
#include <vector>

namespace plvio {

struct JacobianCheckResult {
  std::string name;
  int configs = 0;
  // max over configurations of ||J_analytic - J_fd||_F / ||J_fd||_F
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

JacobianCheckResult check_point_state_jacobian(int configs, std::uint64_t seed);
JacobianCheckResult check_point_feature_jacobian(int configs, std::uint64_t seed);
JacobianCheckResult check_line_state_jacobian(int configs, std::uint64_t seed);
JacobianCheckResult check_line_feature_jacobian(int configs, std::uint64_t seed);
JacobianCheckResult check_clone_jacobian(int configs, std::uint64_t seed);
JacobianCheckResult check_transition_jacobian(int configs, std::uint64_t seed);

std::vector<JacobianCheckResult> run_jacobian_suite(int configs, std::uint64_t seed);

}  // namespace plvio
