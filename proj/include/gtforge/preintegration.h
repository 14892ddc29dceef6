#pragma once

#include <span>
#include <vector>

#include "gtforge/geometry.h"

// Discrete-time IMU preintegration between two epochs with 9-state
// covariance propagation (delta-alpha, delta-beta, delta-theta ordering)
// and first-order bias Jacobians. Bias random walk is handled by separate
// residuals in the estimator, not inside the preintegration covariance.

namespace gtforge {

struct ImuSample {
  double t = 0.0;  // seconds, IMU clock
  Vec3 accel = Vec3::Zero();  // specific force, m/s^2, frame I
  Vec3 gyro = Vec3::Zero();   // rad/s, frame I
};

struct ImuNoiseParams {
  double accel_noise_density = 5.2e-3;  // m/s^2/sqrt(Hz)
  double accel_random_walk = 1.0e-3;    // m/s^3/sqrt(Hz)
  double gyro_noise_density = 2.1e-4;   // rad/s/sqrt(Hz)
  double gyro_random_walk = 1.3e-5;     // rad/s^2/sqrt(Hz)
};

struct PreintegrationError : std::runtime_error {
  explicit PreintegrationError(const std::string& what) : std::runtime_error(what) {}
};

// Sample stream does not span the requested interval within one nominal period.
struct InsufficientCoverageError : PreintegrationError {
  explicit InsufficientCoverageError(const std::string& what) : PreintegrationError(what) {}
};

// Bias delta exceeds the first-order correction threshold; re-preintegrate.
struct BiasDeltaTooLargeError : PreintegrationError {
  explicit BiasDeltaTooLargeError(const std::string& what) : PreintegrationError(what) {}
};

// First-order bias correction validity limits.
inline constexpr double kMaxAccelBiasDelta = 0.1;   // m/s^2
inline constexpr double kMaxGyroBiasDelta = 0.01;   // rad/s

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat9x6 = Eigen::Matrix<double, 9, 6>;

// Relative motion summary over [t_i, t_j] in frame I_i.
struct Preintegration {
  Vec3 alpha = Vec3::Zero();  // translation preintegral, m
  Vec3 beta = Vec3::Zero();   // velocity preintegral, m/s
  Quat dq = Quat::Identity(); // rotation preintegral q_IiIj
  double dt = 0.0;
  Mat9 covariance = Mat9::Zero();       // over (d_alpha, d_beta, d_theta)
  Mat9x6 bias_jacobians = Mat9x6::Zero();  // d(alpha,beta,theta)/d(b_a,b_g)
  Vec3 lin_bias_a = Vec3::Zero();
  Vec3 lin_bias_g = Vec3::Zero();
};

// Midpoint-rule preintegration of bias-corrected measurements over
// [t_i, t_j]; boundary samples come from linear interpolation of
// neighbors. Covariance propagated step-by-step from the noise densities.
Preintegration preintegrate(std::span<const ImuSample> samples, double t_i,
                            double t_j, const Vec3& bias_a, const Vec3& bias_g,
                            const ImuNoiseParams& noise);

// First-order update of a preintegration to new bias linearization points.
// Throws BiasDeltaTooLargeError past the re-linearization thresholds.
Preintegration correct_for_bias(const Preintegration& p, const Vec3& new_bias_a,
                                const Vec3& new_bias_g);

// One midpoint propagation step; exposed for testing the noise model.
// Inputs are the bias-corrected endpoint measurements of the step.
struct PreintStepInputs {
  Quat dq_begin;       // accumulated rotation at step start
  Quat dq_end;         // accumulated rotation at step end
  Vec3 accel_begin;    // bias-corrected
  Vec3 accel_end;
  Vec3 gyro_mid;       // bias-corrected midpoint angular rate
  double dt = 0.0;
  double rate = 0.0;   // nominal sample rate, Hz
};

Mat9 step_covariance(const Mat9& state_cov, const PreintStepInputs& step,
                     const ImuNoiseParams& noise);

}  // namespace gtforge
