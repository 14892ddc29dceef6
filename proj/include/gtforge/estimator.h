#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gtforge/initializer.h"
#include "gtforge/preintegration.h"
#include "gtforge/spline.h"
#include "gtforge/trajectory.h"

// Batch MLE over inertial states, spatiotemporal extrinsics, and gravity
// alignment, with MoCap, IMU preintegration, and bias random-walk factors
// solved by a self-contained sparse Levenberg-Marquardt optimizer.

namespace gtforge {

struct EstimatorError : std::runtime_error {
  explicit EstimatorError(const std::string& what) : std::runtime_error(what) {}
};
struct EmptyOverlapError : EstimatorError {
  explicit EmptyOverlapError(const std::string& what) : EstimatorError(what) {}
};
struct NumericalFailureError : EstimatorError {
  explicit NumericalFailureError(const std::string& what) : EstimatorError(what) {}
};

struct InertialState {
  double t = 0.0;              // s, IMU clock
  Vec3 p_WI = Vec3::Zero();    // m
  Vec3 v_WI = Vec3::Zero();    // m/s
  Quat q_WI = Quat::Identity();
  Vec3 b_a = Vec3::Zero();     // m/s^2
  Vec3 b_g = Vec3::Zero();     // rad/s
};

struct OffsetKnot {
  double t_knot = 0.0;  // s, IMU clock
  double t_MI = 0.0;    // s, MoCap timestamp minus IMU timestamp
};

struct ExtrinsicState {
  Vec3 p_MI = Vec3::Zero();
  Quat q_MI = Quat::Identity();
  std::vector<OffsetKnot> offset_knots;  // strictly increasing t_knot

  // Linear interpolation of the knots, clamped outside the knot span.
  double offset_at(double t) const;
  // Knot pair (r, s) and normalized weight lambda for time t.
  void knot_weights(double t, int* r, int* s, double* lambda) const;
};

struct GravityAlign {
  double roll = 0.0;   // rad
  double pitch = 0.0;  // rad
  Vec3 g_W() const;    // R_y(pitch) R_x(roll) (0, 0, 9.81)
  Eigen::Matrix<double, 3, 2> g_jacobian() const;  // d g_W / d (roll, pitch)
};

struct TimeInterval {
  double begin = 0.0;
  double end = 0.0;
  bool contains(double t) const { return t >= begin && t < end; }
};

struct EstimatorConfig {
  double state_rate = 100.0;          // Hz
  double offset_knot_spacing = 30.0;  // s
  int min_offset_knots = 2;           // set 1 for a constant offset
  double degeneracy_window = 5.0;     // s
  double degeneracy_angle = 0.17453;  // rad (10 deg)
  bool degeneracy_masking = true;
  double huber_delta = 3.0;           // whitened units, MoCap factors only
  int max_iterations = 50;
  double cost_decrease_tol = 1e-9;    // relative
  double gradient_tol = 1e-10;        // infinity norm
  ImuNoiseParams imu_noise;
  double mocap_trans_noise_density = 4.3e-5;  // m/sqrt(Hz)
  double mocap_rot_noise_density = 1.7e-4;    // rad/sqrt(Hz)
  double mocap_rate = 100.0;                  // Hz, for the factor covariance
};

struct FactorGraphProblem {
  std::vector<InertialState> states;
  ExtrinsicState extrinsics;
  GravityAlign gravity;
  PoseSpline spline;                       // MoCap poses on the MoCap clock
  std::vector<Preintegration> preintegrations;  // states.size() - 1
  Eigen::Matrix<double, 6, 6> mocap_cov = Eigen::Matrix<double, 6, 6>::Identity();
  std::vector<TimeInterval> degenerate_windows;
  EstimatorConfig cfg;
  std::vector<ImuSample> imu;              // kept for re-preintegration
  int mocap_factors_dropped = 0;           // out-of-domain state epochs
};

struct SolveReport {
  std::vector<double> iteration_costs;  // cost after each accepted iteration
  double final_cost = 0.0;
  double imu_rms = 0.0;    // whitened residual RMS per factor family
  double mocap_rms = 0.0;
  double bias_rms = 0.0;
  int iterations = 0;
  int degenerate_window_count = 0;
  bool converged = false;
  std::string termination;  // "cost", "gradient", "max_iterations"
};

// Residuals. The preintegration is bias-corrected internally from the
// state biases at epoch k before evaluation.
Eigen::Matrix<double, 9, 1> imu_residual(const InertialState& sk,
                                         const InertialState& sk1,
                                         const GravityAlign& gravity,
                                         const Preintegration& preint);

Eigen::Matrix<double, 6, 1> mocap_residual(const InertialState& sk,
                                           const ExtrinsicState& ext,
                                           const PoseSpline& spline);

// Whitened consecutive bias difference; per-axis sigma = density sqrt(dt).
Eigen::Matrix<double, 6, 1> bias_residuals(const InertialState& sk,
                                           const InertialState& sk1,
                                           const ImuNoiseParams& noise);

// Analytic Jacobian blocks, all with respect to right-multiplicative
// local perturbations (dp, dv, dtheta, db_a, db_g ordering for states).
struct ImuFactorJacobians {
  Eigen::Matrix<double, 9, 15> d_state_k;
  Eigen::Matrix<double, 9, 15> d_state_k1;
  Eigen::Matrix<double, 9, 2> d_gravity;  // (roll, pitch)
};
ImuFactorJacobians imu_jacobians(const InertialState& sk,
                                 const InertialState& sk1,
                                 const GravityAlign& gravity,
                                 const Preintegration& preint);

struct MoCapFactorJacobians {
  Eigen::Matrix<double, 6, 6> d_pose;      // (dp, dtheta) of state k
  Eigen::Matrix<double, 6, 3> d_p_MI;
  Eigen::Matrix<double, 6, 3> d_theta_MI;
  Eigen::Matrix<double, 6, 2> d_offset;    // the two active knots (r, s)
  int knot_r = 0;
  int knot_s = 0;
};
MoCapFactorJacobians mocap_jacobians(const InertialState& sk,
                                     const ExtrinsicState& ext,
                                     const PoseSpline& spline);

// The two-column offset-knot block of the MoCap Jacobian (chain rule
// through the spline velocity and the interpolation weights).
Eigen::Matrix<double, 6, 2> time_offset_jacobian(const InertialState& sk,
                                                 const ExtrinsicState& ext,
                                                 const PoseSpline& spline,
                                                 int* knot_r = nullptr,
                                                 int* knot_s = nullptr);

// Non-overlapping windows of length w flagged when the max pairwise
// rotation angle inside falls below varpi. Windows are subsampled to at
// most 100 poses before the pairwise maximum.
std::vector<TimeInterval> detect_degenerate_windows(
    std::span<const MoCapSample> mocap, double w, double varpi);

FactorGraphProblem build_problem(std::span<const ImuSample> imu,
                                 std::span<const MoCapSample> mocap,
                                 const InitResult& init,
                                 const EstimatorConfig& cfg);

// Levenberg-Marquardt over the whole problem; updates states, extrinsics,
// and gravity in place.
SolveReport optimize(FactorGraphProblem& problem);

// Constant-twist resampling of the converged states to a uniform rate.
Trajectory extract_trajectory(std::span<const InertialState> states, double rate);

// Finite-difference validation of every analytic Jacobian block over
// random configurations; returns max relative error per block name.
struct JacobianCheck {
  std::string block;
  double max_rel_error = 0.0;
};
std::vector<JacobianCheck> check_jacobians(int n_trials, std::uint64_t seed);

}  // namespace gtforge
