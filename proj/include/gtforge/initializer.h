#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gtforge/preintegration.h"
#include "gtforge/spline.h"

// Prior-free coarse state recovery: correlation-based time alignment,
// robust linear extrinsic rotation, linear velocity/gravity/extrinsic
// translation solve, all inside RANSAC.

namespace gtforge {

struct InitializerError : std::runtime_error {
  explicit InitializerError(const std::string& what) : std::runtime_error(what) {}
};
struct NoMotionError : InitializerError {
  explicit NoMotionError(const std::string& what) : InitializerError(what) {}
};
struct OffsetAtSearchBoundaryError : InitializerError {
  explicit OffsetAtSearchBoundaryError(const std::string& what) : InitializerError(what) {}
};
struct DegenerateAxesError : InitializerError {
  explicit DegenerateAxesError(const std::string& what) : InitializerError(what) {}
};
struct IllConditionedError : InitializerError {
  explicit IllConditionedError(const std::string& what) : InitializerError(what) {}
};
struct ConsensusFailureError : InitializerError {
  explicit ConsensusFailureError(const std::string& what) : InitializerError(what) {}
};

struct InitConfig {
  double mu = 5.0;                 // kernel amplification factor
  double pair_stride = 0.2;        // s between constraint-pair epochs
  int ransac_iters = 100;
  double ransac_rotation_inlier_tol = 0.02;     // rad, |theta_M - theta_I|
  double ransac_translation_inlier_tol = 0.01;  // m, screw-translation mismatch
  double correlation_rate = 100.0;  // Hz
  double max_offset_search = 10.0;  // s, +/- search range
  double min_pair_angle = 1e-3;     // rad, pairs below are skipped
  std::uint64_t rng_seed = 42;
  ImuNoiseParams imu_noise;
};

struct InitResult {
  Quat q_MI = Quat::Identity();
  Vec3 p_MI = Vec3::Zero();
  double t_MI0 = 0.0;              // constant coarse offset, s
  Vec3 g_W = Vec3::Zero();         // m/s^2
  std::vector<double> epoch_times; // IMU clock, one per pair endpoint
  std::vector<Vec3> velocities;    // per epoch, m/s
  std::vector<bool> inlier_mask;   // per constraint pair
  bool gravity_low_confidence = false;  // |g| off 9.81 by more than 5%
};

// One screw-motion constraint pair between epochs i and j.
struct ConstraintPair {
  Quat q_mocap_rel;       // relative MoCap rotation M_i -> M_j
  Quat q_imu_rel;         // preintegrated IMU rotation I_i -> I_j
  double theta_mocap = 0.0;
  double theta_imu = 0.0;
  Preintegration preint;  // over [t_i, t_j]
  Pose T_WM_i;            // interpolated MoCap poses at the pair epochs
  Pose T_WM_j;
  double t_i = 0.0;
  double t_j = 0.0;
  int epoch_i = 0;        // indices into the shared epoch/velocity chain
  int epoch_j = 0;
};

// Constant coarse offset t_MI0 (MoCap timestamp minus IMU timestamp of the
// same event) via normalized cross-correlation of angular-speed signals,
// refined by parabolic interpolation of the peak.
double coarse_time_align(std::span<const ImuSample> imu,
                         std::span<const MoCapSample> mocap,
                         const InitConfig& cfg);

// Screw-consistency weight K = exp(mu (1 - max/min)) in (0, 1].
double kernel_weight(double theta_a, double theta_b, double mu);

// Kernel-weighted SVD solve of the stacked rotation constraints.
Quat solve_extrinsic_rotation(std::span<const ConstraintPair> pairs,
                              const InitConfig& cfg);

struct LinearInitResult {
  std::vector<Vec3> velocities;  // one per epoch in the pair chain
  Vec3 g_W = Vec3::Zero();
  Vec3 p_MI = Vec3::Zero();
};

// Stacked linear solve for velocities, gravity, and extrinsic translation,
// weighted by the translational screw kernel.
LinearInitResult solve_linear_init(std::span<const ConstraintPair> pairs,
                                   int n_epochs, const Quat& q_MI,
                                   const InitConfig& cfg);

// Full RANSAC initialization pipeline.
InitResult ransac_initialize(std::span<const ImuSample> imu,
                             std::span<const MoCapSample> mocap,
                             const InitConfig& cfg);

// Roll/pitch (intrinsic X then Y, yaw fixed 0) aligning (0,0,9.81) with the
// direction of g_W.
void gravity_to_rollpitch(const Vec3& g_W, double* roll, double* pitch);

// Constraint-pair construction at a fixed stride, shared with tests.
std::vector<ConstraintPair> build_constraint_pairs(
    std::span<const ImuSample> imu, std::span<const MoCapSample> mocap,
    double t_MI0, const InitConfig& cfg);

}  // namespace gtforge
