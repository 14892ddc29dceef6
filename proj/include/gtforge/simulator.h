#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gtforge/preintegration.h"
#include "gtforge/spline.h"
#include "gtforge/trajectory.h"

// Physically consistent IMU and MoCap stream generation from an analytic
// or loaded reference trajectory, with configurable noise, biases,
// extrinsics, time offset, clock drift, and outliers.

namespace gtforge {

struct MoCapNoiseParams {
  double trans_noise_density = 4.3e-5;  // m/sqrt(Hz)
  double rot_noise_density = 1.7e-4;    // rad/sqrt(Hz)
};

struct SimConfig {
  double duration = 60.0;      // s
  double imu_rate = 500.0;     // Hz
  double mocap_rate = 100.0;   // Hz

  ImuNoiseParams imu_noise;
  MoCapNoiseParams mocap_noise;
  double noise_scale = 1.0;        // global multiplier on all noise families
  double imu_noise_scale = 1.0;    // per-family multipliers for sweeps
  double mocap_noise_scale = 1.0;

  Pose true_extrinsics;            // T_MI
  double true_offset0 = 0.0;       // s, constant part of the MoCap-IMU offset
  double clock_drift = 0.002;      // s per minute of offset drift
  double gravity_roll = 0.0;       // rad
  double gravity_pitch = 0.0;      // rad
  double outlier_fraction = 0.0;
  std::uint64_t rng_seed = 0;

  // Analytic base trajectory: sinusoidal excitation on all 6 DoF.
  double trans_amplitude = 0.5;    // m
  double rot_amplitude = 0.5236;   // rad (30 deg)
  // Optional motion/stillness alternation; 0 = continuous excitation.
  double motion_period = 0.0;      // s of motion per cycle
  double still_period = 0.0;       // s of stillness per cycle
  double envelope_transition = 1.0;  // s, C2 ramp duration

  // Optional TUM-format file providing the base trajectory instead.
  std::string base_trajectory_tum;
};

// Pose/velocity/acceleration and body rates at one time.
struct TrajectoryKinematics {
  Pose pose;            // T_WI
  Vec3 velocity = Vec3::Zero();      // m/s, frame W
  Vec3 acceleration = Vec3::Zero();  // m/s^2, frame W
  Vec3 omega_body = Vec3::Zero();    // rad/s, frame I
};

class ReferenceTrajectory {
 public:
  virtual ~ReferenceTrajectory() = default;
  virtual TrajectoryKinematics at(double t) const = 0;
  virtual double t_begin() const = 0;
  virtual double t_end() const = 0;
};

struct SimTruth {
  Trajectory trajectory;            // T_WI at IMU epochs
  std::vector<Vec3> velocities;     // at IMU epochs
  std::vector<Vec3> bias_a;         // at IMU epochs
  std::vector<Vec3> bias_g;
  double offset0 = 0.0;             // true offset function t_MI(t) = offset0 +
  double drift_rate = 0.0;          //   drift_rate * t   (drift_rate is s/s)
  double offset_at(double t) const { return offset0 + drift_rate * t; }
};

struct SimOutput {
  std::vector<ImuSample> imu;
  std::vector<MoCapSample> mocap;
  SimTruth truth;
};

struct SimulatorError : std::runtime_error {
  explicit SimulatorError(const std::string& what) : std::runtime_error(what) {}
};
struct FileParseError : SimulatorError {
  explicit FileParseError(const std::string& what) : SimulatorError(what) {}
};

// Gravity in the MoCap world frame for given roll/pitch (yaw fixed to 0):
// g_W = Ry(pitch) Rx(roll) (0, 0, 9.81). Static level devices read +9.81 up.
Vec3 gravity_world(double roll, double pitch);

std::shared_ptr<ReferenceTrajectory> gen_trajectory(const SimConfig& cfg);

// IMU stream plus the true bias walks, on the IMU clock.
struct ImuSynthesis {
  std::vector<ImuSample> samples;
  std::vector<Vec3> bias_a;
  std::vector<Vec3> bias_g;
};
ImuSynthesis synth_imu(const ReferenceTrajectory& traj, const SimConfig& cfg);

std::vector<MoCapSample> synth_mocap(const ReferenceTrajectory& traj,
                                     const SimConfig& cfg);

SimOutput simulate(const SimConfig& cfg);

}  // namespace gtforge
