#include "gtforge/preintegration.h"

#include <algorithm>
#include <cmath>

namespace gtforge {

namespace {

struct StepMatrices {
  Mat9 F = Mat9::Identity();
  Eigen::Matrix<double, 9, 6> V = Eigen::Matrix<double, 9, 6>::Zero();
  Eigen::Matrix<double, 9, 6> G = Eigen::Matrix<double, 9, 6>::Zero();
};

// Midpoint-rule transition, noise input, and bias input matrices for one
// step. State ordering (d_alpha, d_beta, d_theta); noise (n_a, n_w); bias
// (b_a, b_g).
StepMatrices step_matrices(const Mat3& R0, const Mat3& R1, const Vec3& a0,
                           const Vec3& a1, const Vec3& w_mid, double dt) {
  StepMatrices m;
  const Mat3 I = Mat3::Identity();
  const Mat3 a0x = skew(a0);
  const Mat3 a1x = skew(a1);
  const Mat3 dtheta_rot = so3_exp(-w_mid * dt).toRotationMatrix();
  const Mat3 Jr_step = so3_right_jacobian(w_mid * dt);
  const Mat3 acc_theta = R0 * a0x + R1 * a1x * dtheta_rot;

  m.F.block<3, 3>(0, 3) = I * dt;
  m.F.block<3, 3>(0, 6) = -0.25 * acc_theta * dt * dt;
  m.F.block<3, 3>(3, 6) = -0.5 * acc_theta * dt;
  m.F.block<3, 3>(6, 6) = dtheta_rot;

  m.V.block<3, 3>(0, 0) = 0.25 * (R0 + R1) * dt * dt;
  m.V.block<3, 3>(0, 3) = -0.25 * R1 * a1x * dt * dt * dt;
  m.V.block<3, 3>(3, 0) = 0.5 * (R0 + R1) * dt;
  m.V.block<3, 3>(3, 3) = -0.5 * R1 * a1x * dt * dt;
  m.V.block<3, 3>(6, 3) = Jr_step * dt;

  m.G.block<3, 3>(0, 0) = -0.25 * (R0 + R1) * dt * dt;
  m.G.block<3, 3>(0, 3) = 0.25 * R1 * a1x * Jr_step * dt * dt * dt;
  m.G.block<3, 3>(3, 0) = -0.5 * (R0 + R1) * dt;
  m.G.block<3, 3>(3, 3) = 0.5 * R1 * a1x * Jr_step * dt * dt;
  m.G.block<3, 3>(6, 3) = -Jr_step * dt;
  return m;
}

ImuSample interpolate_sample(const ImuSample& a, const ImuSample& b, double t) {
  if (b.t <= a.t) return a;
  const double s = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
  ImuSample out;
  out.t = t;
  out.accel = (1.0 - s) * a.accel + s * b.accel;
  out.gyro = (1.0 - s) * a.gyro + s * b.gyro;
  return out;
}

double nominal_period(std::span<const ImuSample> samples) {
  if (samples.size() < 2) return 0.0;
  std::vector<double> dts;
  dts.reserve(samples.size() - 1);
  for (size_t i = 1; i < samples.size(); ++i) {
    dts.push_back(samples[i].t - samples[i - 1].t);
  }
  auto mid = dts.begin() + dts.size() / 2;
  std::nth_element(dts.begin(), mid, dts.end());
  return *mid;
}

}  // namespace

Mat9 step_covariance(const Mat9& state_cov, const PreintStepInputs& step,
                     const ImuNoiseParams& noise) {
  const StepMatrices m =
      step_matrices(step.dq_begin.toRotationMatrix(), step.dq_end.toRotationMatrix(),
                    step.accel_begin, step.accel_end, step.gyro_mid, step.dt);
  Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
  const double var_a = noise.accel_noise_density * noise.accel_noise_density * step.rate;
  const double var_w = noise.gyro_noise_density * noise.gyro_noise_density * step.rate;
  Q.topLeftCorner<3, 3>() = var_a * Mat3::Identity();
  Q.bottomRightCorner<3, 3>() = var_w * Mat3::Identity();
  Mat9 out = m.F * state_cov * m.F.transpose() + m.V * Q * m.V.transpose();
  return 0.5 * (out + out.transpose());
}

Preintegration preintegrate(std::span<const ImuSample> samples, double t_i,
                            double t_j, const Vec3& bias_a, const Vec3& bias_g,
                            const ImuNoiseParams& noise) {
  if (t_j < t_i) {
    throw PreintegrationError("preintegrate: t_j < t_i");
  }
  Preintegration out;
  out.lin_bias_a = bias_a;
  out.lin_bias_g = bias_g;
  out.dt = t_j - t_i;
  if (t_j == t_i) return out;

  if (samples.size() < 2) {
    throw InsufficientCoverageError("preintegrate: fewer than 2 IMU samples");
  }
  const double period = nominal_period(samples);
  if (samples.front().t > t_i + period || samples.back().t < t_j - period) {
    throw InsufficientCoverageError("preintegrate: IMU stream does not span interval");
  }
  const double rate = period > 0 ? 1.0 / period : 0.0;

  // Integration nodes: interval endpoints plus interior sample times.
  std::vector<ImuSample> nodes;
  auto lower = std::lower_bound(
      samples.begin(), samples.end(), t_i,
      [](const ImuSample& s, double t) { return s.t <= t; });
  // lower: first sample with t > t_i.
  {
    const ImuSample& next = lower == samples.end() ? samples.back() : *lower;
    const ImuSample& prev = lower == samples.begin() ? samples.front() : *(lower - 1);
    nodes.push_back(interpolate_sample(prev, next, t_i));
  }
  for (auto it = lower; it != samples.end() && it->t < t_j; ++it) {
    if (it != samples.begin() && it->t <= (it - 1)->t) {
      throw PreintegrationError("preintegrate: non-increasing IMU timestamps");
    }
    nodes.push_back(*it);
  }
  {
    auto upper = std::lower_bound(
        samples.begin(), samples.end(), t_j,
        [](const ImuSample& s, double t) { return s.t < t; });
    const ImuSample& next = upper == samples.end() ? samples.back() : *upper;
    const ImuSample& prev = upper == samples.begin() ? samples.front() : *(upper - 1);
    nodes.push_back(interpolate_sample(prev, next, t_j));
  }

  Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
  Q.topLeftCorner<3, 3>() =
      noise.accel_noise_density * noise.accel_noise_density * rate * Mat3::Identity();
  Q.bottomRightCorner<3, 3>() =
      noise.gyro_noise_density * noise.gyro_noise_density * rate * Mat3::Identity();

  // Covariance and bias Jacobians propagate on the sample grid; the noise
  // model is tied to the sample rate and finer steps would not change it.
  {
    Quat dq = Quat::Identity();
    for (size_t k = 0; k + 1 < nodes.size(); ++k) {
      const double dt = nodes[k + 1].t - nodes[k].t;
      if (dt <= 0.0) continue;
      const Vec3 a0 = nodes[k].accel - bias_a;
      const Vec3 a1 = nodes[k + 1].accel - bias_a;
      const Vec3 w_mid = 0.5 * (nodes[k].gyro + nodes[k + 1].gyro) - bias_g;
      const Quat dq1 = (dq * so3_exp(w_mid * dt)).normalized();
      const StepMatrices m = step_matrices(dq.toRotationMatrix(),
                                           dq1.toRotationMatrix(), a0, a1,
                                           w_mid, dt);
      out.covariance =
          m.F * out.covariance * m.F.transpose() + m.V * Q * m.V.transpose();
      out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
      out.bias_jacobians = (m.F * out.bias_jacobians + m.G).eval();
      dq = dq1;
    }
  }

  // The preintegrated state itself integrates midpoint steps on a refined
  // grid of cubically reconstructed measurements; the sample-spacing
  // truncation would otherwise dominate noiseless residuals.
  constexpr int kSubsteps = 4;
  const long n_nodes = static_cast<long>(nodes.size());
  const auto catmull_rom = [&](long k, double f, bool gyro) {
    const auto at = [&](long j) {
      const ImuSample& s = nodes[std::clamp(j, 0L, n_nodes - 1)];
      return gyro ? s.gyro : s.accel;
    };
    const Vec3 p0 = at(k - 1), p1 = at(k), p2 = at(k + 1), p3 = at(k + 2);
    return Vec3(0.5 * (2.0 * p1 + (-p0 + p2) * f +
                       (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f * f +
                       (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * f * f * f));
  };
  for (long k = 0; k + 1 < n_nodes; ++k) {
    const double dt_full = nodes[k + 1].t - nodes[k].t;
    if (dt_full <= 0.0) continue;
    const double dt = dt_full / kSubsteps;
    for (int s = 0; s < kSubsteps; ++s) {
      const double f0 = double(s) / kSubsteps;
      const double f1 = double(s + 1) / kSubsteps;
      const Vec3 a0 = catmull_rom(k, f0, false) - bias_a;
      const Vec3 a1 = catmull_rom(k, f1, false) - bias_a;
      const Vec3 w_mid = catmull_rom(k, 0.5 * (f0 + f1), true) - bias_g;
      const Quat dq0 = out.dq;
      const Quat dq1 = (out.dq * so3_exp(w_mid * dt)).normalized();
      const Vec3 a_mid =
          0.5 * (dq0.toRotationMatrix() * a0 + dq1.toRotationMatrix() * a1);
      out.alpha += out.beta * dt + 0.5 * a_mid * dt * dt;
      out.beta += a_mid * dt;
      out.dq = dq1;
    }
  }
  return out;
}

Preintegration correct_for_bias(const Preintegration& p, const Vec3& new_bias_a,
                                const Vec3& new_bias_g) {
  const Vec3 dba = new_bias_a - p.lin_bias_a;
  const Vec3 dbg = new_bias_g - p.lin_bias_g;
  if (dba.norm() > kMaxAccelBiasDelta || dbg.norm() > kMaxGyroBiasDelta) {
    throw BiasDeltaTooLargeError("correct_for_bias: bias delta exceeds threshold");
  }
  Preintegration out = p;
  if (dba.isZero(0.0) && dbg.isZero(0.0)) return out;
  Eigen::Matrix<double, 6, 1> db;
  db << dba, dbg;
  const Eigen::Matrix<double, 9, 1> delta = p.bias_jacobians * db;
  out.alpha += delta.segment<3>(0);
  out.beta += delta.segment<3>(3);
  out.dq = (p.dq * so3_exp(delta.segment<3>(6))).normalized();
  return out;
}

}  // namespace gtforge
