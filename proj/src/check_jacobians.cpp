#include <cmath>
#include <random>

#include "gtforge/estimator.h"

// Central finite-difference validation of every analytic Jacobian block
// over randomized, physically consistent factor configurations.

namespace gtforge {

namespace {

constexpr double kFdStep = 1e-6;

Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Quat q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q;
}

Vec3 random_vec(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> g(0.0, sigma);
  return Vec3(g(rng), g(rng), g(rng));
}

double block_rel_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
  const double scale =
      std::max({analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff(), 1.0});
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

void record(std::vector<JacobianCheck>& checks, const std::string& name,
            double err) {
  for (auto& c : checks) {
    if (c.block == name) {
      c.max_rel_error = std::max(c.max_rel_error, err);
      return;
    }
  }
  checks.push_back({name, err});
}

// Perturb one local coordinate of an inertial state.
InertialState perturb_state(const InertialState& s, int dim, double eps) {
  InertialState out = s;
  Eigen::Matrix<double, 15, 1> d = Eigen::Matrix<double, 15, 1>::Zero();
  d(dim) = eps;
  out.p_WI += d.segment<3>(0);
  out.v_WI += d.segment<3>(3);
  out.q_WI = (out.q_WI * so3_exp(d.segment<3>(6))).normalized();
  out.b_a += d.segment<3>(9);
  out.b_g += d.segment<3>(12);
  return out;
}

void check_imu_factor(std::mt19937_64& rng, std::vector<JacobianCheck>& checks) {
  std::normal_distribution<double> g(0.0, 1.0);

  const double rate = 100.0;
  const int n_samples = 11;
  std::vector<ImuSample> samples(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    samples[i].t = double(i) / rate;
    samples[i].accel = random_vec(rng, 3.0);
    samples[i].gyro = random_vec(rng, 1.0);
  }
  const Vec3 lin_ba = random_vec(rng, 0.05);
  const Vec3 lin_bg = random_vec(rng, 0.005);
  ImuNoiseParams noise;
  const Preintegration preint = preintegrate(
      samples, samples.front().t, samples.back().t, lin_ba, lin_bg, noise);

  GravityAlign grav;
  grav.roll = 0.2 * g(rng);
  grav.pitch = 0.2 * g(rng);
  const Vec3 g_W = grav.g_W();
  const double dt = preint.dt;

  InertialState sk;
  sk.t = 0.0;
  sk.q_WI = random_quat(rng);
  sk.p_WI = random_vec(rng, 1.0);
  sk.v_WI = random_vec(rng, 1.0);
  sk.b_a = lin_ba + random_vec(rng, 0.02);
  sk.b_g = lin_bg + random_vec(rng, 0.002);

  const Preintegration pc = correct_for_bias(preint, sk.b_a, sk.b_g);
  const Mat3 R0 = sk.q_WI.toRotationMatrix();
  InertialState sk1;
  sk1.t = dt;
  sk1.p_WI = sk.p_WI + sk.v_WI * dt - 0.5 * g_W * dt * dt +
             R0 * (pc.alpha + random_vec(rng, 0.01));
  sk1.v_WI = sk.v_WI - g_W * dt + R0 * (pc.beta + random_vec(rng, 0.01));
  sk1.q_WI = (sk.q_WI * pc.dq * so3_exp(random_vec(rng, 0.01))).normalized();
  sk1.b_a = sk.b_a + random_vec(rng, 0.001);
  sk1.b_g = sk.b_g + random_vec(rng, 0.0001);

  const ImuFactorJacobians J = imu_jacobians(sk, sk1, grav, preint);

  Eigen::Matrix<double, 9, 15> fd_k, fd_k1;
  for (int d = 0; d < 15; ++d) {
    const auto rp = imu_residual(perturb_state(sk, d, kFdStep), sk1, grav, preint);
    const auto rm = imu_residual(perturb_state(sk, d, -kFdStep), sk1, grav, preint);
    fd_k.col(d) = (rp - rm) / (2.0 * kFdStep);
    const auto rp1 = imu_residual(sk, perturb_state(sk1, d, kFdStep), grav, preint);
    const auto rm1 = imu_residual(sk, perturb_state(sk1, d, -kFdStep), grav, preint);
    fd_k1.col(d) = (rp1 - rm1) / (2.0 * kFdStep);
  }
  Eigen::Matrix<double, 9, 2> fd_g;
  for (int d = 0; d < 2; ++d) {
    GravityAlign gp = grav, gm = grav;
    (d == 0 ? gp.roll : gp.pitch) += kFdStep;
    (d == 0 ? gm.roll : gm.pitch) -= kFdStep;
    fd_g.col(d) = (imu_residual(sk, sk1, gp, preint) -
                   imu_residual(sk, sk1, gm, preint)) /
                  (2.0 * kFdStep);
  }
  record(checks, "imu/d_state_k", block_rel_error(J.d_state_k, fd_k));
  record(checks, "imu/d_state_k1", block_rel_error(J.d_state_k1, fd_k1));
  record(checks, "imu/d_gravity", block_rel_error(J.d_gravity, fd_g));

  // Bias random-walk block alongside, on the same state pair.
  const double bdt = sk1.t - sk.t;
  const double wa = 1.0 / (noise.accel_random_walk * std::sqrt(bdt));
  const double wg = 1.0 / (noise.gyro_random_walk * std::sqrt(bdt));
  Eigen::Matrix<double, 6, 15> Jb_k = Eigen::Matrix<double, 6, 15>::Zero();
  Jb_k.block<3, 3>(0, 9) = -wa * Mat3::Identity();
  Jb_k.block<3, 3>(3, 12) = -wg * Mat3::Identity();
  Eigen::Matrix<double, 6, 15> fdb_k;
  for (int d = 0; d < 15; ++d) {
    const auto rp = bias_residuals(perturb_state(sk, d, kFdStep), sk1, noise);
    const auto rm = bias_residuals(perturb_state(sk, d, -kFdStep), sk1, noise);
    fdb_k.col(d) = (rp - rm) / (2.0 * kFdStep);
  }
  record(checks, "bias/d_state_k", block_rel_error(Jb_k, fdb_k));
}

void check_mocap_factor(std::mt19937_64& rng, std::vector<JacobianCheck>& checks) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // Perturbed constant-twist spline over [0, 1.1] at 0.1 s knot spacing.
  const Twist xi{random_vec(rng, 0.5), random_vec(rng, 0.5)};
  std::vector<Pose> knots(12);
  for (int k = 0; k < 12; ++k) {
    const double tau = 0.1 * k;
    Twist scaled{xi.rho * tau, xi.phi * tau};
    knots[k] = se3_exp(scaled) *
               se3_exp(Twist{random_vec(rng, 0.005), random_vec(rng, 0.005)});
  }
  const PoseSpline spline(knots, 0.0, 0.1);

  ExtrinsicState ext;
  ext.q_MI = random_quat(rng);
  ext.p_MI = random_vec(rng, 0.2);
  ext.offset_knots = {{0.0, 0.1 + 0.02 * (uni(rng) - 0.5)},
                      {0.4, 0.1 + 0.02 * (uni(rng) - 0.5)},
                      {0.8, 0.1 + 0.02 * (uni(rng) - 0.5)}};

  InertialState sk;
  sk.t = 0.15 + 0.45 * uni(rng);
  const double tau = sk.t + ext.offset_at(sk.t);
  const Pose meas = spline.evaluate(tau);
  sk.q_WI = (meas.rotation * ext.q_MI * so3_exp(random_vec(rng, 0.01))).normalized();
  sk.p_WI = meas.translation +
            sk.q_WI.toRotationMatrix() * ext.q_MI.toRotationMatrix().transpose() *
                ext.p_MI +
            random_vec(rng, 0.01);

  const MoCapFactorJacobians J = mocap_jacobians(sk, ext, spline);

  Eigen::Matrix<double, 6, 6> fd_pose;
  for (int d = 0; d < 6; ++d) {
    const int dim = d < 3 ? d : d + 3;  // map (dp, dtheta) to state coords
    const auto rp = mocap_residual(perturb_state(sk, dim, kFdStep), ext, spline);
    const auto rm = mocap_residual(perturb_state(sk, dim, -kFdStep), ext, spline);
    fd_pose.col(d) = (rp - rm) / (2.0 * kFdStep);
  }
  Eigen::Matrix<double, 6, 3> fd_p, fd_th;
  for (int d = 0; d < 3; ++d) {
    ExtrinsicState ep = ext, em = ext;
    ep.p_MI(d) += kFdStep;
    em.p_MI(d) -= kFdStep;
    fd_p.col(d) = (mocap_residual(sk, ep, spline) - mocap_residual(sk, em, spline)) /
                  (2.0 * kFdStep);
    Vec3 dth = Vec3::Zero();
    dth(d) = kFdStep;
    ExtrinsicState tp = ext, tm = ext;
    tp.q_MI = (ext.q_MI * so3_exp(dth)).normalized();
    tm.q_MI = (ext.q_MI * so3_exp(-dth)).normalized();
    fd_th.col(d) = (mocap_residual(sk, tp, spline) - mocap_residual(sk, tm, spline)) /
                   (2.0 * kFdStep);
  }
  Eigen::Matrix<double, 6, 2> fd_off;
  const int active[2] = {J.knot_r, J.knot_s};
  for (int d = 0; d < 2; ++d) {
    ExtrinsicState op = ext, om = ext;
    op.offset_knots[active[d]].t_MI += kFdStep;
    om.offset_knots[active[d]].t_MI -= kFdStep;
    fd_off.col(d) = (mocap_residual(sk, op, spline) -
                     mocap_residual(sk, om, spline)) /
                    (2.0 * kFdStep);
  }
  if (J.knot_r == J.knot_s) fd_off.col(1).setZero();  // single active knot

  record(checks, "mocap/d_pose", block_rel_error(J.d_pose, fd_pose));
  record(checks, "mocap/d_p_MI", block_rel_error(J.d_p_MI, fd_p));
  record(checks, "mocap/d_theta_MI", block_rel_error(J.d_theta_MI, fd_th));
  record(checks, "mocap/d_offset", block_rel_error(J.d_offset, fd_off));
}

}  // namespace

std::vector<JacobianCheck> check_jacobians(int n_trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<JacobianCheck> checks;
  for (int trial = 0; trial < n_trials; ++trial) {
    check_imu_factor(rng, checks);
    check_mocap_factor(rng, checks);
  }
  return checks;
}

}  // namespace gtforge
