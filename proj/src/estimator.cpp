#include "gtforge/estimator.h"

#include <algorithm>
#include <cmath>

namespace gtforge {

namespace {

// P picks the vector part of a scalar-first 4-vector; I_tilde embeds a
// 3-vector as a pure quaternion.
Eigen::Matrix<double, 3, 4> vec_picker() {
  Eigen::Matrix<double, 3, 4> P = Eigen::Matrix<double, 3, 4>::Zero();
  P.rightCols<3>().setIdentity();
  return P;
}

Eigen::Matrix<double, 4, 3> vec_embedder() {
  Eigen::Matrix<double, 4, 3> I = Eigen::Matrix<double, 4, 3>::Zero();
  I.bottomRows<3>().setIdentity();
  return I;
}

}  // namespace

double ExtrinsicState::offset_at(double t) const {
  int r, s;
  double lambda;
  knot_weights(t, &r, &s, &lambda);
  return (1.0 - lambda) * offset_knots[r].t_MI + lambda * offset_knots[s].t_MI;
}

void ExtrinsicState::knot_weights(double t, int* r, int* s, double* lambda) const {
  const int m = static_cast<int>(offset_knots.size());
  if (m == 0) throw EstimatorError("ExtrinsicState: no offset knots");
  if (m == 1 || t <= offset_knots.front().t_knot) {
    *r = *s = 0;
    *lambda = 0.0;
    return;
  }
  if (t >= offset_knots.back().t_knot) {
    *r = *s = m - 1;
    *lambda = 0.0;
    return;
  }
  int i = 0;
  while (i + 1 < m && offset_knots[i + 1].t_knot <= t) ++i;
  *r = i;
  *s = i + 1;
  *lambda = (t - offset_knots[i].t_knot) /
            (offset_knots[i + 1].t_knot - offset_knots[i].t_knot);
}

Vec3 GravityAlign::g_W() const {
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  return kGravityMagnitude * Vec3(sp * cr, -sr, cp * cr);
}

Eigen::Matrix<double, 3, 2> GravityAlign::g_jacobian() const {
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  Eigen::Matrix<double, 3, 2> J;
  J.col(0) = kGravityMagnitude * Vec3(-sp * sr, -cr, -cp * sr);
  J.col(1) = kGravityMagnitude * Vec3(cp * cr, 0.0, -sp * cr);
  return J;
}

Eigen::Matrix<double, 9, 1> imu_residual(const InertialState& sk,
                                         const InertialState& sk1,
                                         const GravityAlign& gravity,
                                         const Preintegration& preint) {
  const Preintegration pc = correct_for_bias(preint, sk.b_a, sk.b_g);
  const Mat3 Rt = sk.q_WI.toRotationMatrix().transpose();
  const double dt = pc.dt;
  const Vec3 g = gravity.g_W();

  Eigen::Matrix<double, 9, 1> r;
  r.segment<3>(0) =
      Rt * (sk1.p_WI - sk.p_WI - sk.v_WI * dt + 0.5 * g * dt * dt) - pc.alpha;
  r.segment<3>(3) = Rt * (sk1.v_WI - sk.v_WI + g * dt) - pc.beta;
  const Quat q_rel = sk.q_WI.conjugate() * sk1.q_WI;
  Quat e = pc.dq.conjugate() * q_rel;
  e = quat_positive(e);
  r.segment<3>(6) = 2.0 * Vec3(e.x(), e.y(), e.z());
  return r;
}

ImuFactorJacobians imu_jacobians(const InertialState& sk,
                                 const InertialState& sk1,
                                 const GravityAlign& gravity,
                                 const Preintegration& preint) {
  const Preintegration pc = correct_for_bias(preint, sk.b_a, sk.b_g);
  const Mat3 Rt = sk.q_WI.toRotationMatrix().transpose();
  const double dt = pc.dt;
  const Vec3 g = gravity.g_W();
  const Vec3 s_p = sk1.p_WI - sk.p_WI - sk.v_WI * dt + 0.5 * g * dt * dt;
  const Vec3 s_v = sk1.v_WI - sk.v_WI + g * dt;

  const Quat q_rel = sk.q_WI.conjugate() * sk1.q_WI;
  Quat e = pc.dq.conjugate() * q_rel;
  const double sign = e.w() < 0 ? -1.0 : 1.0;
  e = quat_positive(e);

  const auto P = vec_picker();
  const auto It = vec_embedder();
  const Mat9x6& bj = preint.bias_jacobians;
  const Mat3 J_aa = bj.block<3, 3>(0, 0), J_ag = bj.block<3, 3>(0, 3);
  const Mat3 J_ba = bj.block<3, 3>(3, 0), J_bg = bj.block<3, 3>(3, 3);
  const Mat3 J_ta = bj.block<3, 3>(6, 0), J_tg = bj.block<3, 3>(6, 3);

  ImuFactorJacobians J;
  J.d_state_k.setZero();
  J.d_state_k1.setZero();
  J.d_gravity.setZero();

  // Columns: dp 0-2, dv 3-5, dtheta 6-8, db_a 9-11, db_g 12-14.
  J.d_state_k.block<3, 3>(0, 0) = -Rt;
  J.d_state_k.block<3, 3>(0, 3) = -Rt * dt;
  J.d_state_k.block<3, 3>(0, 6) = skew(Rt * s_p);
  J.d_state_k.block<3, 3>(0, 9) = -J_aa;
  J.d_state_k.block<3, 3>(0, 12) = -J_ag;

  J.d_state_k.block<3, 3>(3, 3) = -Rt;
  J.d_state_k.block<3, 3>(3, 6) = skew(Rt * s_v);
  J.d_state_k.block<3, 3>(3, 9) = -J_ba;
  J.d_state_k.block<3, 3>(3, 12) = -J_bg;

  const Mat3 rot_k =
      -sign * P * quat_left_matrix(pc.dq.conjugate()) * quat_right_matrix(q_rel) * It;
  J.d_state_k.block<3, 3>(6, 6) = rot_k;
  J.d_state_k.block<3, 3>(6, 9) = -sign * P * quat_right_matrix(e) * It * J_ta;
  J.d_state_k.block<3, 3>(6, 12) = -sign * P * quat_right_matrix(e) * It * J_tg;

  J.d_state_k1.block<3, 3>(0, 0) = Rt;
  J.d_state_k1.block<3, 3>(3, 3) = Rt;
  J.d_state_k1.block<3, 3>(6, 6) = sign * P * quat_left_matrix(e) * It;

  const Eigen::Matrix<double, 3, 2> Gj = gravity.g_jacobian();
  J.d_gravity.block<3, 2>(0, 0) = 0.5 * dt * dt * Rt * Gj;
  J.d_gravity.block<3, 2>(3, 0) = dt * Rt * Gj;
  return J;
}

Eigen::Matrix<double, 6, 1> mocap_residual(const InertialState& sk,
                                           const ExtrinsicState& ext,
                                           const PoseSpline& spline) {
  const double tau = sk.t + ext.offset_at(sk.t);
  if (!spline.in_domain(tau)) {
    throw OutOfDomainError("mocap_residual: offset time outside spline domain");
  }
  const Pose meas = spline.evaluate(tau);
  const Mat3 R_WI = sk.q_WI.toRotationMatrix();
  const Mat3 R_MI = ext.q_MI.toRotationMatrix();

  Eigen::Matrix<double, 6, 1> r;
  r.segment<3>(0) =
      sk.p_WI - R_WI * R_MI.transpose() * ext.p_MI - meas.translation;
  Quat e = meas.rotation.conjugate() * (sk.q_WI * ext.q_MI.conjugate());
  e = quat_positive(e);
  r.segment<3>(3) = 2.0 * Vec3(e.x(), e.y(), e.z());
  return r;
}

Eigen::Matrix<double, 6, 1> bias_residuals(const InertialState& sk,
                                           const InertialState& sk1,
                                           const ImuNoiseParams& noise) {
  const double dt = sk1.t - sk.t;
  if (dt <= 0.0) throw EstimatorError("bias_residuals: non-positive dt");
  const double sqdt = std::sqrt(dt);
  Eigen::Matrix<double, 6, 1> r;
  r.segment<3>(0) = (sk1.b_a - sk.b_a) / (noise.accel_random_walk * sqdt);
  r.segment<3>(3) = (sk1.b_g - sk.b_g) / (noise.gyro_random_walk * sqdt);
  return r;
}

MoCapFactorJacobians mocap_jacobians(const InertialState& sk,
                                     const ExtrinsicState& ext,
                                     const PoseSpline& spline) {
  const double tau = sk.t + ext.offset_at(sk.t);
  if (!spline.in_domain(tau)) {
    throw OutOfDomainError("mocap_jacobians: offset time outside spline domain");
  }
  const Pose meas = spline.evaluate(tau);
  const Mat3 R_WI = sk.q_WI.toRotationMatrix();
  const Mat3 R_MI = ext.q_MI.toRotationMatrix();
  const Vec3 u = R_MI.transpose() * ext.p_MI;

  const Quat g = sk.q_WI * ext.q_MI.conjugate();
  Quat e = meas.rotation.conjugate() * g;
  const double sign = e.w() < 0 ? -1.0 : 1.0;

  const auto P = vec_picker();
  const auto It = vec_embedder();
  const Mat3 rot_common =
      sign * P * quat_left_matrix(meas.rotation.conjugate() * sk.q_WI) *
      quat_right_matrix(ext.q_MI.conjugate()) * It;

  MoCapFactorJacobians J;
  J.d_pose.setZero();
  J.d_p_MI.setZero();
  J.d_theta_MI.setZero();

  J.d_pose.block<3, 3>(0, 0).setIdentity();
  J.d_pose.block<3, 3>(0, 3) = R_WI * skew(u);
  J.d_pose.block<3, 3>(3, 3) = rot_common;

  J.d_p_MI.block<3, 3>(0, 0) = -R_WI * R_MI.transpose();
  J.d_theta_MI.block<3, 3>(0, 0) = -R_WI * skew(u);
  J.d_theta_MI.block<3, 3>(3, 0) = -rot_common;

  J.d_offset = time_offset_jacobian(sk, ext, spline, &J.knot_r, &J.knot_s);
  return J;
}

Eigen::Matrix<double, 6, 2> time_offset_jacobian(const InertialState& sk,
                                                 const ExtrinsicState& ext,
                                                 const PoseSpline& spline,
                                                 int* knot_r, int* knot_s) {
  int r, s;
  double lambda;
  ext.knot_weights(sk.t, &r, &s, &lambda);
  if (knot_r) *knot_r = r;
  if (knot_s) *knot_s = s;

  const double tau = sk.t + ext.offset_at(sk.t);
  if (!spline.in_domain(tau)) {
    throw OutOfDomainError("time_offset_jacobian: offset time outside spline domain");
  }
  const Pose meas = spline.evaluate(tau);
  const SplineVelocity vel = spline.velocity(tau);

  const Quat g = sk.q_WI * ext.q_MI.conjugate();
  const Quat e = meas.rotation.conjugate() * g;
  const double sign = e.w() < 0 ? -1.0 : 1.0;

  // d r / d tau: translation sees -p_dot; rotation sees the derivative of
  // the measurement inverse, conj(q_dot) (x) g.
  Eigen::Matrix<double, 6, 1> dr_dtau;
  dr_dtau.segment<3>(0) = -vel.p_dot;
  const Quat qd = quat_from_wxyz(vel.q_dot);
  const Quat qd_conj(qd.w(), -qd.x(), -qd.y(), -qd.z());
  const Quat prod = qd_conj * g;
  dr_dtau.segment<3>(3) = 2.0 * sign * Vec3(prod.x(), prod.y(), prod.z());

  Eigen::Matrix<double, 6, 2> J;
  if (r == s) {
    J.col(0) = dr_dtau;
    J.col(1).setZero();
  } else {
    J.col(0) = (1.0 - lambda) * dr_dtau;
    J.col(1) = lambda * dr_dtau;
  }
  return J;
}

std::vector<TimeInterval> detect_degenerate_windows(
    std::span<const MoCapSample> mocap, double w, double varpi) {
  std::vector<TimeInterval> out;
  if (mocap.empty()) return out;
  const double t_begin = mocap.front().tau;
  const double t_end = mocap.back().tau;
  size_t lo = 0;
  for (double t = t_begin; t < t_end; t += w) {
    const TimeInterval win{t, t + w};
    while (lo < mocap.size() && mocap[lo].tau < win.begin) ++lo;
    size_t hi = lo;
    while (hi < mocap.size() && mocap[hi].tau < win.end) ++hi;
    const size_t count = hi - lo;
    bool degenerate = true;
    if (count >= 2) {
      // Subsample to at most 100 poses before the O(k^2) pairwise max.
      std::vector<const MoCapSample*> sel;
      const size_t target = std::min<size_t>(count, 100);
      sel.reserve(target);
      for (size_t i = 0; i < target; ++i) {
        sel.push_back(&mocap[lo + i * (count - 1) / std::max<size_t>(target - 1, 1)]);
      }
      double max_angle = 0.0;
      for (size_t i = 0; i < sel.size() && degenerate; ++i) {
        for (size_t j = i + 1; j < sel.size(); ++j) {
          const Quat rel = sel[i]->pose.rotation.conjugate() * sel[j]->pose.rotation;
          max_angle = std::max(max_angle, rotation_angle(rel));
          if (max_angle >= varpi) {
            degenerate = false;
            break;
          }
        }
      }
    }
    if (degenerate) out.push_back(win);
    lo = hi;
  }
  return out;
}

FactorGraphProblem build_problem(std::span<const ImuSample> imu,
                                 std::span<const MoCapSample> mocap,
                                 const InitResult& init,
                                 const EstimatorConfig& cfg) {
  if (imu.size() < 2 || mocap.size() < 4) {
    throw EmptyOverlapError("build_problem: not enough samples");
  }
  FactorGraphProblem pb;
  pb.cfg = cfg;
  pb.imu.assign(imu.begin(), imu.end());
  // Corrupted poses would leak into every neighbouring spline segment;
  // runs of dropped samples turn into gaps the builder already handles.
  const std::vector<MoCapSample> clean = drop_mocap_glitches(mocap);
  pb.spline = build_spline(clean, /*allow_gaps=*/true, /*interpolate=*/true);
  pb.extrinsics.p_MI = init.p_MI;
  pb.extrinsics.q_MI = init.q_MI;
  gravity_to_rollpitch(init.g_W, &pb.gravity.roll, &pb.gravity.pitch);

  const double eps = 1e-9;
  // Usable sub-spans of the spline domain after removing the invalid
  // intervals (extrapolated boundary knots, bridged gaps). The intervals
  // can overlap, so subtract them from the full domain in sorted order.
  std::vector<std::pair<double, double>> valid_spans;
  {
    std::vector<std::pair<double, double>> ivs = pb.spline.invalid_intervals();
    std::sort(ivs.begin(), ivs.end());
    double lo = pb.spline.domain_begin();
    const double hi = pb.spline.domain_end();
    for (const auto& iv : ivs) {
      if (iv.second <= lo) continue;
      if (iv.first > lo) valid_spans.emplace_back(lo, std::min(iv.first, hi));
      lo = std::max(lo, iv.second);
      if (lo >= hi) break;
    }
    if (lo < hi) valid_spans.emplace_back(lo, hi);
    std::erase_if(valid_spans,
                  [&](const auto& s) { return s.second - s.first <= eps; });
    if (valid_spans.empty()) {
      throw EmptyOverlapError("build_problem: spline has no valid span");
    }
  }
  const double dom_lo = valid_spans.front().first;
  const double dom_hi = valid_spans.back().second;
  const double t_lo = std::max(imu.front().t, dom_lo - init.t_MI0);
  const double t_hi = std::min(imu.back().t, dom_hi - init.t_MI0 - eps);
  if (t_hi <= t_lo) {
    throw EmptyOverlapError("build_problem: IMU and MoCap streams do not overlap");
  }
  const double period = 1.0 / cfg.state_rate;
  const int n = static_cast<int>(std::floor((t_hi - t_lo) / period)) + 1;
  if (n < 2) throw EmptyOverlapError("build_problem: fewer than 2 state epochs");

  // Offset knots every offset_knot_spacing across the state span,
  // endpoints clamped; all initialized to the coarse offset.
  const double span = (n - 1) * period;
  int m = cfg.min_offset_knots <= 1
              ? 1
              : std::max(cfg.min_offset_knots,
                         static_cast<int>(std::ceil(span / cfg.offset_knot_spacing)) + 1);
  pb.extrinsics.offset_knots.resize(m);
  for (int j = 0; j < m; ++j) {
    const double tk =
        m == 1 ? t_lo + 0.5 * span : t_lo + span * double(j) / double(m - 1);
    pb.extrinsics.offset_knots[j] = {tk, init.t_MI0};
  }

  // Initial inertial states: MoCap poses propagated through the init
  // extrinsics, velocities by central differencing, biases zero.
  const Pose T_MI(init.q_MI, init.p_MI);
  auto valid_tau = [&](double tau) {
    // Clamp into the nearest valid span.
    double best = valid_spans.front().first;
    double best_dist = std::abs(tau - best);
    for (const auto& sp : valid_spans) {
      const double c = std::clamp(tau, sp.first, sp.second - eps);
      const double d = std::abs(tau - c);
      if (d < best_dist) {
        best_dist = d;
        best = c;
      }
    }
    return best;
  };
  auto pose_at = [&](double t) {
    return pb.spline.evaluate(valid_tau(t + init.t_MI0)) * T_MI;
  };
  pb.states.resize(n);
  const double h = 0.5 * period;
  for (int k = 0; k < n; ++k) {
    const double t = t_lo + k * period;
    InertialState& s = pb.states[k];
    s.t = t;
    const Pose T_WI = pose_at(t);
    s.p_WI = T_WI.translation;
    s.q_WI = T_WI.rotation;
    const double ta = std::max(t - h, t_lo);
    const double tb = std::min(t + h, t_lo + span);
    s.v_WI = (pose_at(tb).translation - pose_at(ta).translation) / (tb - ta);
  }

  pb.preintegrations.reserve(n - 1);
  for (int k = 0; k + 1 < n; ++k) {
    pb.preintegrations.push_back(preintegrate(imu, pb.states[k].t,
                                              pb.states[k + 1].t, Vec3::Zero(),
                                              Vec3::Zero(), cfg.imu_noise));
  }

  const double var_t = cfg.mocap_trans_noise_density *
                       cfg.mocap_trans_noise_density * cfg.mocap_rate;
  const double var_r = cfg.mocap_rot_noise_density *
                       cfg.mocap_rot_noise_density * cfg.mocap_rate;
  pb.mocap_cov.setZero();
  pb.mocap_cov.diagonal() << var_t, var_t, var_t, var_r, var_r, var_r;

  pb.degenerate_windows = detect_degenerate_windows(
      mocap, cfg.degeneracy_window, cfg.degeneracy_angle);
  return pb;
}

Trajectory extract_trajectory(std::span<const InertialState> states, double rate) {
  if (states.size() < 2) {
    throw EstimatorError("extract_trajectory: need at least 2 states");
  }
  Trajectory out;
  const double t0 = states.front().t;
  const double t1 = states.back().t;
  const int n = static_cast<int>(std::floor((t1 - t0) * rate + 1e-9)) + 1;
  out.reserve(n);
  size_t idx = 0;
  for (int k = 0; k < n; ++k) {
    const double t = t0 + double(k) / rate;
    while (idx + 2 < states.size() && states[idx + 1].t <= t) ++idx;
    const InertialState& a = states[idx];
    const InertialState& b = states[idx + 1];
    const double s = (t - a.t) / (b.t - a.t);
    out.push_back({t, pose_interpolate(Pose(a.q_WI, a.p_WI),
                                       Pose(b.q_WI, b.p_WI), s)});
  }
  return out;
}

}  // namespace gtforge
