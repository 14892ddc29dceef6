#include "gtforge/simulator.h"

#include <cmath>
#include <random>

#include "gtforge/io.h"

namespace gtforge {

Vec3 gravity_world(double roll, double pitch) {
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  return kGravityMagnitude * Vec3(sp * cr, -sr, cp * cr);
}

namespace {

// C2 on/off envelope alternating motion and stillness, with quintic
// smoothstep transitions inside the motion phase.
struct Envelope {
  double motion = 0.0;      // 0 disables the envelope
  double still = 0.0;
  double transition = 1.0;

  void eval(double t, double* e, double* de, double* dde) const {
    if (motion <= 0.0) {
      *e = 1.0;
      *de = 0.0;
      *dde = 0.0;
      return;
    }
    const double cycle = motion + still;
    double tc = std::fmod(t, cycle);
    if (tc < 0) tc += cycle;
    const double tr = std::min(transition, 0.45 * motion);
    auto smooth = [](double x, double* h, double* dh, double* ddh) {
      const double x2 = x * x, x3 = x2 * x;
      *h = ((6.0 * x - 15.0) * x + 10.0) * x3;
      *dh = ((30.0 * x - 60.0) * x + 30.0) * x2;
      *ddh = ((120.0 * x - 180.0) * x + 60.0) * x;
    };
    double h, dh, ddh;
    if (tc < tr) {
      smooth(tc / tr, &h, &dh, &ddh);
      *e = h;
      *de = dh / tr;
      *dde = ddh / (tr * tr);
    } else if (tc < motion - tr) {
      *e = 1.0;
      *de = 0.0;
      *dde = 0.0;
    } else if (tc < motion) {
      smooth((motion - tc) / tr, &h, &dh, &ddh);
      *e = h;
      *de = -dh / tr;
      *dde = ddh / (tr * tr);
    } else {
      *e = 0.0;
      *de = 0.0;
      *dde = 0.0;
    }
  }
};

// Sinusoidal excitation on all 6 DoF with distinct incommensurate
// frequencies, optionally gated by a motion/stillness envelope.
class SinusoidTrajectory final : public ReferenceTrajectory {
 public:
  SinusoidTrajectory(const SimConfig& cfg) : duration_(cfg.duration) {
    amp_trans_ = cfg.trans_amplitude;
    amp_rot_ = cfg.rot_amplitude;
    env_.motion = cfg.motion_period;
    env_.still = cfg.still_period;
    env_.transition = cfg.envelope_transition;
  }

  double t_begin() const override { return 0.0; }
  double t_end() const override { return duration_; }

  TrajectoryKinematics at(double t) const override {
    double e, de, dde;
    env_.eval(t, &e, &de, &dde);

    Vec3 p, dp, ddp, theta, dtheta;
    for (int i = 0; i < 3; ++i) {
      const double w = 2.0 * M_PI * kFreq[i];
      const double s = std::sin(w * t + kPhase[i]);
      const double c = std::cos(w * t + kPhase[i]);
      // f = A e(t) sin(w t + phi), derivatives by product rule.
      p(i) = amp_trans_ * e * s;
      dp(i) = amp_trans_ * (de * s + e * w * c);
      ddp(i) = amp_trans_ * (dde * s + 2.0 * de * w * c - e * w * w * s);
      const double wr = 2.0 * M_PI * kFreq[i + 3];
      const double sr = std::sin(wr * t + kPhase[i + 3]);
      const double cr = std::cos(wr * t + kPhase[i + 3]);
      theta(i) = amp_rot_ * e * sr;
      dtheta(i) = amp_rot_ * (de * sr + e * wr * cr);
    }

    TrajectoryKinematics k;
    k.pose = Pose(so3_exp(theta), p);
    k.velocity = dp;
    k.acceleration = ddp;
    k.omega_body = so3_right_jacobian(theta) * dtheta;
    return k;
  }

 private:
  // Rotation frequency spacings are deliberately uneven so the angular
  // speed magnitude has no short quasi-period that could alias the
  // correlation-based clock alignment.
  static constexpr double kFreq[6] = {0.31, 0.43, 0.57, 0.71, 0.93, 1.23};
  static constexpr double kPhase[6] = {0.0, 1.3, 2.1, 0.7, 1.9, 2.9};
  double duration_;
  double amp_trans_;
  double amp_rot_;
  Envelope env_;
};

// Base trajectory loaded from a TUM file and represented by a pose spline.
class SplineTrajectory final : public ReferenceTrajectory {
 public:
  explicit SplineTrajectory(const std::string& path) {
    Trajectory traj;
    try {
      traj = read_tum(path);
    } catch (const IoError& e) {
      throw FileParseError(e.what());
    }
    std::vector<MoCapSample> samples;
    samples.reserve(traj.size());
    for (const auto& s : traj) samples.push_back({s.t, s.pose});
    spline_ = build_spline(samples);
  }

  double t_begin() const override { return spline_.domain_begin(); }
  double t_end() const override { return spline_.domain_end() - 1e-9; }

  TrajectoryKinematics at(double t) const override {
    TrajectoryKinematics k;
    k.pose = spline_.evaluate(t);
    const SplineVelocity v = spline_.velocity(t);
    k.velocity = v.p_dot;
    // Acceleration from central differencing of the analytic velocity.
    const double h = 1e-4;
    const double tl = std::max(t - h, spline_.domain_begin());
    const double tr = std::min(t + h, spline_.domain_end() - 1e-12);
    k.acceleration =
        (spline_.velocity(tr).p_dot - spline_.velocity(tl).p_dot) / (tr - tl);
    // omega_b = 2 vec(q^-1 (x) q_dot).
    const Quat q = k.pose.rotation;
    const Quat qd = quat_from_wxyz(v.q_dot);
    const Quat w = q.conjugate() * qd;
    k.omega_body = 2.0 * Vec3(w.x(), w.y(), w.z());
    return k;
  }

 private:
  PoseSpline spline_;
};

}  // namespace

std::shared_ptr<ReferenceTrajectory> gen_trajectory(const SimConfig& cfg) {
  if (cfg.duration <= 0.0) {
    throw SimulatorError("gen_trajectory: non-positive duration");
  }
  if (!cfg.base_trajectory_tum.empty()) {
    return std::make_shared<SplineTrajectory>(cfg.base_trajectory_tum);
  }
  return std::make_shared<SinusoidTrajectory>(cfg);
}

ImuSynthesis synth_imu(const ReferenceTrajectory& traj, const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.rng_seed * 0x9e3779b97f4a7c15ULL + 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scale = cfg.noise_scale * cfg.imu_noise_scale;
  const double dt = 1.0 / cfg.imu_rate;
  const double white_a = cfg.imu_noise.accel_noise_density * std::sqrt(cfg.imu_rate) * scale;
  const double white_g = cfg.imu_noise.gyro_noise_density * std::sqrt(cfg.imu_rate) * scale;
  const double walk_a = cfg.imu_noise.accel_random_walk * std::sqrt(dt) * scale;
  const double walk_g = cfg.imu_noise.gyro_random_walk * std::sqrt(dt) * scale;
  const Vec3 g_W = gravity_world(cfg.gravity_roll, cfg.gravity_pitch);

  const double t0 = traj.t_begin();
  const size_t n =
      static_cast<size_t>(std::floor((traj.t_end() - t0) * cfg.imu_rate)) + 1;

  ImuSynthesis out;
  out.samples.reserve(n);
  out.bias_a.reserve(n);
  out.bias_g.reserve(n);
  Vec3 ba = Vec3::Zero(), bg = Vec3::Zero();
  for (size_t k = 0; k < n; ++k) {
    const double t = t0 + double(k) * dt;
    const TrajectoryKinematics kin = traj.at(t);
    const Mat3 R_WI = kin.pose.rotation.toRotationMatrix();
    ImuSample s;
    s.t = t;
    s.accel = R_WI.transpose() * (kin.acceleration + g_W) + ba +
              white_a * Vec3(gauss(rng), gauss(rng), gauss(rng));
    s.gyro = kin.omega_body + bg + white_g * Vec3(gauss(rng), gauss(rng), gauss(rng));
    out.samples.push_back(s);
    out.bias_a.push_back(ba);
    out.bias_g.push_back(bg);
    ba += walk_a * Vec3(gauss(rng), gauss(rng), gauss(rng));
    bg += walk_g * Vec3(gauss(rng), gauss(rng), gauss(rng));
  }
  return out;
}

std::vector<MoCapSample> synth_mocap(const ReferenceTrajectory& traj,
                                     const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.rng_seed * 0x9e3779b97f4a7c15ULL + 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double scale = cfg.noise_scale * cfg.mocap_noise_scale;
  const double sigma_t =
      cfg.mocap_noise.trans_noise_density * std::sqrt(cfg.mocap_rate) * scale;
  const double sigma_r =
      cfg.mocap_noise.rot_noise_density * std::sqrt(cfg.mocap_rate) * scale;
  const Pose T_IM = cfg.true_extrinsics.inverse();
  const double drift_rate = cfg.clock_drift / 60.0;  // s per s

  // MoCap timestamps obey tau = t + offset0 + drift_rate * t.
  const double tau_begin = traj.t_begin() * (1.0 + drift_rate) + cfg.true_offset0;
  const double tau_end = traj.t_end() * (1.0 + drift_rate) + cfg.true_offset0;
  const size_t n = static_cast<size_t>(
      std::floor((tau_end - tau_begin) * cfg.mocap_rate)) + 1;

  std::vector<MoCapSample> out;
  out.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    const double tau = tau_begin + double(k) / cfg.mocap_rate;
    const double t = (tau - cfg.true_offset0) / (1.0 + drift_rate);
    Pose T_WM = traj.at(t).pose * T_IM;
    const double outlier_draw = uni(rng);
    const Vec3 noise_t(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 noise_r(gauss(rng), gauss(rng), gauss(rng));
    if (outlier_draw < cfg.outlier_fraction) {
      // Uniform random pose in a 2 m box with arbitrary rotation.
      const Vec3 p(4.0 * uni(rng) - 2.0, 4.0 * uni(rng) - 2.0, 4.0 * uni(rng) - 2.0);
      Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
      if (axis.norm() < 1e-9) axis = Vec3::UnitX();
      const double angle = uni(rng) * M_PI;
      T_WM = Pose(so3_exp(axis.normalized() * angle), p);
    } else {
      T_WM.translation += sigma_t * noise_t;
      T_WM.rotation = (T_WM.rotation * so3_exp(sigma_r * noise_r)).normalized();
    }
    out.push_back({tau, T_WM});
  }
  return out;
}

SimOutput simulate(const SimConfig& cfg) {
  const auto traj = gen_trajectory(cfg);
  SimOutput out;
  ImuSynthesis imu = synth_imu(*traj, cfg);
  out.imu = std::move(imu.samples);
  out.truth.bias_a = std::move(imu.bias_a);
  out.truth.bias_g = std::move(imu.bias_g);
  out.mocap = synth_mocap(*traj, cfg);
  out.truth.offset0 = cfg.true_offset0;
  out.truth.drift_rate = cfg.clock_drift / 60.0;
  out.truth.trajectory.reserve(out.imu.size());
  out.truth.velocities.reserve(out.imu.size());
  for (const auto& s : out.imu) {
    const TrajectoryKinematics kin = traj->at(s.t);
    out.truth.trajectory.push_back({s.t, kin.pose});
    out.truth.velocities.push_back(kin.velocity);
  }
  return out;
}

}  // namespace gtforge
