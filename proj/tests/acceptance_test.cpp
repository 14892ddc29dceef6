// End-to-end acceptance suite: one pass/fail line per criterion, with the
// measured values printed alongside the required thresholds.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gtforge/estimator.h"
#include "gtforge/io.h"
#include "gtforge/metrics.h"
#include "gtforge/simulator.h"

using namespace gtforge;

namespace {

int g_failures = 0;

void report(int idx, const std::string& desc, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s%s%s%s\n", ok ? "PASS" : "FAIL", idx,
              desc.c_str(), detail.empty() ? "" : " (", detail.c_str(),
              detail.empty() ? "" : ")");
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

SimConfig base_sim(double duration, std::uint64_t seed) {
  SimConfig cfg;
  cfg.duration = duration;
  cfg.rng_seed = seed;
  cfg.true_extrinsics =
      Pose(so3_exp(Vec3(0.3, -0.2, 0.5)), Vec3(0.1, -0.05, 0.08));
  cfg.true_offset0 = 0.005;
  cfg.clock_drift = 0.0;
  return cfg;
}

InitResult truth_init(const SimConfig& cfg) {
  InitResult init;
  init.q_MI = cfg.true_extrinsics.rotation;
  init.p_MI = cfg.true_extrinsics.translation;
  init.t_MI0 = cfg.true_offset0;
  init.g_W = gravity_world(cfg.gravity_roll, cfg.gravity_pitch);
  return init;
}

void set_truth_states(FactorGraphProblem& pb, const SimOutput& out) {
  const double t0 = out.truth.trajectory.front().t;
  const double dt = out.truth.trajectory[1].t - t0;
  for (auto& s : pb.states) {
    const double x = (s.t - t0) / dt;
    const int i = std::clamp(static_cast<int>(std::floor(x)), 0,
                             static_cast<int>(out.truth.trajectory.size()) - 2);
    const double f = x - i;
    const Pose T = pose_interpolate(out.truth.trajectory[i].pose,
                                    out.truth.trajectory[i + 1].pose, f);
    s.p_WI = T.translation;
    s.q_WI = T.rotation;
    s.v_WI = (1 - f) * out.truth.velocities[i] + f * out.truth.velocities[i + 1];
    s.b_a = (1 - f) * out.truth.bias_a[i] + f * out.truth.bias_a[i + 1];
    s.b_g = (1 - f) * out.truth.bias_g[i] + f * out.truth.bias_g[i + 1];
  }
}

struct PipelineResult {
  FactorGraphProblem pb;
  SolveReport rep;
  InitResult init;
  Trajectory traj;
};

PipelineResult run_pipeline(const SimOutput& out,
                            EstimatorConfig ecfg = EstimatorConfig{},
                            InitConfig icfg = InitConfig{}) {
  PipelineResult res;
  res.init = ransac_initialize(out.imu, out.mocap, icfg);
  res.pb = build_problem(out.imu, out.mocap, res.init, ecfg);
  res.rep = optimize(res.pb);
  res.traj = extract_trajectory(res.pb.states, ecfg.state_rate);
  return res;
}

double rot_err_deg(const Quat& est, const Quat& truth) {
  return rotation_angle(est.conjugate() * truth) * 180.0 / M_PI;
}

Trajectory mocap_as_imu_trajectory(const SimOutput& out, const SimConfig& cfg) {
  // Raw MoCap poses mapped into the IMU frame with the true calibration.
  Trajectory traj;
  const double drift = out.truth.drift_rate;
  for (const auto& s : out.mocap) {
    const double t = (s.tau - cfg.true_offset0) / (1.0 + drift);
    traj.push_back({t, s.pose * cfg.true_extrinsics});
  }
  return traj;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

void criterion1() {
  const char* desc =
      "noiseless consistency: residuals < 1e-5 at truth, truth-start solve "
      "reaches ATE < 1e-6 m in < 10 s";
  try {
    SimConfig cfg = base_sim(60.0, 1);
    cfg.noise_scale = 0.0;
    cfg.true_offset0 = 0.0;
    const SimOutput out = simulate(cfg);

    const auto t0 = std::chrono::steady_clock::now();
    FactorGraphProblem pb =
        build_problem(out.imu, out.mocap, truth_init(cfg), EstimatorConfig{});
    set_truth_states(pb, out);

    GravityAlign grav;
    double max_res = 0.0;
    for (size_t k = 0; k + 1 < pb.states.size(); ++k) {
      max_res = std::max(max_res,
                         imu_residual(pb.states[k], pb.states[k + 1], grav,
                                      pb.preintegrations[k])
                             .norm());
    }
    for (const auto& s : pb.states) {
      if (!pb.spline.in_domain(s.t + pb.extrinsics.offset_at(s.t))) continue;
      max_res = std::max(
          max_res, mocap_residual(s, pb.extrinsics, pb.spline).norm());
    }

    const SolveReport rep = optimize(pb);
    const Trajectory est = extract_trajectory(pb.states, 100.0);
    const MetricReport m = evaluate_trajectories(est, out.truth.trajectory);
    const double elapsed = seconds_since(t0);

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "max residual %.2e, ATE %.2e m, %.1f s, converged=%d",
                  max_res, m.ate_rmse, elapsed, rep.converged ? 1 : 0);
    report(1, desc,
           max_res < 1e-5 && rep.converged && m.ate_rmse < 1e-6 &&
               elapsed < 10.0,
           buf);
  } catch (const std::exception& e) {
    report(1, desc, false, e.what());
  }
}

void criterion2() {
  const char* desc =
      "analytic Jacobians match central differences within 1e-4 over 100 "
      "random configurations per block";
  try {
    const auto checks = check_jacobians(100, 12345);
    double worst = 0.0;
    std::string worst_block;
    for (const auto& c : checks) {
      if (c.max_rel_error > worst) {
        worst = c.max_rel_error;
        worst_block = c.block;
      }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst block %s at %.2e",
                  worst_block.c_str(), worst);
    report(2, desc, !checks.empty() && worst < 1e-4, buf);
  } catch (const std::exception& e) {
    report(2, desc, false, e.what());
  }
}

void criterion3() {
  const char* desc =
      "midpoint preintegration within 1e-5 m / 1e-5 m/s / 1e-6 rad of a "
      "10 kHz fine-step reference over 0.01 s";
  try {
    double worst_p = 0.0, worst_v = 0.0, worst_q = 0.0;
    for (std::uint64_t seed : {21, 22, 23, 24}) {
      SimConfig cfg = base_sim(4.0, seed);
      cfg.noise_scale = 0.0;
      const auto traj = gen_trajectory(cfg);
      auto sample = [&](double rate) {
        std::vector<ImuSample> imu;
        const Vec3 g = gravity_world(0, 0);
        for (double t = 0.0; t <= 3.0; t += 1.0 / rate) {
          const TrajectoryKinematics k = traj->at(t);
          ImuSample s;
          s.t = t;
          s.accel = k.pose.rotation.toRotationMatrix().transpose() *
                    (k.acceleration + g);
          s.gyro = k.omega_body;
          imu.push_back(s);
        }
        return imu;
      };
      const auto coarse = sample(500.0);
      const auto fine = sample(10000.0);
      for (double t0 = 0.2; t0 < 2.5; t0 += 0.21) {
        const auto a = preintegrate(coarse, t0, t0 + 0.01, Vec3::Zero(),
                                    Vec3::Zero(), ImuNoiseParams{});
        const auto b = preintegrate(fine, t0, t0 + 0.01, Vec3::Zero(),
                                    Vec3::Zero(), ImuNoiseParams{});
        worst_p = std::max(worst_p, (a.alpha - b.alpha).norm());
        worst_v = std::max(worst_v, (a.beta - b.beta).norm());
        worst_q = std::max(worst_q, rotation_angle(a.dq.conjugate() * b.dq));
      }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "dp %.2e m, dv %.2e m/s, dq %.2e rad",
                  worst_p, worst_v, worst_q);
    report(3, desc, worst_p < 1e-5 && worst_v < 1e-5 && worst_q < 1e-6, buf);
  } catch (const std::exception& e) {
    report(3, desc, false, e.what());
  }
}

void criterion4() {
  const char* desc =
      "spline basis boundaries exact to 1e-12, constant-twist reproduction "
      "1e-8, numeric C2 continuity 1e-8";
  try {
    bool ok = true;
    std::string why;

    std::vector<Pose> flat(8);
    const PoseSpline unit(flat, 0.0, 1.0);
    const BasisWeights at0 = unit.basis(2.0);
    if (std::abs(at0.B0 - 1.0) > 1e-12 || std::abs(at0.B1 - 5.0 / 6.0) > 1e-12 ||
        std::abs(at0.B2 - 1.0 / 6.0) > 1e-12 || std::abs(at0.B3) > 1e-12) {
      ok = false;
      why = "u=0 weights";
    }
    const BasisWeights at1 = unit.basis(3.0 - std::ldexp(1.0, -45));
    if (std::abs(at1.B0 - 1.0) > 1e-12 || std::abs(at1.B1 - 1.0) > 1e-12 ||
        std::abs(at1.B2 - 5.0 / 6.0) > 1e-12 ||
        std::abs(at1.B3 - 1.0 / 6.0) > 1e-12) {
      ok = false;
      why = "u=1 weights";
    }

    // Constant-twist reproduction.
    const Twist xi{Vec3(0.3, -0.1, 0.2), Vec3(0.1, 0.2, -0.15)};
    std::vector<MoCapSample> screw;
    for (int i = 0; i < 15; ++i) {
      screw.push_back(
          {0.1 * i, se3_exp(Twist{xi.rho * (0.1 * i), xi.phi * (0.1 * i)})});
    }
    const PoseSpline sspline = build_spline(screw);
    double worst_repro = 0.0;
    for (double tau = sspline.domain_begin(); tau < sspline.domain_end() - 1e-9;
         tau += 0.017) {
      const Pose ref = se3_exp(Twist{xi.rho * tau, xi.phi * tau});
      const Pose got = sspline.evaluate(tau);
      worst_repro = std::max(
          worst_repro, (got.translation - ref.translation).norm() +
                           rotation_angle(got.rotation.conjugate() * ref.rotation));
    }
    if (worst_repro > 1e-8) {
      ok = false;
      why = "constant twist " + std::to_string(worst_repro);
    }

    // C2 continuity on configurations where the curve is exactly
    // piecewise cubic, so the one-sided second differences carry no
    // truncation error: pure translation knots, and rotations about a
    // common axis (whose angle is the scalar cubic spline of the knot
    // angles).
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 0.5);
    std::vector<Pose> tknots(12), rknots(12);
    const Vec3 axis = Vec3(1, 2, -1).normalized();
    std::uniform_real_distribution<double> uni(-0.8, 0.8);
    for (int i = 0; i < 12; ++i) {
      tknots[i] = Pose(Quat::Identity(), Vec3(g(rng), g(rng), g(rng)));
      rknots[i] = Pose(so3_exp(uni(rng) * axis), Vec3::Zero());
    }
    const PoseSpline tspline(tknots, 0.0, 0.1);
    const PoseSpline rspline(rknots, 0.0, 0.1);
    const double h = 1e-3;
    double worst_c2 = 0.0, worst_c1 = 0.0;
    for (int k = 2; k <= 9; ++k) {
      const double b = 0.1 * k;
      auto p = [&](double tau) { return tspline.evaluate(tau).translation; };
      auto th = [&](double tau) {
        return so3_log(rspline.evaluate(tau).rotation).dot(axis);
      };
      // Step back just far enough to land in the previous segment; the
      // velocity itself changes by |accel| * step across the gap.
      const SplineVelocity vl = tspline.velocity(b - 1e-13);
      const SplineVelocity vr = tspline.velocity(b);
      worst_c1 = std::max(worst_c1, (vl.p_dot - vr.p_dot).norm());
      const Vec3 d2l =
          (2 * p(b) - 5 * p(b - h) + 4 * p(b - 2 * h) - p(b - 3 * h)) / (h * h);
      const Vec3 d2r =
          (2 * p(b) - 5 * p(b + h) + 4 * p(b + 2 * h) - p(b + 3 * h)) / (h * h);
      worst_c2 = std::max(worst_c2, (d2l - d2r).norm());
      const double r2l =
          (2 * th(b) - 5 * th(b - h) + 4 * th(b - 2 * h) - th(b - 3 * h)) /
          (h * h);
      const double r2r =
          (2 * th(b) - 5 * th(b + h) + 4 * th(b + 2 * h) - th(b + 3 * h)) /
          (h * h);
      worst_c2 = std::max(worst_c2, std::abs(r2l - r2r));
    }
    if (worst_c1 > 1e-8 || worst_c2 > 1e-8) {
      ok = false;
      why = "continuity c1 " + std::to_string(worst_c1) + " c2 " +
            std::to_string(worst_c2);
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "repro %.2e, c1 %.2e, c2 %.2e%s%s",
                  worst_repro, worst_c1, worst_c2, why.empty() ? "" : "; ",
                  why.c_str());
    report(4, desc, ok, buf);
  } catch (const std::exception& e) {
    report(4, desc, false, e.what());
  }
}

void criterion5() {
  const char* desc =
      "initializer sweep 0.2x-2x true extrinsics (10 levels, 5 seeds): mean "
      "errors <= 0.02 m and 0.24 deg per level, < 30 s per run";
  try {
    bool ok = true;
    double worst_trans = 0.0, worst_rot = 0.0, worst_time = 0.0;
    for (int level = 0; level < 10; ++level) {
      const double scale = 0.2 + 1.8 * level / 9.0;
      double sum_trans = 0.0, sum_rot = 0.0;
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SimConfig cfg = base_sim(60.0, seed);
        cfg.true_offset0 = 0.0;
        cfg.true_extrinsics =
            Pose(so3_exp(scale * Vec3(0.3, -0.2, 0.5)),
                 scale * Vec3(0.1, -0.05, 0.08));
        const SimOutput out = simulate(cfg);
        const auto t0 = std::chrono::steady_clock::now();
        const InitResult res = ransac_initialize(out.imu, out.mocap, InitConfig{});
        worst_time = std::max(worst_time, seconds_since(t0));
        sum_trans += (res.p_MI - cfg.true_extrinsics.translation).norm();
        sum_rot += rot_err_deg(res.q_MI, cfg.true_extrinsics.rotation);
      }
      worst_trans = std::max(worst_trans, sum_trans / 5.0);
      worst_rot = std::max(worst_rot, sum_rot / 5.0);
    }
    ok = worst_trans <= 0.02 && worst_rot <= 0.24 && worst_time < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "worst level means: %.4f m, %.3f deg; slowest run %.1f s",
                  worst_trans, worst_rot, worst_time);
    report(5, desc, ok, buf);
  } catch (const std::exception& e) {
    report(5, desc, false, e.what());
  }
}

// Shared between criteria 6 and 7.
struct NoiseRunSummary {
  double ate = 0.0, are = 0.0, rte = 0.0, rre = 0.0;
  double raw_rte = 0.0, raw_rre = 0.0;
  double worst_time = 0.0;
  bool ok = false;
};

NoiseRunSummary run_noise_suite() {
  NoiseRunSummary sum;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SimConfig cfg = base_sim(60.0, seed);
    const SimOutput out = simulate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineResult res = run_pipeline(out);
    sum.worst_time = std::max(sum.worst_time, seconds_since(t0));
    const MetricReport m =
        evaluate_trajectories(res.traj, out.truth.trajectory);
    sum.ate += m.ate_rmse / 5.0;
    sum.are += m.are_rmse / 5.0;
    sum.rte += m.rte_rmse / 5.0;
    sum.rre += m.rre_rmse / 5.0;
    const MetricReport raw = evaluate_trajectories(
        mocap_as_imu_trajectory(out, cfg), out.truth.trajectory);
    sum.raw_rte += raw.rte_rmse / 5.0;
    sum.raw_rre += raw.rre_rmse / 5.0;
  }
  sum.ok = true;
  return sum;
}

void criterion6and7() {
  const char* desc6 =
      "default noise, 60 s, 5 seeds: mean ATE < 2 mm, ARE < 0.2 deg, RTE < "
      "0.4 mm, RRE < 0.02 deg, < 120 s per run";
  const char* desc7 =
      "estimated relative errors strictly below raw MoCap propagation";
  try {
    const NoiseRunSummary s = run_noise_suite();
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "ATE %.2e m, ARE %.3f deg, RTE %.2e m, RRE %.4f deg, "
                  "slowest %.0f s",
                  s.ate, s.are * 180 / M_PI, s.rte, s.rre * 180 / M_PI,
                  s.worst_time);
    report(6, desc6,
           s.ate < 2e-3 && s.are < 0.2 * M_PI / 180.0 && s.rte < 0.4e-3 &&
               s.rre < 0.02 * M_PI / 180.0 && s.worst_time < 120.0,
           buf);
    std::snprintf(buf, sizeof(buf),
                  "RTE %.2e vs raw %.2e m, RRE %.2e vs raw %.2e rad", s.rte,
                  s.raw_rte, s.rre, s.raw_rre);
    report(7, desc7, s.rte < s.raw_rte && s.rre < s.raw_rre, buf);
  } catch (const std::exception& e) {
    report(6, desc6, false, e.what());
    report(7, desc7, false, e.what());
  }
}

void criterion8() {
  const char* desc =
      "120 s with 2 ms/min drift: piecewise offset beats a single knot by >= "
      "30% ATE and tracks the true offset within 1 ms";
  try {
    SimConfig cfg = base_sim(120.0, 3);
    cfg.clock_drift = 0.002;
    const SimOutput out = simulate(cfg);

    EstimatorConfig multi;
    multi.offset_knot_spacing = 30.0;
    const PipelineResult res_multi = run_pipeline(out, multi);
    const double ate_multi =
        evaluate_trajectories(res_multi.traj, out.truth.trajectory).ate_rmse;

    EstimatorConfig single;
    single.min_offset_knots = 1;
    const PipelineResult res_single = run_pipeline(out, single);
    const double ate_single =
        evaluate_trajectories(res_single.traj, out.truth.trajectory).ate_rmse;

    double worst_knot = 0.0;
    for (const auto& k : res_multi.pb.extrinsics.offset_knots) {
      worst_knot = std::max(
          worst_knot, std::abs(k.t_MI - out.truth.offset_at(k.t_knot)));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "ATE %.2e (multi) vs %.2e (single), worst knot error %.2e s",
                  ate_multi, ate_single, worst_knot);
    report(8, desc, ate_multi <= 0.7 * ate_single && worst_knot < 1e-3, buf);
  } catch (const std::exception& e) {
    report(8, desc, false, e.what());
  }
}

void criterion9() {
  const char* desc =
      "degenerate windows match brute force; masked half-stationary extrinsic "
      "rotation error <= 2x fully excited";
  try {
    SimConfig cfg = base_sim(60.0, 4);
    cfg.motion_period = 5.0;
    cfg.still_period = 5.0;
    const SimOutput out = simulate(cfg);

    const double w = 5.0, varpi = 0.17453;
    const auto flagged = detect_degenerate_windows(out.mocap, w, varpi);
    bool windows_ok = true;
    {
      std::vector<TimeInterval> expected;
      for (double b = out.mocap.front().tau; b < out.mocap.back().tau; b += w) {
        std::vector<const MoCapSample*> in;
        for (const auto& s : out.mocap) {
          if (s.tau >= b && s.tau < b + w) in.push_back(&s);
        }
        double max_angle = 0.0;
        for (size_t i = 0; i < in.size(); ++i) {
          for (size_t j = i + 1; j < in.size(); ++j) {
            max_angle = std::max(
                max_angle, rotation_angle(in[i]->pose.rotation.conjugate() *
                                          in[j]->pose.rotation));
          }
        }
        if (in.size() < 2 || max_angle < varpi) expected.push_back({b, b + w});
      }
      windows_ok = flagged.size() == expected.size();
      for (size_t i = 0; windows_ok && i < flagged.size(); ++i) {
        windows_ok = std::abs(flagged[i].begin - expected[i].begin) < 1e-9 &&
                     std::abs(flagged[i].end - expected[i].end) < 1e-9;
      }
    }

    const PipelineResult masked = run_pipeline(out);
    const double err_masked = rot_err_deg(masked.pb.extrinsics.q_MI,
                                          cfg.true_extrinsics.rotation);

    const SimConfig full_cfg = base_sim(60.0, 4);
    const SimOutput full = simulate(full_cfg);
    const PipelineResult excited = run_pipeline(full);
    const double err_full = rot_err_deg(excited.pb.extrinsics.q_MI,
                                        full_cfg.true_extrinsics.rotation);

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%zu flagged windows (brute force %s), rot err %.4f vs %.4f "
                  "deg",
                  flagged.size(), windows_ok ? "match" : "MISMATCH",
                  err_masked, err_full);
    report(9, desc,
           windows_ok && !flagged.empty() && err_masked <= 2.0 * err_full, buf);
  } catch (const std::exception& e) {
    report(9, desc, false, e.what());
  }
}

void criterion10() {
  const char* desc =
      "10% outliers: extrinsic errors < 0.05 m / 0.5 deg; without outliers "
      "the robust solve matches the direct solve within 1e-9";
  try {
    SimConfig cfg = base_sim(60.0, 5);
    cfg.outlier_fraction = 0.1;
    const SimOutput out = simulate(cfg);
    const PipelineResult res = run_pipeline(out);
    const double terr =
        (res.pb.extrinsics.p_MI - cfg.true_extrinsics.translation).norm();
    const double rerr =
        rot_err_deg(res.pb.extrinsics.q_MI, cfg.true_extrinsics.rotation);

    SimConfig clean_cfg = base_sim(30.0, 5);
    clean_cfg.noise_scale = 0.0;
    clean_cfg.true_offset0 = 0.0;
    const SimOutput clean = simulate(clean_cfg);
    const InitResult init = ransac_initialize(clean.imu, clean.mocap, InitConfig{});
    EstimatorConfig robust_cfg;
    FactorGraphProblem pb_r = build_problem(clean.imu, clean.mocap, init, robust_cfg);
    optimize(pb_r);
    EstimatorConfig direct_cfg;
    direct_cfg.huber_delta = 1e30;  // effectively plain least squares
    FactorGraphProblem pb_d = build_problem(clean.imu, clean.mocap, init, direct_cfg);
    optimize(pb_d);
    double diff = (pb_r.extrinsics.p_MI - pb_d.extrinsics.p_MI).norm() +
                  rotation_angle(pb_r.extrinsics.q_MI.conjugate() *
                                 pb_d.extrinsics.q_MI);
    for (size_t i = 0; i < pb_r.states.size(); ++i) {
      diff = std::max(diff, (pb_r.states[i].p_WI - pb_d.states[i].p_WI).norm());
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "outlier run: %.4f m, %.3f deg; clean robust-direct gap "
                  "%.2e",
                  terr, rerr, diff);
    report(10, desc, terr < 0.05 && rerr < 0.5 && diff < 1e-9, buf);
  } catch (const std::exception& e) {
    report(10, desc, false, e.what());
  }
}

void criterion11() {
  const char* desc =
      "metric invariances: relative errors exactly transform-invariant, "
      "aligned ATE < 1e-9 m, zero on identical inputs";
  try {
    Trajectory ref;
    for (int i = 0; i <= 1000; ++i) {
      const double t = 0.02 * i;
      Pose T;
      T.translation =
          Vec3(std::sin(0.7 * t), std::cos(0.5 * t), 0.3 * std::sin(1.1 * t));
      T.rotation = so3_exp(Vec3(0.2 * std::sin(0.9 * t),
                                0.3 * std::cos(0.6 * t), 0.25 * std::sin(0.4 * t)));
      ref.push_back({t, T});
    }
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1e-3);
    Trajectory est = ref;
    for (auto& s : est) {
      s.pose.translation += Vec3(g(rng), g(rng), g(rng));
      s.pose.rotation =
          (s.pose.rotation * so3_exp(Vec3(g(rng), g(rng), g(rng)))).normalized();
    }
    const Pose rigid(so3_exp(Vec3(0.4, -0.7, 1.1)), Vec3(3, -2, 5));
    Trajectory moved = est;
    for (auto& s : moved) s.pose = rigid * s.pose;

    const auto pairs_a = associate_and_resample(est, ref);
    const auto pairs_b = associate_and_resample(moved, ref);
    double rte_a, rre_a, rte_b, rre_b;
    relative_errors(pairs_a, 0.02, &rte_a, &rre_a);
    relative_errors(pairs_b, 0.02, &rte_b, &rre_b);
    // The metric is exactly invariant; applying the transform perturbs
    // the stored poses at machine precision, so compare at round-off.
    const bool invariant = std::abs(rte_a - rte_b) <= 1e-11 * rte_a &&
                           std::abs(rre_a - rre_b) <= 1e-11 * rre_a;

    Trajectory moved_ref = ref;
    for (auto& s : moved_ref) s.pose = rigid * s.pose;
    const MetricReport aligned = evaluate_trajectories(moved_ref, ref);
    const MetricReport self = evaluate_trajectories(ref, ref);

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "invariant=%d, aligned ATE %.2e m, self ATE %.2e", invariant,
                  aligned.ate_rmse, self.ate_rmse);
    report(11, desc,
           invariant && aligned.ate_rmse < 1e-9 && self.ate_rmse == 0.0 &&
               self.are_rmse == 0.0 && self.rte_rmse == 0.0 &&
               self.rre_rmse == 0.0,
           buf);
  } catch (const std::exception& e) {
    report(11, desc, false, e.what());
  }
}

void criterion12() {
  const char* desc =
      "same-seed simulate+estimate reruns produce byte-identical trajectory "
      "and calibration outputs";
  try {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "gtforge_acceptance_c12";
    fs::create_directories(dir);

    auto run_once = [&](const std::string& tag) {
      const SimConfig cfg = base_sim(20.0, 7);
      const SimOutput out = simulate(cfg);
      const PipelineResult res = run_pipeline(out);
      const std::string tum = (dir / ("gt_" + tag + ".tum")).string();
      write_tum(tum, res.traj);
      std::ostringstream rep;
      rep.precision(17);
      rep << res.pb.extrinsics.q_MI.w() << "," << res.pb.extrinsics.q_MI.x()
          << "," << res.pb.extrinsics.q_MI.y() << ","
          << res.pb.extrinsics.q_MI.z() << "," << res.pb.extrinsics.p_MI.x()
          << "," << res.pb.extrinsics.p_MI.y() << ","
          << res.pb.extrinsics.p_MI.z() << "," << res.pb.gravity.roll << ","
          << res.pb.gravity.pitch << "," << res.rep.final_cost;
      for (const auto& k : res.pb.extrinsics.offset_knots) {
        rep << "," << k.t_knot << "," << k.t_MI;
      }
      const std::string report_path = (dir / ("calib_" + tag + ".csv")).string();
      std::ofstream(report_path) << rep.str() << "\n";
      return std::pair{file_bytes(tum), file_bytes(report_path)};
    };
    const auto a = run_once("a");
    const auto b = run_once("b");
    fs::remove_all(dir);
    const bool ok = !a.first.empty() && a.first == b.first && a.second == b.second;
    report(12, desc, ok,
           ok ? "trajectory and report bytes identical" : "outputs differ");
  } catch (const std::exception& e) {
    report(12, desc, false, e.what());
  }
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6and7();
  criterion8();
  criterion9();
  criterion10();
  criterion11();
  criterion12();
  if (g_failures == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
