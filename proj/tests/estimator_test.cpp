#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gtforge/estimator.h"
#include "gtforge/metrics.h"
#include "gtforge/simulator.h"
#include "test_util.h"

using namespace gtforge;
using testutil::pose_distance;

namespace {

SimConfig noiseless_sim(double duration = 60.0) {
  SimConfig cfg;
  cfg.duration = duration;
  cfg.noise_scale = 0.0;
  cfg.clock_drift = 0.0;
  cfg.true_extrinsics =
      Pose(so3_exp(Vec3(0.3, -0.2, 0.5)), Vec3(0.1, -0.05, 0.08));
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

// Overwrite the problem's initial guess with the exact simulated truth.
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

InertialState static_state(double t) {
  InertialState s;
  s.t = t;
  s.p_WI = Vec3(1, 2, 3);
  return s;
}

Preintegration static_preint(double t0, double t1, double rate = 500.0) {
  std::vector<ImuSample> imu;
  const double dt = 1.0 / rate;
  for (double t = t0 - 2 * dt; t < t1 + 2 * dt; t += dt) {
    imu.push_back({t, Vec3(0, 0, kGravityMagnitude), Vec3::Zero()});
  }
  return preintegrate(imu, t0, t1, Vec3::Zero(), Vec3::Zero(), ImuNoiseParams{});
}

}  // namespace

TEST_CASE("static states give near-zero imu residual") {
  const InertialState sk = static_state(0.0);
  const InertialState sk1 = static_state(0.5);
  const GravityAlign grav;
  const auto r = imu_residual(sk, sk1, grav, static_preint(0.0, 0.5));
  CHECK(r.norm() < 1e-10);
}

TEST_CASE("position residual responds exactly to a position perturbation") {
  const InertialState sk = static_state(0.0);
  InertialState sk1 = static_state(0.01);
  const GravityAlign grav;
  const Preintegration pre = static_preint(0.0, 0.01);
  const auto r0 = imu_residual(sk, sk1, grav, pre);
  sk1.p_WI += Vec3(1e-3, 0, 0);
  const auto r1 = imu_residual(sk, sk1, grav, pre);
  // With q_k = identity the change lands on the position block unscaled.
  CHECK((r1.head<3>() - r0.head<3>() - Vec3(1e-3, 0, 0)).norm() < 1e-15);
  CHECK((r1.tail<6>() - r0.tail<6>()).norm() < 1e-15);
}

TEST_CASE("whitened bias random-walk residual") {
  InertialState sk = static_state(0.0);
  InertialState sk1 = static_state(0.01);
  sk1.b_a = Vec3(1e-3, 0, 0);
  const auto r = bias_residuals(sk, sk1, ImuNoiseParams{});
  // sigma = 1.0e-3 * sqrt(0.01) = 1e-4, so the first component is 10.
  CHECK(r(0) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(std::abs(r(1)) < 1e-15);
  CHECK(r.tail<3>().norm() < 1e-15);
}

TEST_CASE("offset knot interpolation") {
  ExtrinsicState ext;
  ext.offset_knots = {{0.0, 0.004}, {30.0, 0.006}};
  CHECK(ext.offset_at(0.0) == 0.004);
  CHECK(ext.offset_at(15.0) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(ext.offset_at(30.0) == 0.006);
  // Clamped outside the knot span.
  CHECK(ext.offset_at(-5.0) == 0.004);
  CHECK(ext.offset_at(40.0) == 0.006);

  int r = -1, s = -1;
  double lambda = -1;
  ext.knot_weights(0.0, &r, &s, &lambda);
  CHECK(lambda == 0.0);
  ext.knot_weights(15.0, &r, &s, &lambda);
  CHECK(r == 0);
  CHECK(s == 1);
  CHECK(lambda == doctest::Approx(0.5).epsilon(1e-12));

  ExtrinsicState single;
  single.offset_knots = {{10.0, 0.007}};
  CHECK(single.offset_at(3.0) == 0.007);
  single.knot_weights(3.0, &r, &s, &lambda);
  CHECK(r == s);
  CHECK(lambda == 0.0);
}

TEST_CASE("gravity alignment block") {
  GravityAlign g;
  g.roll = 0.12;
  g.pitch = -0.07;
  CHECK((g.g_W() - gravity_world(g.roll, g.pitch)).norm() < 1e-14);
  const auto J = g.g_jacobian();
  const double h = 1e-7;
  GravityAlign gp = g, gm = g;
  gp.roll += h;
  gm.roll -= h;
  CHECK((J.col(0) - (gp.g_W() - gm.g_W()) / (2 * h)).norm() < 1e-6);
  gp = gm = g;
  gp.pitch += h;
  gm.pitch -= h;
  CHECK((J.col(1) - (gp.g_W() - gm.g_W()) / (2 * h)).norm() < 1e-6);
}

TEST_CASE("time offset jacobian structure") {
  // Static spline: the offset column vanishes because the measurement
  // does not depend on where in time it is sampled.
  std::vector<MoCapSample> mocap;
  for (int i = 0; i < 20; ++i) {
    mocap.push_back({0.1 * i, Pose(so3_exp(Vec3(0.1, 0.2, 0.3)), Vec3(1, 2, 3))});
  }
  const PoseSpline spline = build_spline(mocap);
  ExtrinsicState ext;
  ext.offset_knots = {{0.0, 0.0}, {1.0, 0.0}};
  InertialState s = static_state(0.5);
  s.p_WI = Vec3(1, 2, 3);
  s.q_WI = so3_exp(Vec3(0.1, 0.2, 0.3));
  const auto J = time_offset_jacobian(s, ext, spline);
  CHECK(J.cwiseAbs().maxCoeff() < 1e-10);

  // Halfway between knots both columns carry equal weight.
  std::vector<MoCapSample> moving;
  const Twist xi{Vec3(0.2, 0.1, -0.1), Vec3(0.05, -0.1, 0.15)};
  for (int i = 0; i < 20; ++i) {
    moving.push_back({0.1 * i, se3_exp(Twist{xi.rho * (0.1 * i), xi.phi * (0.1 * i)})});
  }
  const PoseSpline mspline = build_spline(moving);
  int r = -1, sk = -1;
  const auto Jm = time_offset_jacobian(static_state(0.5), ext, mspline, &r, &sk);
  CHECK(r == 0);
  CHECK(sk == 1);
  CHECK((Jm.col(0) - Jm.col(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Jm.cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("degenerate window detection matches brute force") {
  SimConfig cfg = noiseless_sim(40.0);
  cfg.motion_period = 5.0;
  cfg.still_period = 5.0;
  const SimOutput out = simulate(cfg);
  const double w = 5.0, varpi = 0.17453;
  const auto flagged = detect_degenerate_windows(out.mocap, w, varpi);

  // Brute force: full pairwise maximum over every pose in each window
  // (no subsampling). The simulated motion is decisively above or below
  // the threshold in every window, so both evaluations must agree.
  std::vector<TimeInterval> expected;
  const double tau0 = out.mocap.front().tau;
  for (double b = tau0; b < out.mocap.back().tau; b += w) {
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
  REQUIRE(flagged.size() == expected.size());
  for (size_t i = 0; i < flagged.size(); ++i) {
    CHECK(flagged[i].begin == doctest::Approx(expected[i].begin).epsilon(1e-12));
    CHECK(flagged[i].end == doctest::Approx(expected[i].end).epsilon(1e-12));
  }
  CHECK(!flagged.empty());

  // Fully excited default motion yields no degenerate windows.
  const SimOutput excited = simulate(noiseless_sim(30.0));
  CHECK(detect_degenerate_windows(excited.mocap, w, varpi).empty());
}

TEST_CASE("build_problem structure for 60 s at the default rates") {
  const SimConfig cfg = noiseless_sim(60.0);
  const SimOutput out = simulate(cfg);
  const EstimatorConfig ecfg;
  FactorGraphProblem pb = build_problem(out.imu, out.mocap, truth_init(cfg), ecfg);
  CHECK(pb.states.size() >= 5990);
  CHECK(pb.states.size() <= 6001);
  CHECK(pb.preintegrations.size() == pb.states.size() - 1);
  CHECK(pb.extrinsics.offset_knots.size() == 3);
  for (size_t i = 1; i < pb.states.size(); ++i) {
    CHECK(pb.states[i].t - pb.states[i - 1].t ==
          doctest::Approx(0.01).epsilon(1e-9));
  }
}

TEST_CASE("a mocap gap drops the affected factors") {
  const SimConfig cfg = noiseless_sim(30.0);
  const SimOutput out = simulate(cfg);
  std::vector<MoCapSample> gappy;
  for (const auto& s : out.mocap) {
    if (s.tau < 10.0 || s.tau > 11.0) gappy.push_back(s);
  }
  EstimatorConfig ecfg;
  ecfg.max_iterations = 1;
  FactorGraphProblem pb = build_problem(out.imu, gappy, truth_init(cfg), ecfg);
  set_truth_states(pb, out);
  optimize(pb);
  CHECK(pb.mocap_factors_dropped > 50);
  CHECK(pb.mocap_factors_dropped < 250);
}

TEST_CASE("noiseless residuals vanish at the truth") {
  const SimConfig cfg = noiseless_sim(30.0);
  const SimOutput out = simulate(cfg);
  const EstimatorConfig ecfg;
  FactorGraphProblem pb = build_problem(out.imu, out.mocap, truth_init(cfg), ecfg);
  set_truth_states(pb, out);
  GravityAlign grav;
  grav.roll = cfg.gravity_roll;
  grav.pitch = cfg.gravity_pitch;
  double max_imu = 0.0, max_mocap = 0.0;
  for (size_t k = 0; k + 1 < pb.states.size(); ++k) {
    max_imu = std::max(max_imu, imu_residual(pb.states[k], pb.states[k + 1],
                                             grav, pb.preintegrations[k])
                                    .norm());
  }
  for (const auto& s : pb.states) {
    if (!pb.spline.in_domain(s.t + pb.extrinsics.offset_at(s.t))) continue;
    max_mocap =
        std::max(max_mocap, mocap_residual(s, pb.extrinsics, pb.spline).norm());
  }
  CHECK(max_imu < 1e-5);
  CHECK(max_mocap < 1e-5);
}

TEST_CASE("optimize from the truth converges immediately") {
  const SimConfig cfg = noiseless_sim(20.0);
  const SimOutput out = simulate(cfg);
  EstimatorConfig ecfg;
  FactorGraphProblem pb = build_problem(out.imu, out.mocap, truth_init(cfg), ecfg);
  set_truth_states(pb, out);
  const SolveReport rep = optimize(pb);
  CHECK(rep.converged);
  // The midpoint preintegration leaves a small irreducible whitened cost
  // even on noiseless data, so the floor is near zero but not exactly it.
  CHECK(rep.final_cost < 1.0);
  // Accepted costs are monotonically non-increasing.
  for (size_t i = 1; i < rep.iteration_costs.size(); ++i) {
    CHECK(rep.iteration_costs[i] <= rep.iteration_costs[i - 1] + 1e-15);
  }
  // The solution stays at the truth.
  const Trajectory est = extract_trajectory(pb.states, 50.0);
  Trajectory ref;
  for (const auto& kin : out.truth.trajectory) ref.push_back({kin.t, kin.pose});
  const MetricReport mr = evaluate_trajectories(est, ref, 50.0);
  CHECK(mr.ate_rmse < 1e-6);
  CHECK((pb.extrinsics.p_MI - cfg.true_extrinsics.translation).norm() < 1e-5);
  CHECK(rotation_angle(pb.extrinsics.q_MI.conjugate() *
                       cfg.true_extrinsics.rotation) < 1e-5);
}

TEST_CASE("optimize corrects a perturbed initial guess") {
  const SimConfig cfg = noiseless_sim(20.0);
  const SimOutput out = simulate(cfg);
  InitResult init = truth_init(cfg);
  init.p_MI += Vec3(0.02, -0.01, 0.015);
  init.q_MI = (init.q_MI * so3_exp(Vec3(0.01, -0.02, 0.015))).normalized();
  EstimatorConfig ecfg;
  FactorGraphProblem pb = build_problem(out.imu, out.mocap, init, ecfg);
  const SolveReport rep = optimize(pb);
  CHECK(rep.converged);
  CHECK((pb.extrinsics.p_MI - cfg.true_extrinsics.translation).norm() < 1e-4);
  CHECK(rotation_angle(pb.extrinsics.q_MI.conjugate() *
                       cfg.true_extrinsics.rotation) < 1e-4);
  for (size_t i = 1; i < rep.iteration_costs.size(); ++i) {
    CHECK(rep.iteration_costs[i] <= rep.iteration_costs[i - 1] + 1e-15);
  }
}

TEST_CASE("extract_trajectory") {
  std::vector<InertialState> states;
  const Twist xi{Vec3(0.3, -0.1, 0.2), Vec3(0.1, 0.15, -0.05)};
  for (int i = 0; i <= 100; ++i) {
    const double t = 0.01 * i;
    const Pose T = se3_exp(Twist{xi.rho * t, xi.phi * t});
    InertialState s;
    s.t = t;
    s.p_WI = T.translation;
    s.q_WI = T.rotation;
    states.push_back(s);
  }
  SUBCASE("rate equal to the state rate passes through") {
    const Trajectory traj = extract_trajectory(states, 100.0);
    REQUIRE(traj.size() == states.size());
    for (size_t i = 0; i < traj.size(); ++i) {
      CHECK(std::abs(traj[i].t - states[i].t) < 1e-12);
      CHECK(pose_distance(traj[i].pose, Pose(states[i].q_WI, states[i].p_WI)) <
            1e-12);
    }
  }
  SUBCASE("midpoints follow the constant twist") {
    const Trajectory traj = extract_trajectory(states, 200.0);
    for (size_t i = 1; i < traj.size(); i += 2) {
      const double t = traj[i].t;
      const Pose expected = se3_exp(Twist{xi.rho * t, xi.phi * t});
      CHECK(pose_distance(traj[i].pose, expected) < 1e-9);
    }
  }
}

TEST_CASE("analytic jacobians match finite differences") {
  const auto checks = check_jacobians(20, 777);
  CHECK(!checks.empty());
  for (const auto& c : checks) {
    INFO(c.block);
    CHECK(c.max_rel_error < 1e-4);
  }
}
