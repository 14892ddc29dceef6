#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gtforge/estimator.h"
#include "gtforge/initializer.h"
#include "gtforge/io.h"
#include "gtforge/metrics.h"
#include "gtforge/simulator.h"

namespace {

using namespace gtforge;

// Every subcommand accepts --config <file> with the same key = value
// format; explicit command-line flags win over config values.
void add_config(CLI::App* app) {
  app->set_config("--config", "", "Read options from a key = value config file");
  app->allow_config_extras(CLI::config_extras_mode::ignore);
}

// Seed precedence: explicit flag > GT_FORGE_SEED env > config/default.
void apply_seed_env(const CLI::App* app, const std::string& flag, std::uint64_t* seed) {
  if (app->count(flag) > 0) return;
  if (const char* env = std::getenv("GT_FORGE_SEED")) {
    *seed = std::strtoull(env, nullptr, 10);
  }
}

void format9(std::ofstream& f, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  f << buf;
}

int cmd_simulate(CLI::App& app) {
  CLI::App* cmd = app.add_subcommand("simulate", "Generate IMU and MoCap streams");
  add_config(cmd);
  auto cfg = std::make_shared<SimConfig>();
  auto out_dir = std::make_shared<std::string>(".");
  auto offset0 = std::make_shared<double>(0.005);
  auto roll_deg = std::make_shared<double>(0.0);
  auto pitch_deg = std::make_shared<double>(0.0);
  auto ext_p = std::make_shared<std::vector<double>>(std::vector<double>{0.1, -0.05, 0.08});
  auto ext_rotvec = std::make_shared<std::vector<double>>(std::vector<double>{0.3, -0.2, 0.5});
  cmd->add_option("--out-dir", *out_dir, "Output directory");
  cmd->add_option("--duration", cfg->duration, "Sequence length, s");
  cmd->add_option("--imu-rate", cfg->imu_rate, "IMU rate, Hz");
  cmd->add_option("--mocap-rate", cfg->mocap_rate, "MoCap rate, Hz");
  cmd->add_option("--noise-scale", cfg->noise_scale, "Global noise multiplier");
  cmd->add_option("--imu-noise-scale", cfg->imu_noise_scale, "IMU noise multiplier");
  cmd->add_option("--mocap-noise-scale", cfg->mocap_noise_scale, "MoCap noise multiplier");
  cmd->add_option("--accel-noise-density", cfg->imu_noise.accel_noise_density, "m/s^2/sqrt(Hz)");
  cmd->add_option("--accel-random-walk", cfg->imu_noise.accel_random_walk, "m/s^3/sqrt(Hz)");
  cmd->add_option("--gyro-noise-density", cfg->imu_noise.gyro_noise_density, "rad/s/sqrt(Hz)");
  cmd->add_option("--gyro-random-walk", cfg->imu_noise.gyro_random_walk, "rad/s^2/sqrt(Hz)");
  cmd->add_option("--mocap-trans-noise", cfg->mocap_noise.trans_noise_density, "m/sqrt(Hz)");
  cmd->add_option("--mocap-rot-noise", cfg->mocap_noise.rot_noise_density, "rad/sqrt(Hz)");
  cmd->add_option("--offset", *offset0, "Constant MoCap-IMU time offset, s");
  cmd->add_option("--clock-drift", cfg->clock_drift, "Offset drift, s per minute");
  cmd->add_option("--gravity-roll", *roll_deg, "Gravity alignment roll, deg");
  cmd->add_option("--gravity-pitch", *pitch_deg, "Gravity alignment pitch, deg");
  cmd->add_option("--outlier-fraction", cfg->outlier_fraction, "MoCap outlier fraction");
  cmd->add_option("--extrinsic-translation", *ext_p, "p_MI, m")->expected(3);
  cmd->add_option("--extrinsic-rotvec", *ext_rotvec, "Rotation vector of q_MI, rad")->expected(3);
  cmd->add_option("--trans-amplitude", cfg->trans_amplitude, "m");
  cmd->add_option("--rot-amplitude", cfg->rot_amplitude, "rad");
  cmd->add_option("--motion-period", cfg->motion_period, "s of motion per cycle, 0=continuous");
  cmd->add_option("--still-period", cfg->still_period, "s of stillness per cycle");
  cmd->add_option("--base-trajectory", cfg->base_trajectory_tum, "TUM file as base trajectory");
  cmd->add_option("--seed", cfg->rng_seed, "RNG seed");

  cmd->callback([=]() {
    apply_seed_env(cmd, "--seed", &cfg->rng_seed);
    cfg->true_offset0 = *offset0;
    cfg->gravity_roll = *roll_deg * M_PI / 180.0;
    cfg->gravity_pitch = *pitch_deg * M_PI / 180.0;
    cfg->true_extrinsics =
        Pose(so3_exp(Vec3((*ext_rotvec)[0], (*ext_rotvec)[1], (*ext_rotvec)[2])),
             Vec3((*ext_p)[0], (*ext_p)[1], (*ext_p)[2]));

    const SimOutput out = simulate(*cfg);
    write_imu_csv(*out_dir + "/imu.csv", out.imu);
    write_mocap_csv(*out_dir + "/mocap.csv", out.mocap);
    write_tum(*out_dir + "/truth.tum", out.truth.trajectory);

    std::ofstream meta(*out_dir + "/truth_meta.csv");
    if (!meta) throw IoError("cannot open for writing: " + *out_dir + "/truth_meta.csv");
    meta << "t,offset,bax,bay,baz,bgx,bgy,bgz\n";
    for (size_t k = 0; k < out.imu.size(); ++k) {
      const double t = out.imu[k].t;
      const Vec3& ba = out.truth.bias_a[k];
      const Vec3& bg = out.truth.bias_g[k];
      const double vals[8] = {t, out.truth.offset_at(t), ba.x(), ba.y(), ba.z(),
                              bg.x(), bg.y(), bg.z()};
      for (int i = 0; i < 8; ++i) {
        if (i) meta << ',';
        format9(meta, vals[i]);
      }
      meta << '\n';
    }
    std::cout << "wrote " << out.imu.size() << " IMU samples, " << out.mocap.size()
              << " MoCap samples to " << *out_dir << "\n";
  });
  return 0;
}

int cmd_estimate(CLI::App& app) {
  CLI::App* cmd = app.add_subcommand("estimate", "Calibrate and estimate the trajectory");
  add_config(cmd);
  auto imu_path = std::make_shared<std::string>();
  auto mocap_path = std::make_shared<std::string>();
  auto out_tum = std::make_shared<std::string>("gt.tum");
  auto report_csv = std::make_shared<std::string>("calib_report.csv");
  auto ecfg = std::make_shared<EstimatorConfig>();
  auto icfg = std::make_shared<InitConfig>();
  auto output_rate = std::make_shared<double>(100.0);
  cmd->add_option("--imu", *imu_path, "imu.csv input")->required();
  cmd->add_option("--mocap", *mocap_path, "mocap.csv input")->required();
  cmd->add_option("--out", *out_tum, "Output trajectory (TUM)");
  cmd->add_option("--report", *report_csv, "Calibration report CSV");
  cmd->add_option("--state-rate", ecfg->state_rate, "Inertial state rate, Hz");
  cmd->add_option("--offset-knot-spacing", ecfg->offset_knot_spacing, "s");
  cmd->add_option("--offset-knots", ecfg->min_offset_knots,
                  "Minimum offset knot count (1 = constant offset)");
  cmd->add_option("--degeneracy-window", ecfg->degeneracy_window, "s");
  cmd->add_option("--degeneracy-angle", ecfg->degeneracy_angle, "rad");
  cmd->add_flag_callback(
      "--no-degeneracy-masking", [ecfg]() { ecfg->degeneracy_masking = false; },
      "Disable extrinsic masking in degenerate windows");
  cmd->add_option("--huber-delta", ecfg->huber_delta, "Whitened units");
  cmd->add_option("--max-iterations", ecfg->max_iterations, "LM iteration cap");
  cmd->add_option("--accel-noise-density", ecfg->imu_noise.accel_noise_density, "m/s^2/sqrt(Hz)");
  cmd->add_option("--accel-random-walk", ecfg->imu_noise.accel_random_walk, "m/s^3/sqrt(Hz)");
  cmd->add_option("--gyro-noise-density", ecfg->imu_noise.gyro_noise_density, "rad/s/sqrt(Hz)");
  cmd->add_option("--gyro-random-walk", ecfg->imu_noise.gyro_random_walk, "rad/s^2/sqrt(Hz)");
  cmd->add_option("--mocap-trans-noise", ecfg->mocap_trans_noise_density, "m/sqrt(Hz)");
  cmd->add_option("--mocap-rot-noise", ecfg->mocap_rot_noise_density, "rad/sqrt(Hz)");
  cmd->add_option("--mocap-rate", ecfg->mocap_rate, "Hz, for the factor covariance");
  cmd->add_option("--kernel-mu", icfg->mu, "Screw-consistency kernel amplification");
  cmd->add_option("--pair-stride", icfg->pair_stride, "s between init constraint pairs");
  cmd->add_option("--ransac-iters", icfg->ransac_iters, "RANSAC iterations");
  cmd->add_option("--max-offset-search", icfg->max_offset_search, "s");
  cmd->add_option("--output-rate", *output_rate, "Output trajectory rate, Hz");
  cmd->add_option("--seed", icfg->rng_seed, "RNG seed");

  cmd->callback([=]() {
    apply_seed_env(cmd, "--seed", &icfg->rng_seed);
    icfg->imu_noise = ecfg->imu_noise;
    const auto imu = read_imu_csv(*imu_path);
    CsvReadStats stats;
    const auto mocap = read_mocap_csv(*mocap_path, &stats);
    if (stats.rows_rejected > 0) {
      std::cerr << "warning: rejected " << stats.rows_rejected
                << " mocap rows with bad quaternion norm\n";
    }
    const InitResult init = ransac_initialize(imu, mocap, *icfg);
    FactorGraphProblem problem = build_problem(imu, mocap, init, *ecfg);
    const SolveReport report = optimize(problem);
    const Trajectory traj = extract_trajectory(problem.states, *output_rate);
    write_tum(*out_tum, traj);

    std::ofstream rep(*report_csv);
    if (!rep) throw IoError("cannot open for writing: " + *report_csv);
    rep << "key,value\n";
    auto row = [&](const std::string& key, double v) {
      rep << key << ',';
      format9(rep, v);
      rep << '\n';
    };
    const Quat& q = problem.extrinsics.q_MI;
    row("q_MI_w", q.w());
    row("q_MI_x", q.x());
    row("q_MI_y", q.y());
    row("q_MI_z", q.z());
    row("p_MI_x", problem.extrinsics.p_MI.x());
    row("p_MI_y", problem.extrinsics.p_MI.y());
    row("p_MI_z", problem.extrinsics.p_MI.z());
    for (size_t j = 0; j < problem.extrinsics.offset_knots.size(); ++j) {
      row("offset_knot_t_" + std::to_string(j), problem.extrinsics.offset_knots[j].t_knot);
      row("offset_knot_value_" + std::to_string(j), problem.extrinsics.offset_knots[j].t_MI);
    }
    row("gravity_roll", problem.gravity.roll);
    row("gravity_pitch", problem.gravity.pitch);
    row("imu_rms", report.imu_rms);
    row("mocap_rms", report.mocap_rms);
    row("bias_rms", report.bias_rms);
    row("final_cost", report.final_cost);
    row("iterations", report.iterations);
    row("converged", report.converged ? 1 : 0);
    row("degenerate_windows", report.degenerate_window_count);
    row("mocap_factors_dropped", problem.mocap_factors_dropped);

    std::cout << "extrinsic rotation q_MI (w x y z): " << q.w() << " " << q.x()
              << " " << q.y() << " " << q.z() << "\n"
              << "extrinsic translation p_MI (m): "
              << problem.extrinsics.p_MI.transpose() << "\n"
              << "gravity roll/pitch (rad): " << problem.gravity.roll << " "
              << problem.gravity.pitch << "\n"
              << "offset knots (t, t_MI):";
    for (const auto& k : problem.extrinsics.offset_knots) {
      std::cout << " (" << k.t_knot << ", " << k.t_MI << ")";
    }
    std::cout << "\nfactor RMS (imu/mocap/bias, whitened): " << report.imu_rms
              << " " << report.mocap_rms << " " << report.bias_rms << "\n"
              << "degenerate windows: " << report.degenerate_window_count << "\n"
              << (report.converged ? "converged" : "not converged") << " ("
              << report.termination << ") after " << report.iterations
              << " iterations\n"
              << "wrote " << traj.size() << " poses to " << *out_tum << "\n";
  });
  return 0;
}

int cmd_evaluate(CLI::App& app) {
  CLI::App* cmd = app.add_subcommand("evaluate", "Compare two TUM trajectories");
  add_config(cmd);
  auto est_path = std::make_shared<std::string>();
  auto ref_path = std::make_shared<std::string>();
  auto out_csv = std::make_shared<std::string>("metrics.csv");
  auto rate = std::make_shared<double>(50.0);
  auto max_dt = std::make_shared<double>(0.02);
  cmd->add_option("--est", *est_path, "Estimated trajectory (TUM)")->required();
  cmd->add_option("--ref", *ref_path, "Reference trajectory (TUM)")->required();
  cmd->add_option("--out", *out_csv, "Metrics CSV output");
  cmd->add_option("--rate", *rate, "Resampling rate, Hz");
  cmd->add_option("--max-dt", *max_dt, "Association tolerance, s");

  cmd->callback([=]() {
    const Trajectory est = read_tum(*est_path);
    const Trajectory ref = read_tum(*ref_path);
    const MetricReport r = evaluate_trajectories(est, ref, *rate, *max_dt);

    std::ofstream out(*out_csv);
    if (!out) throw IoError("cannot open for writing: " + *out_csv);
    out << "ate_rmse_m,are_rmse_rad,rte_rmse_m,rre_rmse_rad,n_associated\n";
    const double vals[4] = {r.ate_rmse, r.are_rmse, r.rte_rmse, r.rre_rmse};
    for (int i = 0; i < 4; ++i) {
      format9(out, vals[i]);
      out << ',';
    }
    out << r.n_associated << '\n';

    const double deg = 180.0 / M_PI;
    std::printf("metric      value\n");
    std::printf("ATE (m)     %.6g\n", r.ate_rmse);
    std::printf("ARE (deg)   %.6g\n", r.are_rmse * deg);
    std::printf("RTE (m)     %.6g\n", r.rte_rmse);
    std::printf("RRE (deg)   %.6g\n", r.rre_rmse * deg);
    std::printf("pairs       %d\n", r.n_associated);
  });
  return 0;
}

int cmd_check_jacobians(CLI::App& app) {
  CLI::App* cmd = app.add_subcommand("check-jacobians",
                                     "Validate analytic Jacobians by finite differences");
  add_config(cmd);
  auto trials = std::make_shared<int>(100);
  auto seed = std::make_shared<std::uint64_t>(1234);
  auto tol = std::make_shared<double>(1e-4);
  cmd->add_option("--trials", *trials, "Random configurations per block");
  cmd->add_option("--seed", *seed, "RNG seed");
  cmd->add_option("--tol", *tol, "Relative error threshold");

  cmd->callback([=]() {
    apply_seed_env(cmd, "--seed", seed.get());
    const auto checks = check_jacobians(*trials, *seed);
    bool all_ok = true;
    for (const auto& c : checks) {
      const bool ok = c.max_rel_error < *tol;
      all_ok = all_ok && ok;
      std::printf("%-20s max_rel_error=%.3e  %s\n", c.block.c_str(),
                  c.max_rel_error, ok ? "pass" : "FAIL");
    }
    if (!all_ok) throw EstimatorError("jacobian check failed");
  });
  return 0;
}

int report_error(const char* code, const std::string& what) {
  std::cerr << "GTFORGE_ERROR code=" << code << " message=\"" << what << "\"\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoCap + IMU spatiotemporal calibration and ground-truth trajectory estimation"};
  app.require_subcommand(1);
  cmd_simulate(app);
  cmd_estimate(app);
  cmd_evaluate(app);
  cmd_check_jacobians(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const NoMotionError& e) {
    return report_error("NoMotion", e.what());
  } catch (const OffsetAtSearchBoundaryError& e) {
    return report_error("OffsetAtSearchBoundary", e.what());
  } catch (const DegenerateAxesError& e) {
    return report_error("DegenerateAxes", e.what());
  } catch (const IllConditionedError& e) {
    return report_error("IllConditioned", e.what());
  } catch (const ConsensusFailureError& e) {
    return report_error("ConsensusFailure", e.what());
  } catch (const NonMonotoneTimeError& e) {
    return report_error("NonMonotoneTime", e.what());
  } catch (const ParseError& e) {
    return report_error("Parse", e.what());
  } catch (const OutOfDomainError& e) {
    return report_error("OutOfDomain", e.what());
  } catch (const GapTooLargeError& e) {
    return report_error("GapTooLarge", e.what());
  } catch (const TooFewSamplesError& e) {
    return report_error("TooFewSamples", e.what());
  } catch (const InsufficientCoverageError& e) {
    return report_error("InsufficientCoverage", e.what());
  } catch (const EmptyOverlapError& e) {
    return report_error("EmptyOverlap", e.what());
  } catch (const NumericalFailureError& e) {
    return report_error("NumericalFailure", e.what());
  } catch (const NoOverlapError& e) {
    return report_error("NoOverlap", e.what());
  } catch (const std::exception& e) {
    return report_error("Internal", e.what());
  }
  return 0;
}
