#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gtforge/estimator.h"
#include "gtforge/initializer.h"
#include "gtforge/io.h"
#include "gtforge/metrics.h"
#include "gtforge/simulator.h"
#include "gtforge/spline.h"
#include "gtforge/trajectory.h"

namespace py = pybind11;
using namespace gtforge;

namespace {

// Quaternions cross the boundary as scalar-first (w, x, y, z) 4-vectors.
Vec4 get_quat(const Quat& q) { return quat_coeffs_wxyz(q); }
Quat set_quat(const Vec4& v) { return quat_from_wxyz(v).normalized(); }

}  // namespace

PYBIND11_MODULE(_gtforge, m) {
  m.doc() = "MoCap+IMU ground-truth trajectory estimation core";

  py::register_exception<GeometryError>(m, "GeometryError", PyExc_RuntimeError);
  py::register_exception<SplineError>(m, "SplineError", PyExc_RuntimeError);
  py::register_exception<PreintegrationError>(m, "PreintegrationError",
                                              PyExc_RuntimeError);
  py::register_exception<InitializerError>(m, "InitializerError",
                                           PyExc_RuntimeError);
  py::register_exception<EstimatorError>(m, "EstimatorError", PyExc_RuntimeError);
  py::register_exception<SimulatorError>(m, "SimulatorError", PyExc_RuntimeError);
  py::register_exception<MetricsError>(m, "MetricsError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_RuntimeError);

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init([](const Vec4& q_wxyz, const Vec3& p) {
             return Pose(set_quat(q_wxyz), p);
           }),
           py::arg("q_wxyz"), py::arg("p"))
      .def_property(
          "q_wxyz", [](const Pose& T) { return get_quat(T.rotation); },
          [](Pose& T, const Vec4& v) { T.rotation = set_quat(v); })
      .def_readwrite("p", &Pose::translation)
      .def("__mul__", &Pose::operator*)
      .def("inverse", &Pose::inverse)
      .def("act", &Pose::act)
      .def("matrix", &Pose::matrix);

  py::class_<ImuSample>(m, "ImuSample")
      .def(py::init<>())
      .def(py::init([](double t, const Vec3& a, const Vec3& w) {
             return ImuSample{t, a, w};
           }),
           py::arg("t"), py::arg("accel"), py::arg("gyro"))
      .def_readwrite("t", &ImuSample::t)
      .def_readwrite("accel", &ImuSample::accel)
      .def_readwrite("gyro", &ImuSample::gyro);

  py::class_<MoCapSample>(m, "MoCapSample")
      .def(py::init<>())
      .def(py::init([](double tau, const Pose& pose) {
             return MoCapSample{tau, pose};
           }),
           py::arg("tau"), py::arg("pose"))
      .def_readwrite("tau", &MoCapSample::tau)
      .def_readwrite("pose", &MoCapSample::pose);

  py::class_<TrajectorySample>(m, "TrajectorySample")
      .def(py::init<>())
      .def(py::init([](double t, const Pose& pose) {
             return TrajectorySample{t, pose};
           }),
           py::arg("t"), py::arg("pose"))
      .def_readwrite("t", &TrajectorySample::t)
      .def_readwrite("pose", &TrajectorySample::pose);

  py::class_<ImuNoiseParams>(m, "ImuNoiseParams")
      .def(py::init<>())
      .def_readwrite("accel_noise_density", &ImuNoiseParams::accel_noise_density)
      .def_readwrite("accel_random_walk", &ImuNoiseParams::accel_random_walk)
      .def_readwrite("gyro_noise_density", &ImuNoiseParams::gyro_noise_density)
      .def_readwrite("gyro_random_walk", &ImuNoiseParams::gyro_random_walk);

  py::class_<MoCapNoiseParams>(m, "MoCapNoiseParams")
      .def(py::init<>())
      .def_readwrite("trans_noise_density", &MoCapNoiseParams::trans_noise_density)
      .def_readwrite("rot_noise_density", &MoCapNoiseParams::rot_noise_density);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("duration", &SimConfig::duration)
      .def_readwrite("imu_rate", &SimConfig::imu_rate)
      .def_readwrite("mocap_rate", &SimConfig::mocap_rate)
      .def_readwrite("imu_noise", &SimConfig::imu_noise)
      .def_readwrite("mocap_noise", &SimConfig::mocap_noise)
      .def_readwrite("noise_scale", &SimConfig::noise_scale)
      .def_readwrite("imu_noise_scale", &SimConfig::imu_noise_scale)
      .def_readwrite("mocap_noise_scale", &SimConfig::mocap_noise_scale)
      .def_readwrite("true_extrinsics", &SimConfig::true_extrinsics)
      .def_readwrite("true_offset0", &SimConfig::true_offset0)
      .def_readwrite("clock_drift", &SimConfig::clock_drift)
      .def_readwrite("gravity_roll", &SimConfig::gravity_roll)
      .def_readwrite("gravity_pitch", &SimConfig::gravity_pitch)
      .def_readwrite("outlier_fraction", &SimConfig::outlier_fraction)
      .def_readwrite("rng_seed", &SimConfig::rng_seed)
      .def_readwrite("trans_amplitude", &SimConfig::trans_amplitude)
      .def_readwrite("rot_amplitude", &SimConfig::rot_amplitude)
      .def_readwrite("motion_period", &SimConfig::motion_period)
      .def_readwrite("still_period", &SimConfig::still_period)
      .def_readwrite("envelope_transition", &SimConfig::envelope_transition)
      .def_readwrite("base_trajectory_tum", &SimConfig::base_trajectory_tum);

  py::class_<SimTruth>(m, "SimTruth")
      .def_readonly("trajectory", &SimTruth::trajectory)
      .def_readonly("velocities", &SimTruth::velocities)
      .def_readonly("bias_a", &SimTruth::bias_a)
      .def_readonly("bias_g", &SimTruth::bias_g)
      .def_readonly("offset0", &SimTruth::offset0)
      .def_readonly("drift_rate", &SimTruth::drift_rate)
      .def("offset_at", &SimTruth::offset_at);

  py::class_<SimOutput>(m, "SimOutput")
      .def_readonly("imu", &SimOutput::imu)
      .def_readonly("mocap", &SimOutput::mocap)
      .def_readonly("truth", &SimOutput::truth);

  m.def("simulate", &simulate, py::arg("cfg"));
  m.def("gravity_world", &gravity_world, py::arg("roll"), py::arg("pitch"));

  py::class_<InitConfig>(m, "InitConfig")
      .def(py::init<>())
      .def_readwrite("mu", &InitConfig::mu)
      .def_readwrite("pair_stride", &InitConfig::pair_stride)
      .def_readwrite("ransac_iters", &InitConfig::ransac_iters)
      .def_readwrite("ransac_rotation_inlier_tol",
                     &InitConfig::ransac_rotation_inlier_tol)
      .def_readwrite("ransac_translation_inlier_tol",
                     &InitConfig::ransac_translation_inlier_tol)
      .def_readwrite("correlation_rate", &InitConfig::correlation_rate)
      .def_readwrite("max_offset_search", &InitConfig::max_offset_search)
      .def_readwrite("min_pair_angle", &InitConfig::min_pair_angle)
      .def_readwrite("rng_seed", &InitConfig::rng_seed)
      .def_readwrite("imu_noise", &InitConfig::imu_noise);

  py::class_<InitResult>(m, "InitResult")
      .def(py::init<>())
      .def_property(
          "q_MI_wxyz", [](const InitResult& r) { return get_quat(r.q_MI); },
          [](InitResult& r, const Vec4& v) { r.q_MI = set_quat(v); })
      .def_readwrite("p_MI", &InitResult::p_MI)
      .def_readwrite("t_MI0", &InitResult::t_MI0)
      .def_readwrite("g_W", &InitResult::g_W)
      .def_readonly("epoch_times", &InitResult::epoch_times)
      .def_readonly("velocities", &InitResult::velocities)
      .def_readonly("inlier_mask", &InitResult::inlier_mask)
      .def_readonly("gravity_low_confidence", &InitResult::gravity_low_confidence);

  m.def(
      "ransac_initialize",
      [](const std::vector<ImuSample>& imu, const std::vector<MoCapSample>& mocap,
         const InitConfig& cfg) { return ransac_initialize(imu, mocap, cfg); },
      py::arg("imu"), py::arg("mocap"), py::arg("cfg") = InitConfig{});
  m.def(
      "coarse_time_align",
      [](const std::vector<ImuSample>& imu, const std::vector<MoCapSample>& mocap,
         const InitConfig& cfg) { return coarse_time_align(imu, mocap, cfg); },
      py::arg("imu"), py::arg("mocap"), py::arg("cfg") = InitConfig{});

  py::class_<EstimatorConfig>(m, "EstimatorConfig")
      .def(py::init<>())
      .def_readwrite("state_rate", &EstimatorConfig::state_rate)
      .def_readwrite("offset_knot_spacing", &EstimatorConfig::offset_knot_spacing)
      .def_readwrite("min_offset_knots", &EstimatorConfig::min_offset_knots)
      .def_readwrite("degeneracy_window", &EstimatorConfig::degeneracy_window)
      .def_readwrite("degeneracy_angle", &EstimatorConfig::degeneracy_angle)
      .def_readwrite("degeneracy_masking", &EstimatorConfig::degeneracy_masking)
      .def_readwrite("huber_delta", &EstimatorConfig::huber_delta)
      .def_readwrite("max_iterations", &EstimatorConfig::max_iterations)
      .def_readwrite("cost_decrease_tol", &EstimatorConfig::cost_decrease_tol)
      .def_readwrite("gradient_tol", &EstimatorConfig::gradient_tol)
      .def_readwrite("imu_noise", &EstimatorConfig::imu_noise)
      .def_readwrite("mocap_trans_noise_density",
                     &EstimatorConfig::mocap_trans_noise_density)
      .def_readwrite("mocap_rot_noise_density",
                     &EstimatorConfig::mocap_rot_noise_density)
      .def_readwrite("mocap_rate", &EstimatorConfig::mocap_rate);

  py::class_<InertialState>(m, "InertialState")
      .def(py::init<>())
      .def_readwrite("t", &InertialState::t)
      .def_readwrite("p_WI", &InertialState::p_WI)
      .def_readwrite("v_WI", &InertialState::v_WI)
      .def_property(
          "q_WI_wxyz", [](const InertialState& s) { return get_quat(s.q_WI); },
          [](InertialState& s, const Vec4& v) { s.q_WI = set_quat(v); })
      .def_readwrite("b_a", &InertialState::b_a)
      .def_readwrite("b_g", &InertialState::b_g);

  py::class_<OffsetKnot>(m, "OffsetKnot")
      .def(py::init<>())
      .def_readwrite("t_knot", &OffsetKnot::t_knot)
      .def_readwrite("t_MI", &OffsetKnot::t_MI);

  py::class_<ExtrinsicState>(m, "ExtrinsicState")
      .def(py::init<>())
      .def_readwrite("p_MI", &ExtrinsicState::p_MI)
      .def_property(
          "q_MI_wxyz", [](const ExtrinsicState& e) { return get_quat(e.q_MI); },
          [](ExtrinsicState& e, const Vec4& v) { e.q_MI = set_quat(v); })
      .def_readwrite("offset_knots", &ExtrinsicState::offset_knots)
      .def("offset_at", &ExtrinsicState::offset_at);

  py::class_<GravityAlign>(m, "GravityAlign")
      .def(py::init<>())
      .def_readwrite("roll", &GravityAlign::roll)
      .def_readwrite("pitch", &GravityAlign::pitch)
      .def("g_W", &GravityAlign::g_W);

  py::class_<TimeInterval>(m, "TimeInterval")
      .def(py::init<>())
      .def_readwrite("begin", &TimeInterval::begin)
      .def_readwrite("end", &TimeInterval::end);

  py::class_<FactorGraphProblem>(m, "FactorGraphProblem")
      .def_readwrite("states", &FactorGraphProblem::states)
      .def_readwrite("extrinsics", &FactorGraphProblem::extrinsics)
      .def_readwrite("gravity", &FactorGraphProblem::gravity)
      .def_readonly("degenerate_windows", &FactorGraphProblem::degenerate_windows)
      .def_readonly("mocap_factors_dropped",
                    &FactorGraphProblem::mocap_factors_dropped);

  py::class_<SolveReport>(m, "SolveReport")
      .def_readonly("iteration_costs", &SolveReport::iteration_costs)
      .def_readonly("final_cost", &SolveReport::final_cost)
      .def_readonly("imu_rms", &SolveReport::imu_rms)
      .def_readonly("mocap_rms", &SolveReport::mocap_rms)
      .def_readonly("bias_rms", &SolveReport::bias_rms)
      .def_readonly("iterations", &SolveReport::iterations)
      .def_readonly("degenerate_window_count", &SolveReport::degenerate_window_count)
      .def_readonly("converged", &SolveReport::converged)
      .def_readonly("termination", &SolveReport::termination);

  m.def(
      "build_problem",
      [](const std::vector<ImuSample>& imu, const std::vector<MoCapSample>& mocap,
         const InitResult& init, const EstimatorConfig& cfg) {
        return build_problem(imu, mocap, init, cfg);
      },
      py::arg("imu"), py::arg("mocap"), py::arg("init"),
      py::arg("cfg") = EstimatorConfig{});
  m.def("optimize", &optimize, py::arg("problem"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "extract_trajectory",
      [](const std::vector<InertialState>& states, double rate) {
        return extract_trajectory(states, rate);
      },
      py::arg("states"), py::arg("rate") = 100.0);
  m.def(
      "detect_degenerate_windows",
      [](const std::vector<MoCapSample>& mocap, double w, double varpi) {
        return detect_degenerate_windows(mocap, w, varpi);
      },
      py::arg("mocap"), py::arg("window"), py::arg("angle"));

  py::class_<JacobianCheck>(m, "JacobianCheck")
      .def_readonly("block", &JacobianCheck::block)
      .def_readonly("max_rel_error", &JacobianCheck::max_rel_error);
  m.def("check_jacobians", &check_jacobians, py::arg("n_trials") = 100,
        py::arg("seed") = 42, py::call_guard<py::gil_scoped_release>());

  py::class_<MetricReport>(m, "MetricReport")
      .def_readonly("ate_rmse", &MetricReport::ate_rmse)
      .def_readonly("are_rmse", &MetricReport::are_rmse)
      .def_readonly("rte_rmse", &MetricReport::rte_rmse)
      .def_readonly("rre_rmse", &MetricReport::rre_rmse)
      .def_readonly("n_associated", &MetricReport::n_associated)
      .def_readonly("alignment", &MetricReport::alignment);
  m.def("evaluate_trajectories", &evaluate_trajectories, py::arg("est"),
        py::arg("ref"), py::arg("rate") = 50.0, py::arg("max_dt") = 0.02);

  m.def("read_imu_csv", &read_imu_csv, py::arg("path"));
  m.def("write_imu_csv", &write_imu_csv, py::arg("path"), py::arg("samples"));
  m.def(
      "read_mocap_csv",
      [](const std::string& path) { return read_mocap_csv(path, nullptr); },
      py::arg("path"));
  m.def("write_mocap_csv", &write_mocap_csv, py::arg("path"), py::arg("samples"));
  m.def("read_tum", &read_tum, py::arg("path"));
  m.def("write_tum", &write_tum, py::arg("path"), py::arg("traj"));
}
