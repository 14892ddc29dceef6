#include "gtforge/initializer.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace gtforge {

namespace {

// Constant-twist interpolation of the raw MoCap stream at an arbitrary time.
Pose interpolate_mocap(std::span<const MoCapSample> mocap, double tau) {
  auto it = std::lower_bound(
      mocap.begin(), mocap.end(), tau,
      [](const MoCapSample& s, double t) { return s.tau < t; });
  if (it == mocap.begin()) return mocap.front().pose;
  if (it == mocap.end()) return mocap.back().pose;
  const MoCapSample& b = *it;
  const MoCapSample& a = *(it - 1);
  const double s = (tau - a.tau) / (b.tau - a.tau);
  return pose_interpolate(a.pose, b.pose, s);
}

struct Signal {
  double t0 = 0.0;
  double rate = 0.0;
  std::vector<double> values;  // mean-removed
};

// Linear resampling of (time, value) points to a uniform grid.
Signal resample(const std::vector<double>& times, const std::vector<double>& values,
                double rate) {
  Signal out;
  out.rate = rate;
  out.t0 = times.front();
  const double span = times.back() - times.front();
  const size_t n = static_cast<size_t>(std::floor(span * rate)) + 1;
  out.values.resize(n);
  size_t j = 0;
  for (size_t k = 0; k < n; ++k) {
    const double t = out.t0 + double(k) / rate;
    while (j + 2 < times.size() && times[j + 1] < t) ++j;
    const double s = std::clamp((t - times[j]) / (times[j + 1] - times[j]), 0.0, 1.0);
    out.values[k] = (1.0 - s) * values[j] + s * values[j + 1];
  }
  const double mean =
      std::accumulate(out.values.begin(), out.values.end(), 0.0) / double(n);
  for (double& v : out.values) v -= mean;
  return out;
}

// Normalized cross-correlation of imu vs mocap at integer lag d:
// overlap of imu[i] with mocap[i + d].
double correlation_at(const Signal& imu, const Signal& mocap, long d) {
  const long ni = static_cast<long>(imu.values.size());
  const long nm = static_cast<long>(mocap.values.size());
  const long i_lo = std::max(0L, -d);
  const long i_hi = std::min(ni, nm - d);
  if (i_hi - i_lo < 16) return 0.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (long i = i_lo; i < i_hi; ++i) {
    const double x = imu.values[i];
    const double y = mocap.values[i + d];
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  const double denom = std::sqrt(sxx * syy);
  if (denom < 1e-12) return 0.0;
  return sxy / denom;
}

// Screw translation of a relative pose: translation projected on the
// rotation axis. Invalid (returns false) for near-zero rotation.
bool screw_translation(const Quat& q_rel, const Vec3& p_rel, double min_angle,
                       double* d) {
  if (rotation_angle(q_rel) < min_angle) return false;
  const Vec3 axis = so3_log(q_rel).normalized();
  *d = p_rel.dot(axis);
  return true;
}

Eigen::MatrixXd stack_rotation_constraints(std::span<const ConstraintPair> pairs,
                                           const std::vector<int>& idx,
                                           double mu, double min_angle) {
  Eigen::MatrixXd A(4 * idx.size(), 4);
  int rows = 0;
  for (int k : idx) {
    const ConstraintPair& p = pairs[k];
    if (p.theta_mocap < min_angle || p.theta_imu < min_angle) continue;
    const double K = kernel_weight(p.theta_mocap, p.theta_imu, mu);
    A.block<4, 4>(rows, 0) =
        K * (quat_left_matrix(p.q_mocap_rel) - quat_right_matrix(p.q_imu_rel));
    rows += 4;
  }
  return A.topRows(rows);
}

}  // namespace

double kernel_weight(double theta_a, double theta_b, double mu) {
  const double hi = std::max(theta_a, theta_b);
  const double lo = std::min(theta_a, theta_b);
  return std::exp(mu * (1.0 - hi / lo));
}

double coarse_time_align(std::span<const ImuSample> imu,
                         std::span<const MoCapSample> mocap,
                         const InitConfig& cfg) {
  if (imu.size() < 2 || mocap.size() < 2) {
    throw InitializerError("coarse_time_align: empty stream");
  }
  if (imu.back().t - imu.front().t < 10.0 ||
      mocap.back().tau - mocap.front().tau < 10.0) {
    throw InitializerError("coarse_time_align: streams shorter than 10 s");
  }

  std::vector<double> imu_t, imu_speed;
  imu_t.reserve(imu.size());
  for (const auto& s : imu) {
    imu_t.push_back(s.t);
    imu_speed.push_back(s.gyro.norm());
  }
  // Marker glitches leave isolated poses that jump far from both
  // neighbours; drop them before differencing so the speed signal stays
  // clean.
  const std::vector<MoCapSample> kept = drop_mocap_glitches(mocap);
  std::vector<double> mc_t, mc_speed;
  mc_t.reserve(kept.size());
  for (size_t i = 1; i < kept.size(); ++i) {
    const double dtau = kept[i].tau - kept[i - 1].tau;
    const double ang = rotation_angle(kept[i - 1].pose.rotation.conjugate() *
                                      kept[i].pose.rotation);
    mc_t.push_back(0.5 * (kept[i].tau + kept[i - 1].tau));
    mc_speed.push_back(ang / dtau);
  }
  if (mc_speed.size() < 32) {
    throw NoMotionError("coarse_time_align: too few consistent mocap samples");
  }
  // A handful of glitches can survive the neighbour filter when they land
  // close to the true path; even two large spikes shift the correlation
  // peak. Clip the speed signal at a robust ceiling that clean data never
  // reaches.
  {
    std::vector<double> sorted = mc_speed;
    std::sort(sorted.begin(), sorted.end());
    const double q50 = sorted[sorted.size() / 2];
    const double q90 = sorted[static_cast<size_t>(0.9 * double(sorted.size()))];
    const double ceiling = q90 + 5.0 * (q90 - q50);
    for (double& v : mc_speed) v = std::min(v, ceiling);
  }

  const Signal si = resample(imu_t, imu_speed, cfg.correlation_rate);
  const Signal sm = resample(mc_t, mc_speed, cfg.correlation_rate);

  // Offset for integer lag d: mocap sample i+d aligns with imu sample i,
  // i.e. offset = (sm.t0 - si.t0) + d / rate.
  const double base = sm.t0 - si.t0;
  const auto lag_to_offset = [&](double d) { return base + d / cfg.correlation_rate; };
  const long d_lo = static_cast<long>(
      std::ceil((-cfg.max_offset_search - base) * cfg.correlation_rate));
  const long d_hi = static_cast<long>(
      std::floor((cfg.max_offset_search - base) * cfg.correlation_rate));

  double best_corr = -2.0;
  long best_d = d_lo;
  for (long d = d_lo; d <= d_hi; ++d) {
    const double c = correlation_at(si, sm, d);
    if (c > best_corr) {
      best_corr = c;
      best_d = d;
    }
  }
  if (best_corr < 0.5) {
    throw NoMotionError("coarse_time_align: peak correlation below 0.5");
  }
  if (best_d == d_lo || best_d == d_hi) {
    throw OffsetAtSearchBoundaryError("coarse_time_align: offset at search boundary");
  }

  // Parabolic refinement of the correlation peak.
  const double cm = correlation_at(si, sm, best_d - 1);
  const double c0 = best_corr;
  const double cp = correlation_at(si, sm, best_d + 1);
  double frac = 0.0;
  const double denom = cm - 2.0 * c0 + cp;
  if (std::abs(denom) > 1e-15) frac = 0.5 * (cm - cp) / denom;
  return lag_to_offset(double(best_d) + frac);
}

Quat solve_extrinsic_rotation(std::span<const ConstraintPair> pairs,
                              const InitConfig& cfg) {
  std::vector<int> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Eigen::MatrixXd A =
      stack_rotation_constraints(pairs, idx, cfg.mu, cfg.min_pair_angle);
  if (A.rows() < 8) {
    throw DegenerateAxesError("solve_extrinsic_rotation: fewer than 2 usable pairs");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  const Eigen::Vector4d sv = svd.singularValues();
  if (sv(2) < 10.0 * sv(3) + 1e-12 * sv(0)) {
    throw DegenerateAxesError(
        "solve_extrinsic_rotation: rotation axes degenerate (single-axis motion)");
  }
  Vec4 q = svd.matrixV().col(3);
  return quat_positive(quat_from_wxyz(q).normalized());
}

LinearInitResult solve_linear_init(std::span<const ConstraintPair> pairs,
                                   int n_epochs, const Quat& q_MI,
                                   const InitConfig& cfg) {
  if (pairs.size() < 3) {
    throw InitializerError("solve_linear_init: need at least 3 pairs");
  }
  const Mat3 R_MI = q_MI.toRotationMatrix();
  const int n_unknowns = 3 * n_epochs + 6;
  const int gcol = 3 * n_epochs;
  const int pcol = 3 * n_epochs + 3;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(6 * pairs.size(), n_unknowns);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(6 * pairs.size());
  std::vector<double> weights(pairs.size(), 1.0);

  const auto assemble = [&]() {
    for (size_t k = 0; k < pairs.size(); ++k) {
      const ConstraintPair& p = pairs[k];
      const Mat3 Ri = p.T_WM_i.rotation.toRotationMatrix();
      const Mat3 Rj = p.T_WM_j.rotation.toRotationMatrix();
      const double dt = p.preint.dt;
      const double w = weights[k];
      const int r = 6 * static_cast<int>(k);
      const int vi = 3 * p.epoch_i;
      const int vj = 3 * p.epoch_j;
      A.block<3, 3>(r, vi) = -w * dt * Mat3::Identity();
      A.block<3, 3>(r, gcol) = w * 0.5 * dt * dt * Mat3::Identity();
      A.block<3, 3>(r, pcol) = w * (Rj - Ri);
      b.segment<3>(r) = w * (Ri * R_MI * p.preint.alpha + p.T_WM_i.translation -
                             p.T_WM_j.translation);
      A.block<3, 3>(r + 3, vi) = -w * Mat3::Identity();
      A.block<3, 3>(r + 3, vj) = w * Mat3::Identity();
      A.block<3, 3>(r + 3, gcol) = w * dt * Mat3::Identity();
      b.segment<3>(r + 3) = w * (Ri * R_MI * p.preint.beta);
    }
  };

  Eigen::VectorXd x;
  // Iteratively reweighted solve: weights come from the translational screw
  // kernel once a first estimate of velocity and gravity is available.
  for (int iter = 0; iter < 3; ++iter) {
    assemble();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(0) > 1e10 * sv(sv.size() - 1)) {
      throw IllConditionedError("solve_linear_init: normal matrix ill-conditioned");
    }
    x = svd.solve(b);

    const Vec3 g = x.segment<3>(gcol);
    for (size_t k = 0; k < pairs.size(); ++k) {
      const ConstraintPair& p = pairs[k];
      const Pose rel = p.T_WM_i.inverse() * p.T_WM_j;
      double d_mocap;
      if (!screw_translation(rel.rotation, rel.translation, cfg.min_pair_angle,
                             &d_mocap)) {
        weights[k] = 1.0;
        continue;
      }
      // IMU-side screw translation from the dead-reckoned relative motion.
      const Mat3 R_WIi = p.T_WM_i.rotation.toRotationMatrix() * R_MI;
      const Vec3 v_i = x.segment<3>(3 * p.epoch_i);
      const double dt = p.preint.dt;
      const Vec3 p_rel_imu =
          R_WIi.transpose() * (v_i * dt - 0.5 * g * dt * dt) + p.preint.alpha;
      const Vec3 axis_imu = so3_log(p.preint.dq).normalized();
      const double d_imu = p_rel_imu.dot(axis_imu);
      const double hi = std::max(std::abs(d_mocap), std::abs(d_imu));
      const double lo = std::min(std::abs(d_mocap), std::abs(d_imu));
      if (hi < 1e-4) {
        weights[k] = 1.0;
      } else if (d_mocap * d_imu < 0.0 || lo < 1e-6) {
        weights[k] = std::exp(-cfg.mu);
      } else {
        weights[k] = kernel_weight(hi, lo, cfg.mu);
      }
      // The kernel underflows for strongly mismatched pairs; a zeroed row
      // block can leave a velocity column unconstrained. Floor the weight
      // so the system stays well conditioned while the pair contributes
      // next to nothing.
      weights[k] = std::max(weights[k], 1e-4);
    }
  }

  LinearInitResult out;
  out.velocities.resize(n_epochs);
  for (int e = 0; e < n_epochs; ++e) out.velocities[e] = x.segment<3>(3 * e);
  out.g_W = x.segment<3>(gcol);
  out.p_MI = x.segment<3>(pcol);
  return out;
}

std::vector<ConstraintPair> build_constraint_pairs(
    std::span<const ImuSample> imu, std::span<const MoCapSample> mocap,
    double t_MI0, const InitConfig& cfg) {
  const double mocap_period =
      (mocap.back().tau - mocap.front().tau) / double(mocap.size() - 1);
  const double lo = std::max(imu.front().t, mocap.front().tau - t_MI0) + mocap_period;
  const double hi = std::min(imu.back().t, mocap.back().tau - t_MI0) - mocap_period;
  if (hi - lo < 2.0 * cfg.pair_stride) {
    throw InitializerError("build_constraint_pairs: insufficient stream overlap");
  }
  const int n_epochs = static_cast<int>(std::floor((hi - lo) / cfg.pair_stride)) + 1;

  std::vector<double> epoch_t(n_epochs);
  std::vector<Pose> epoch_pose(n_epochs);
  for (int e = 0; e < n_epochs; ++e) {
    epoch_t[e] = lo + double(e) * cfg.pair_stride;
    epoch_pose[e] = interpolate_mocap(mocap, epoch_t[e] + t_MI0);
  }

  std::vector<ConstraintPair> pairs;
  pairs.reserve(n_epochs - 1);
  for (int e = 0; e + 1 < n_epochs; ++e) {
    ConstraintPair p;
    p.t_i = epoch_t[e];
    p.t_j = epoch_t[e + 1];
    p.epoch_i = e;
    p.epoch_j = e + 1;
    p.T_WM_i = epoch_pose[e];
    p.T_WM_j = epoch_pose[e + 1];
    p.preint = preintegrate(imu, p.t_i, p.t_j, Vec3::Zero(), Vec3::Zero(),
                            cfg.imu_noise);
    p.q_imu_rel = p.preint.dq;
    p.q_mocap_rel =
        (p.T_WM_i.rotation.conjugate() * p.T_WM_j.rotation).normalized();
    // The two relative rotations enter a linear constraint where the
    // quaternion sign matters; corrupted poses can flip the stored
    // hemisphere of the interpolated epochs even when the rotation itself
    // is near correct.
    if (p.q_mocap_rel.w() * p.q_imu_rel.w() < 0.0) {
      p.q_mocap_rel.coeffs() = -p.q_mocap_rel.coeffs();
    }
    p.theta_mocap = rotation_angle(p.q_mocap_rel);
    p.theta_imu = rotation_angle(p.q_imu_rel);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void gravity_to_rollpitch(const Vec3& g_W, double* roll, double* pitch) {
  if (g_W.norm() <= 1.0) {
    throw InitializerError("gravity_to_rollpitch: |g| <= 1 m/s^2");
  }
  const Vec3 g = g_W.normalized();
  *roll = -std::asin(std::clamp(g.y(), -1.0, 1.0));
  *pitch = std::atan2(g.x(), g.z());
}

namespace {

// Model-independent screw-consistency inlier test for one pair, using a
// candidate (q_MI, p_MI, g) to reconstruct the IMU-side screw translation.
bool pair_is_inlier(const ConstraintPair& p, std::span<const MoCapSample> mocap,
                    double t_MI0, const Quat& q_MI, const Vec3& p_MI,
                    const Vec3& g, const InitConfig& cfg) {
  if (std::abs(p.theta_mocap - p.theta_imu) > cfg.ransac_rotation_inlier_tol) {
    return false;
  }
  // Angle agreement alone admits corrupted pairs whose random axis happens
  // to match in magnitude; the candidate extrinsic rotation exposes them.
  const Quat q_pred = (q_MI.conjugate() * p.q_mocap_rel * q_MI).normalized();
  if (rotation_angle(p.q_imu_rel.conjugate() * q_pred) >
      2.0 * cfg.ransac_rotation_inlier_tol) {
    return false;
  }
  if (p.theta_mocap < cfg.min_pair_angle || p.theta_imu < cfg.min_pair_angle) {
    return true;  // quasi-static pair, no translational screw signal
  }
  const Pose rel = p.T_WM_i.inverse() * p.T_WM_j;
  double d_mocap;
  if (!screw_translation(rel.rotation, rel.translation, cfg.min_pair_angle, &d_mocap)) {
    return true;
  }
  // Velocity at t_i from central differencing of propagated MoCap positions.
  const Mat3 R_MI = q_MI.toRotationMatrix();
  const auto p_WI_at = [&](double t) {
    const Pose T = interpolate_mocap(mocap, t + t_MI0);
    return Vec3(T.translation + T.rotation.toRotationMatrix() * p_MI);
  };
  const double delta = 0.02;
  if (p.t_i - delta + t_MI0 < mocap.front().tau ||
      p.t_i + delta + t_MI0 > mocap.back().tau) {
    return true;  // no valid differencing window at the stream edge
  }
  const Vec3 v_i = (p_WI_at(p.t_i + delta) - p_WI_at(p.t_i - delta)) / (2.0 * delta);
  const Mat3 R_WIi = p.T_WM_i.rotation.toRotationMatrix() * R_MI;
  const double dt = p.preint.dt;
  const Vec3 p_rel_imu =
      R_WIi.transpose() * (v_i * dt - 0.5 * g * dt * dt) + p.preint.alpha;
  const double d_imu = p_rel_imu.dot(so3_log(p.preint.dq).normalized());
  return std::abs(d_mocap - d_imu) <= cfg.ransac_translation_inlier_tol;
}

}  // namespace

InitResult ransac_initialize(std::span<const ImuSample> imu,
                             std::span<const MoCapSample> mocap,
                             const InitConfig& cfg) {
  double t_MI0;
  try {
    t_MI0 = coarse_time_align(imu, mocap, cfg);
  } catch (const NoMotionError&) {
    // A failed correlation with a clearly excited gyro means the mocap
    // rotations are unreliable, not that the rig is motionless. Proceed at
    // zero offset and let the consensus stage pass judgement.
    double gyro_sq = 0.0;
    for (const auto& s : imu) gyro_sq += s.gyro.squaredNorm();
    const double gyro_rms = std::sqrt(gyro_sq / double(imu.size()));
    if (gyro_rms < 0.05) throw;
    t_MI0 = 0.0;
  }
  const std::vector<ConstraintPair> pairs =
      build_constraint_pairs(imu, mocap, t_MI0, cfg);
  const int n_epochs = pairs.back().epoch_j + 1;

  std::vector<int> usable;
  for (size_t k = 0; k < pairs.size(); ++k) {
    if (pairs[k].theta_mocap >= cfg.min_pair_angle &&
        pairs[k].theta_imu >= cfg.min_pair_angle) {
      usable.push_back(static_cast<int>(k));
    }
  }
  if (usable.size() < 3) {
    throw NoMotionError("ransac_initialize: too few rotationally excited pairs");
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<size_t> pick(0, usable.size() - 1);

  std::vector<char> best_inliers;
  size_t best_count = 0;
  for (int iter = 0; iter < cfg.ransac_iters; ++iter) {
    // Minimal sample: a run of 3 consecutive usable pairs (the chained
    // velocities make 3 consecutive pairs exactly determined).
    const size_t s = pick(rng);
    std::vector<ConstraintPair> minimal;
    for (size_t k = s; k < usable.size() && minimal.size() < 3; ++k) {
      minimal.push_back(pairs[usable[k]]);
    }
    if (minimal.size() < 3) continue;
    // Re-index the minimal chain epochs.
    std::vector<int> epoch_map;
    for (auto& mp : minimal) {
      auto idx_of = [&](int e) {
        for (size_t q = 0; q < epoch_map.size(); ++q)
          if (epoch_map[q] == e) return static_cast<int>(q);
        epoch_map.push_back(e);
        return static_cast<int>(epoch_map.size() - 1);
      };
      mp.epoch_i = idx_of(mp.epoch_i);
      mp.epoch_j = idx_of(mp.epoch_j);
    }
    Quat q_cand;
    LinearInitResult lin_cand;
    try {
      q_cand = solve_extrinsic_rotation(minimal, cfg);
      lin_cand = solve_linear_init(minimal, static_cast<int>(epoch_map.size()),
                                   q_cand, cfg);
    } catch (const InitializerError&) {
      continue;
    }

    std::vector<char> inliers(pairs.size(), 0);
    size_t count = 0;
    for (size_t k = 0; k < pairs.size(); ++k) {
      if (pair_is_inlier(pairs[k], mocap, t_MI0, q_cand, lin_cand.p_MI,
                         lin_cand.g_W, cfg)) {
        inliers[k] = 1;
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_inliers = std::move(inliers);
    }
  }

  if (best_count < (3 * pairs.size()) / 10) {
    throw ConsensusFailureError("ransac_initialize: inlier ratio below 30%");
  }

  // Refit on the consensus set. Epochs touched by no inlier pair would
  // leave unconstrained velocity columns, so the inlier chain is re-indexed
  // onto a compact epoch set first.
  std::vector<ConstraintPair> inlier_pairs;
  for (size_t k = 0; k < pairs.size(); ++k) {
    if (best_inliers[k]) inlier_pairs.push_back(pairs[k]);
  }
  std::vector<int> epoch_of_col;
  std::vector<int> col_of_epoch(n_epochs, -1);
  for (auto& p : inlier_pairs) {
    for (int* e : {&p.epoch_i, &p.epoch_j}) {
      if (col_of_epoch[*e] < 0) {
        col_of_epoch[*e] = static_cast<int>(epoch_of_col.size());
        epoch_of_col.push_back(*e);
      }
      *e = col_of_epoch[*e];
    }
  }
  const Quat q_MI = solve_extrinsic_rotation(inlier_pairs, cfg);
  const LinearInitResult lin = solve_linear_init(
      inlier_pairs, static_cast<int>(epoch_of_col.size()), q_MI, cfg);

  InitResult out;
  out.q_MI = q_MI;
  out.p_MI = lin.p_MI;
  out.t_MI0 = t_MI0;
  out.g_W = lin.g_W;
  // Scatter solved velocities back; epochs outside the consensus chain take
  // the nearest solved value.
  out.velocities.assign(n_epochs, Vec3::Zero());
  for (size_t c = 0; c < epoch_of_col.size(); ++c) {
    out.velocities[epoch_of_col[c]] = lin.velocities[c];
  }
  for (int e = 0; e < n_epochs; ++e) {
    if (col_of_epoch[e] >= 0) continue;
    int best = -1;
    for (int d = 1; d < n_epochs && best < 0; ++d) {
      if (e - d >= 0 && col_of_epoch[e - d] >= 0) best = e - d;
      else if (e + d < n_epochs && col_of_epoch[e + d] >= 0) best = e + d;
    }
    if (best >= 0) out.velocities[e] = out.velocities[best];
  }
  out.epoch_times.resize(n_epochs);
  for (const auto& p : pairs) {
    out.epoch_times[p.epoch_i] = p.t_i;
    out.epoch_times[p.epoch_j] = p.t_j;
  }
  out.inlier_mask.assign(pairs.size(), false);
  for (size_t k = 0; k < pairs.size(); ++k) out.inlier_mask[k] = best_inliers[k];
  out.gravity_low_confidence =
      std::abs(out.g_W.norm() - kGravityMagnitude) > 0.05 * kGravityMagnitude;
  return out;
}

}  // namespace gtforge
