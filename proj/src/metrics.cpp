#include "gtforge/metrics.h"

#include <algorithm>
#include <cmath>

namespace gtforge {

namespace {

// Constant-twist interpolation at t, plus the gap to the nearest sample.
Pose sample_at(const Trajectory& traj, double t, double* nearest_gap) {
  auto it = std::lower_bound(
      traj.begin(), traj.end(), t,
      [](const TrajectorySample& s, double v) { return s.t < v; });
  if (it == traj.begin()) {
    *nearest_gap = std::abs(it->t - t);
    return it->pose;
  }
  if (it == traj.end()) {
    *nearest_gap = std::abs(std::prev(it)->t - t);
    return std::prev(it)->pose;
  }
  const TrajectorySample& a = *std::prev(it);
  const TrajectorySample& b = *it;
  *nearest_gap = std::min(t - a.t, b.t - t);
  const double s = (t - a.t) / (b.t - a.t);
  return pose_interpolate(a.pose, b.pose, s);
}

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / double(v.size()));
}

}  // namespace

std::vector<PosePair> associate_and_resample(const Trajectory& est,
                                             const Trajectory& ref,
                                             double rate, double max_dt) {
  if (est.size() < 2 || ref.size() < 2) {
    throw NoOverlapError("associate_and_resample: trajectories need at least 2 samples");
  }
  const double t0 = std::max(est.front().t, ref.front().t);
  const double t1 = std::min(est.back().t, ref.back().t);
  if (t1 <= t0) {
    throw NoOverlapError("associate_and_resample: no time overlap");
  }
  const double period = 1.0 / rate;
  const int n = static_cast<int>(std::floor((t1 - t0) / period)) + 1;
  std::vector<PosePair> pairs;
  pairs.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = t0 + k * period;
    double gap_e, gap_r;
    PosePair p;
    p.t = t;
    p.est = sample_at(est, t, &gap_e);
    p.ref = sample_at(ref, t, &gap_r);
    if (gap_e > max_dt || gap_r > max_dt) continue;
    pairs.push_back(p);
  }
  return pairs;
}

AlignResult align_se3(const std::vector<PosePair>& pairs) {
  AlignResult out;
  if (pairs.size() < 3) {
    throw MetricsError("align_se3: need at least 3 pairs");
  }
  Vec3 mu_e = Vec3::Zero(), mu_r = Vec3::Zero();
  for (const auto& p : pairs) {
    mu_e += p.est.translation;
    mu_r += p.ref.translation;
  }
  mu_e /= double(pairs.size());
  mu_r /= double(pairs.size());

  Mat3 H = Mat3::Zero();
  for (const auto& p : pairs) {
    H += (p.ref.translation - mu_r) * (p.est.translation - mu_e).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) {
    D(2, 2) = -1.0;
  }
  const Mat3 R = svd.matrixU() * D * svd.matrixV().transpose();

  const auto& sv = svd.singularValues();
  // Collinear point sets leave rotation about the line unconstrained.
  out.degenerate_geometry = sv(1) < 1e-9 * std::max(sv(0), 1e-300);
  out.transform = Pose(Quat(R), mu_r - R * mu_e);

  // The SVD solution carries round-off, so already-aligned trajectories
  // would pick up a spurious residual; keep the identity when it scores
  // at least as well.
  double cost_svd = 0.0, cost_id = 0.0;
  for (const auto& p : pairs) {
    cost_svd += (out.transform.act(p.est.translation) - p.ref.translation)
                    .squaredNorm();
    cost_id += (p.est.translation - p.ref.translation).squaredNorm();
  }
  if (cost_id <= cost_svd) out.transform = Pose();
  return out;
}

void absolute_errors(const std::vector<PosePair>& pairs, const Pose& alignment,
                     double* ate_rmse, double* are_rmse) {
  std::vector<double> et, er;
  et.reserve(pairs.size());
  er.reserve(pairs.size());
  for (const auto& p : pairs) {
    const Pose est = alignment * p.est;
    et.push_back((est.translation - p.ref.translation).norm());
    er.push_back(rotation_angle(p.ref.rotation.conjugate() * est.rotation));
  }
  *ate_rmse = rms(et);
  *are_rmse = rms(er);
}

void relative_errors(const std::vector<PosePair>& pairs, double delta,
                     double* rte_rmse, double* rre_rmse) {
  std::vector<double> et, er;
  for (size_t k = 0; k < pairs.size(); ++k) {
    // Find the pair delta seconds ahead; resampling gaps may skip indices.
    size_t j = k + 1;
    while (j < pairs.size() && pairs[j].t < pairs[k].t + delta - 1e-9) ++j;
    if (j >= pairs.size()) break;
    if (std::abs(pairs[j].t - pairs[k].t - delta) > 1e-6) continue;
    const Pose rel_ref = pairs[k].ref.inverse() * pairs[j].ref;
    const Pose rel_est = pairs[k].est.inverse() * pairs[j].est;
    // The error pose is rel_ref^-1 rel_est; its translation norm equals
    // the plain difference norm (rotations preserve norms), which avoids
    // a round-off floor on identical inputs.
    et.push_back((rel_est.translation - rel_ref.translation).norm());
    er.push_back(
        rotation_angle(rel_ref.rotation.conjugate() * rel_est.rotation));
  }
  *rte_rmse = rms(et);
  *rre_rmse = rms(er);
}

MetricReport evaluate_trajectories(const Trajectory& est, const Trajectory& ref,
                                   double rate, double max_dt) {
  MetricReport r;
  const auto pairs = associate_and_resample(est, ref, rate, max_dt);
  if (pairs.size() < 2) {
    throw NoOverlapError("evaluate_trajectories: fewer than 2 associated pairs");
  }
  r.n_associated = static_cast<int>(pairs.size());
  r.alignment = align_se3(pairs).transform;
  absolute_errors(pairs, r.alignment, &r.ate_rmse, &r.are_rmse);
  relative_errors(pairs, 1.0 / rate, &r.rte_rmse, &r.rre_rmse);
  return r;
}

}  // namespace gtforge
