#include "gtforge/spline.h"

#include <algorithm>
#include <cmath>

namespace gtforge {

namespace {

// Homogeneous se(3) generator of a twist.
Mat4 twist_generator(const Twist& xi) {
  Mat4 g = Mat4::Zero();
  g.topLeftCorner<3, 3>() = skew(xi.phi);
  g.topRightCorner<3, 1>() = xi.rho;
  return g;
}

Twist scaled(const Twist& xi, double s) {
  Twist out;
  out.rho = s * xi.rho;
  out.phi = s * xi.phi;
  return out;
}

// Refine control points so the spline passes through the given targets at
// times tau0 + k dt. Two constant-twist extrapolated knots are added on
// each side; they absorb the end conditions and keep every target time
// inside the evaluable domain. The iteration contracts because the value
// at a knot time weights the central control by 2/3.
PoseSpline interpolate_knots(const std::vector<Pose>& targets, double tau0,
                             double dt) {
  const size_t K = targets.size();
  std::vector<Pose> knots(K + 4);
  std::copy(targets.begin(), targets.end(), knots.begin() + 2);
  const auto extrapolate_ends = [&]() {
    const Pose head = knots[2] * (knots[2].inverse() * knots[3]).inverse();
    knots[1] = head;
    knots[0] = head * (head.inverse() * knots[2]).inverse();
    const Pose tail =
        knots[K + 1] * (knots[K].inverse() * knots[K + 1]);
    knots[K + 2] = tail;
    knots[K + 3] = tail * (knots[K + 1].inverse() * tail);
  };
  extrapolate_ends();

  std::vector<Twist> err(K);
  for (int iter = 0; iter < 80; ++iter) {
    const PoseSpline spline(knots, tau0 - 2.0 * dt, dt);
    double worst = 0.0;
    for (size_t k = 0; k < K; ++k) {
      const Pose value = spline.evaluate(tau0 + double(k) * dt);
      err[k] = se3_log(value.inverse() * targets[k]);
      worst = std::max(worst, std::max(err[k].rho.norm(), err[k].phi.norm()));
    }
    if (worst < 1e-11) break;
    for (size_t k = 0; k < K; ++k) {
      knots[k + 2] = knots[k + 2] * se3_exp(scaled(err[k], 1.5));
    }
    extrapolate_ends();
  }
  PoseSpline out(std::move(knots), tau0 - 2.0 * dt, dt);
  // Only the original data span is trustworthy; the extrapolated margins
  // stay out of the query domain.
  out.set_invalid_intervals(
      {{tau0 - 4.0 * dt, tau0},
       {tau0 + double(K - 1) * dt, tau0 + double(K + 4) * dt}});
  return out;
}

}  // namespace

std::vector<MoCapSample> drop_mocap_glitches(std::span<const MoCapSample> samples) {
  const size_t n = samples.size();
  if (n < 3) return {samples.begin(), samples.end()};
  std::vector<double> dang(n - 1), dpos(n - 1);
  for (size_t i = 1; i < n; ++i) {
    dang[i - 1] = rotation_angle(samples[i - 1].pose.rotation.conjugate() *
                                 samples[i].pose.rotation);
    dpos[i - 1] =
        (samples[i].pose.translation - samples[i - 1].pose.translation).norm();
  }
  const auto robust_thresh = [](std::vector<double> v, double floor) {
    auto med = v.begin() + v.size() / 2;
    std::nth_element(v.begin(), med, v.end());
    return std::max(10.0 * *med, floor);
  };
  const double rot_jump = robust_thresh(dang, 0.05);
  const double trans_jump = robust_thresh(dpos, 0.05);
  const auto big = [&](size_t d) {
    return dang[d] > rot_jump || dpos[d] > trans_jump;
  };
  std::vector<MoCapSample> kept;
  kept.reserve(n);
  if (!big(0)) kept.push_back(samples[0]);
  for (size_t i = 1; i + 1 < n; ++i) {
    if (!(big(i - 1) && big(i))) kept.push_back(samples[i]);
  }
  if (!big(n - 2)) kept.push_back(samples[n - 1]);
  return kept;
}

PoseSpline::PoseSpline(std::vector<Pose> knots, double tau0, double dt_knot)
    : knots_(std::move(knots)), tau0_(tau0), dt_knot_(dt_knot) {
  if (knots_.size() < 4) {
    throw TooFewSamplesError("PoseSpline: need at least 4 knots");
  }
  if (dt_knot_ <= 0.0) {
    throw SplineError("PoseSpline: non-positive knot spacing");
  }
}

int PoseSpline::segment(double tau) const {
  if (!in_domain(tau)) {
    throw OutOfDomainError("PoseSpline: query time outside valid domain");
  }
  int i = static_cast<int>(std::floor((tau - tau0_) / dt_knot_));
  i = std::clamp(i, 1, static_cast<int>(knots_.size()) - 3);
  return i;
}

BasisWeights PoseSpline::basis(double tau) const {
  const int i = segment(tau);
  const double u = (tau - tau0_ - i * dt_knot_) / dt_knot_;
  BasisWeights w;
  w.u = u;
  const double u2 = u * u;
  const double u3 = u2 * u;
  w.B0 = 1.0;
  w.B1 = (5.0 + 3.0 * u - 3.0 * u2 + u3) / 6.0;
  w.B2 = (1.0 + 3.0 * u + 3.0 * u2 - 2.0 * u3) / 6.0;
  w.B3 = u3 / 6.0;
  const double s = 1.0 / dt_knot_;
  w.dB0 = 0.0;
  w.dB1 = s * (3.0 - 6.0 * u + 3.0 * u2) / 6.0;
  w.dB2 = s * (3.0 + 6.0 * u - 6.0 * u2) / 6.0;
  w.dB3 = s * (3.0 * u2) / 6.0;
  return w;
}

Pose PoseSpline::evaluate(double tau) const {
  const int i = segment(tau);
  const BasisWeights w = basis(tau);
  const double B[3] = {w.B1, w.B2, w.B3};
  // B0 is identically 1, so the base factor is the first active knot.
  Pose T = knots_[i - 1];
  for (int j = 0; j < 3; ++j) {
    const Pose rel = knots_[i - 1 + j].inverse() * knots_[i + j];
    if (rotation_angle(rel.rotation) >= M_PI - 1e-3) {
      throw RelativeRotationNearPiError(
          "PoseSpline: knot-to-knot rotation near pi, data too sparse");
    }
    T = T * se3_exp(scaled(se3_log(rel), B[j]));
  }
  return T;
}

SplineVelocity PoseSpline::velocity(double tau) const {
  const int i = segment(tau);
  const BasisWeights w = basis(tau);
  const double B[3] = {w.B1, w.B2, w.B3};
  const double dB[3] = {w.dB1, w.dB2, w.dB3};

  Mat4 A[3];
  Mat4 G[3];
  for (int j = 0; j < 3; ++j) {
    const Pose rel = knots_[i - 1 + j].inverse() * knots_[i + j];
    if (rotation_angle(rel.rotation) >= M_PI - 1e-3) {
      throw RelativeRotationNearPiError(
          "PoseSpline: knot-to-knot rotation near pi, data too sparse");
    }
    const Twist xi = se3_log(rel);
    A[j] = se3_exp(scaled(xi, B[j])).matrix();
    G[j] = twist_generator(xi);
  }
  const Mat4 T0 = knots_[i - 1].matrix();

  // Product rule over the three exponential factors; each factor obeys
  // d/dtau exp(B xi) = dB * exp(B xi) * [xi]^.
  Mat4 Tdot = Mat4::Zero();
  Tdot += dB[0] * T0 * A[0] * G[0] * A[1] * A[2];
  Tdot += dB[1] * T0 * A[0] * A[1] * G[1] * A[2];
  Tdot += dB[2] * T0 * A[0] * A[1] * A[2] * G[2];

  const Mat4 T = T0 * A[0] * A[1] * A[2];
  const Mat3 R = T.topLeftCorner<3, 3>();
  const Mat3 Omega_raw = R.transpose() * Tdot.topLeftCorner<3, 3>();
  const Mat3 Omega = 0.5 * (Omega_raw - Omega_raw.transpose());
  const Vec3 omega_body(Omega(2, 1), Omega(0, 2), Omega(1, 0));

  SplineVelocity v;
  v.p_dot = Tdot.topRightCorner<3, 1>();
  const Quat q(R);
  const Quat qdot_half = q * Quat(0.0, omega_body.x(), omega_body.y(), omega_body.z());
  v.q_dot = 0.5 * quat_coeffs_wxyz(qdot_half);
  // Keep q_dot consistent with the sign of evaluate()'s quaternion.
  const Quat q_eval = evaluate(tau).rotation;
  if (quat_coeffs_wxyz(q_eval).dot(quat_coeffs_wxyz(q)) < 0.0) {
    v.q_dot = -v.q_dot;
  }
  return v;
}

PoseSpline build_spline(std::span<const MoCapSample> samples, bool allow_gaps,
                        bool interpolate) {
  if (samples.size() < 4) {
    throw TooFewSamplesError("build_spline: need at least 4 samples");
  }
  std::vector<double> dts;
  dts.reserve(samples.size() - 1);
  for (size_t i = 1; i < samples.size(); ++i) {
    const double d = samples[i].tau - samples[i - 1].tau;
    if (d <= 0.0) {
      throw SplineError("build_spline: non-increasing MoCap timestamps");
    }
    dts.push_back(d);
  }
  std::vector<double> sorted = dts;
  auto mid = sorted.begin() + sorted.size() / 2;
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double period = *mid;
  std::vector<std::pair<double, double>> gaps;
  for (size_t i = 0; i < dts.size(); ++i) {
    if (dts[i] > 3.0 * period) {
      if (!allow_gaps) {
        throw GapTooLargeError("build_spline: gap of " + std::to_string(dts[i]) +
                               " s at tau=" + std::to_string(samples[i].tau));
      }
      gaps.emplace_back(samples[i].tau, samples[i + 1].tau);
    }
  }

  const bool uniform =
      gaps.empty() && std::all_of(dts.begin(), dts.end(), [&](double d) {
        return std::abs(d - period) <= 1e-4 * period;
      });

  if (uniform) {
    std::vector<Pose> knots;
    knots.reserve(samples.size());
    for (const auto& s : samples) knots.push_back(s.pose);
    const double dt =
        (samples.back().tau - samples.front().tau) / double(samples.size() - 1);
    if (interpolate) {
      return interpolate_knots(knots, samples.front().tau, dt);
    }
    return PoseSpline(std::move(knots), samples.front().tau, dt);
  }

  // Resample to a uniform grid at the median rate.
  const double tau0 = samples.front().tau;
  const double span = samples.back().tau - tau0;
  const size_t K = static_cast<size_t>(std::floor(span / period)) + 1;
  if (K < 4) {
    throw TooFewSamplesError("build_spline: too few samples after resampling");
  }
  std::vector<Pose> knots;
  knots.reserve(K);
  size_t j = 0;
  for (size_t k = 0; k < K; ++k) {
    const double tau = tau0 + double(k) * period;
    while (j + 2 < samples.size() && samples[j + 1].tau < tau) ++j;
    const MoCapSample& a = samples[j];
    const MoCapSample& b = samples[j + 1];
    const double s = (tau - a.tau) / (b.tau - a.tau);
    knots.push_back(pose_interpolate(a.pose, b.pose, s));
  }
  PoseSpline spline = interpolate ? interpolate_knots(knots, tau0, period)
                                  : PoseSpline(std::move(knots), tau0, period);
  if (!gaps.empty()) {
    // Any query whose active knot window touches a bridged knot is
    // contaminated; pad by the two-knot support on each side.
    std::vector<std::pair<double, double>> ivs = spline.invalid_intervals();
    for (const auto& g : gaps) {
      ivs.emplace_back(g.first - 2.0 * period, g.second + 2.0 * period);
    }
    spline.set_invalid_intervals(std::move(ivs));
  }
  return spline;
}

}  // namespace gtforge
