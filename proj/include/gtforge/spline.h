#pragma once

#include <span>
#include <vector>

#include "gtforge/geometry.h"

// Uniform cumulative cubic B-spline over MoCap poses on SE(3) with
// analytic time derivatives. Control points are the (resampled) MoCap
// measurements themselves.

namespace gtforge {

struct MoCapSample {
  double tau = 0.0;  // seconds, MoCap clock
  Pose pose;         // T_WM
};

struct SplineError : std::runtime_error {
  explicit SplineError(const std::string& what) : std::runtime_error(what) {}
};
struct TooFewSamplesError : SplineError {
  explicit TooFewSamplesError(const std::string& what) : SplineError(what) {}
};
struct GapTooLargeError : SplineError {
  explicit GapTooLargeError(const std::string& what) : SplineError(what) {}
};
struct OutOfDomainError : SplineError {
  explicit OutOfDomainError(const std::string& what) : SplineError(what) {}
};
struct RelativeRotationNearPiError : SplineError {
  explicit RelativeRotationNearPiError(const std::string& what) : SplineError(what) {}
};

// Cumulative basis values at a query time. B0 is identically 1.
struct BasisWeights {
  double B0 = 1.0, B1 = 0.0, B2 = 0.0, B3 = 0.0;
  double dB0 = 0.0, dB1 = 0.0, dB2 = 0.0, dB3 = 0.0;  // d/dtau, 1/s
  double u = 0.0;  // normalized phase in [0, 1)
};

struct SplineVelocity {
  Vec3 p_dot = Vec3::Zero();   // m/s
  Vec4 q_dot = Vec4::Zero();   // raw quaternion time derivative, wxyz, 1/s
};

class PoseSpline {
 public:
  PoseSpline() = default;
  PoseSpline(std::vector<Pose> knots, double tau0, double dt_knot);

  const std::vector<Pose>& knots() const { return knots_; }
  double tau0() const { return tau0_; }
  double dt_knot() const { return dt_knot_; }

  // Valid query domain [tau0 + dt, tau0 + (K-2) dt).
  double domain_begin() const { return tau0_ + dt_knot_; }
  double domain_end() const {
    return tau0_ + (static_cast<double>(knots_.size()) - 2.0) * dt_knot_;
  }
  bool in_domain(double tau) const {
    if (tau < domain_begin() || tau >= domain_end()) return false;
    for (const auto& iv : invalid_intervals_) {
      if (tau >= iv.first && tau < iv.second) return false;
    }
    return true;
  }

  // Sub-intervals bridged across measurement gaps; queries there are
  // rejected because the knots are interpolated, not measured.
  const std::vector<std::pair<double, double>>& invalid_intervals() const {
    return invalid_intervals_;
  }
  void set_invalid_intervals(std::vector<std::pair<double, double>> ivs) {
    invalid_intervals_ = std::move(ivs);
  }

  BasisWeights basis(double tau) const;
  Pose evaluate(double tau) const;
  SplineVelocity velocity(double tau) const;

 private:
  // Segment index and active knot window [i-1, i+2] for tau.
  int segment(double tau) const;

  std::vector<Pose> knots_;
  double tau0_ = 0.0;
  double dt_knot_ = 0.0;
  std::vector<std::pair<double, double>> invalid_intervals_;
};

// Build from raw samples. Uniform input passes through as knots; small
// timing wobble is resampled to a uniform grid at the median rate via
// per-interval constant-twist interpolation. Gaps over 3 median periods
// throw by default; with allow_gaps they are bridged by interpolated
// knots and excluded from the query domain instead.
//
// With interpolate the control points are refined by fixed-point
// iteration until the spline passes through the (resampled) measurements
// at their own timestamps; two extrapolated boundary knots are added on
// each side so the whole data span stays evaluable. Without it the
// measurements are the control points and evaluation smooths them.
PoseSpline build_spline(std::span<const MoCapSample> samples,
                        bool allow_gaps = false, bool interpolate = false);

// Drop isolated glitch poses: samples whose rotation or translation step
// to each adjacent sample exceeds 10x the median inter-frame motion
// (floors 0.05 rad / 0.05 m). Runs of dropped samples become ordinary
// timing gaps for the spline builder.
std::vector<MoCapSample> drop_mocap_glitches(std::span<const MoCapSample> samples);

}  // namespace gtforge
