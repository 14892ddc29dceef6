#pragma once

#include <vector>

#include "gtforge/trajectory.h"

// Trajectory alignment and the ATE / ARE / RTE / RRE error metrics
// (all reported as RMSE).

namespace gtforge {

struct MetricsError : std::runtime_error {
  explicit MetricsError(const std::string& what) : std::runtime_error(what) {}
};
struct NoOverlapError : MetricsError {
  explicit NoOverlapError(const std::string& what) : MetricsError(what) {}
};

struct PosePair {
  double t = 0.0;
  Pose est;
  Pose ref;
};

struct MetricReport {
  double ate_rmse = 0.0;  // m
  double are_rmse = 0.0;  // rad
  double rte_rmse = 0.0;  // m
  double rre_rmse = 0.0;  // rad
  int n_associated = 0;
  Pose alignment;         // applied to est before absolute errors
};

struct AlignResult {
  Pose transform;
  bool degenerate_geometry = false;  // collinear positions
};

// Resample both trajectories (constant-twist interpolation) to a common
// grid at `rate` on the overlap; drop grid points whose nearest source
// sample in either trajectory is farther than max_dt.
std::vector<PosePair> associate_and_resample(const Trajectory& est,
                                             const Trajectory& ref,
                                             double rate = 50.0,
                                             double max_dt = 0.02);

// Closed-form least-squares SE(3) alignment (no scale) of estimated onto
// reference positions: centroid shift plus orthogonal Procrustes.
AlignResult align_se3(const std::vector<PosePair>& pairs);

// ATE = RMSE of position error norm, ARE = RMSE of geodesic rotation
// angle, after applying `alignment` to the estimated poses.
void absolute_errors(const std::vector<PosePair>& pairs, const Pose& alignment,
                     double* ate_rmse, double* are_rmse);

// Relative pose error over a window of `delta` seconds (a multiple of the
// resample period). Invariant to rigid transforms of either trajectory.
void relative_errors(const std::vector<PosePair>& pairs, double delta,
                     double* rte_rmse, double* rre_rmse);

// Full pipeline: associate, align, absolute and one-frame relative errors.
MetricReport evaluate_trajectories(const Trajectory& est, const Trajectory& ref,
                                   double rate = 50.0, double max_dt = 0.02);

}  // namespace gtforge
