#pragma once

#include <vector>

#include "gtforge/geometry.h"

namespace gtforge {

struct TrajectorySample {
  double t = 0.0;
  Pose pose;
};

// Timestamped SE(3) pose sequence, strictly increasing time.
using Trajectory = std::vector<TrajectorySample>;

}  // namespace gtforge
