#pragma once

#include "grounder/projection.hpp"

#include "synthetic.hpp"

#include <vector>

namespace grounder::testing {

/// Unit cube [0,1]^3 plus a second cube whose center is 2 m away along +x.
/// Views 0..n-1 circle the unit cube at the given azimuths; `mismatched` appends one view aimed at
/// the second cube. Color and masks are 1280x960 over 640x480 depth, the ScanNet arrangement.
struct CubeRig {
  SyntheticScene scene;
  Aabb3 cube;
  Aabb3 distractor;
};

CubeRig cube_rig(const std::vector<double>& azimuths_deg, bool mismatched = false);

/// Three views spanning 30 degrees of azimuth.
inline const std::vector<double> kCubeAzimuths = {45, 30, 60};

MaskedView cube_view(const CubeRig& rig, std::size_t frame, int object);

}  // namespace grounder::testing
