#pragma once

#include "dgqn/network.hpp"
#include "dgqn/simulator.hpp"

namespace dgqn {

/// Phase active under an intersection's fixed plan at a given clock:
/// the phase whose cumulative duration window contains (clock mod cycle).
/// Intersections without a plan hold phase 0.
int fixed_phase(const Intersection& inter, long clock_s);

/// Fixed-time controller output for the whole network.
JointAction fixed_action(const RoadNetwork& net, long clock_s);

/// D^{-1/2} (I + A) D^{-1/2} for a symmetric binary A with zero diagonal.
Tensor spectral_normalize(const Tensor& adjacency);

}  // namespace dgqn
