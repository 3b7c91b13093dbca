#pragma once

#include "dgqn/network.hpp"

namespace dgqn::detail {

/// Sizes every lane group's saturation flow from the steady-state flow that
/// the entry demands and base turning rates imply, divided by the green share
/// its fixed plan grants, times a safety factor. Quantized up to 0.5 veh/s
/// steps (lane increments) with a 0.5 floor.
void size_saturation_flows(RoadNetwork& net, double safety);

}  // namespace dgqn::detail
