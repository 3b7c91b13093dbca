#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dgqn/tensor.hpp"

namespace dgqn {

/// Downstream target id -1 means the flow leaves the network at discharge.
constexpr int kExitTarget = -1;
/// Intersection id assigned to uncontrolled boundary links (entry feeders);
/// they are always allowed to discharge and belong to no signal phase.
constexpr int kBoundaryIntersection = -1;

struct TurnTarget {
    int to = kExitTarget;
    double rate = 0.0;
    friend bool operator==(const TurnTarget&, const TurnTarget&) = default;
};

struct LaneGroup {
    int id = 0;
    int intersection_id = kBoundaryIntersection;
    std::string label;
    double length_m = 150.0;
    double sat_flow_vps = 0.5;
    std::vector<TurnTarget> downstream;
    double entry_vph = 0.0;

    bool is_entry() const { return entry_vph > 0.0; }
    friend bool operator==(const LaneGroup&, const LaneGroup&) = default;
};

struct Phase {
    std::vector<int> green;  // sorted lane-group ids
    friend bool operator==(const Phase&, const Phase&) = default;
};

struct FixedPlan {
    int cycle_s = 0;
    std::vector<int> durations_s;  // one per phase, summing to cycle_s
    friend bool operator==(const FixedPlan&, const FixedPlan&) = default;
};

struct Intersection {
    int id = 0;
    std::vector<Phase> phases;
    std::optional<FixedPlan> fixed_plan;
    friend bool operator==(const Intersection&, const Intersection&) = default;
};

struct RoadNetwork {
    std::vector<LaneGroup> lane_groups;
    std::vector<Intersection> intersections;
    Tensor mask;  // N x N, first-order neighbors plus self

    std::size_t lane_group_count() const { return lane_groups.size(); }
    std::size_t intersection_count() const { return intersections.size(); }
    std::size_t max_phases() const;

    friend bool operator==(const RoadNetwork& a, const RoadNetwork& b) {
        return a.lane_groups == b.lane_groups && a.intersections == b.intersections;
    }
};

/// Throws std::invalid_argument naming the offending entity when any
/// structural invariant fails.
void validate(const RoadNetwork& net);

/// First-order connectivity: mask[i][j] = 1 iff i=j or one routes into the other.
Tensor build_adjacency_mask(const RoadNetwork& net);

RoadNetwork load_network(const std::string& path);
RoadNetwork parse_network(const std::string& json_text);
void save_network(const RoadNetwork& net, const std::string& path);
std::string network_to_json(const RoadNetwork& net);

/// The shipped 15-intersection arterial network (77 lane groups).
RoadNetwork builtin_seoul15();

/// Synthetic rows x cols orthogonal grid. East-west boundary entries receive
/// demand_vph; north-south entries receive 40% of it, so an equal-split fixed
/// plan is deliberately suboptimal.
RoadNetwork grid_network(int rows, int cols, double demand_vph, int phases_per_intersection);

}  // namespace dgqn
