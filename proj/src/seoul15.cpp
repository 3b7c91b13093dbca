// Built-in 15-intersection arterial network (77 lane groups).
//
// Layout: a 3x5 grid of signalized intersections, numbered 1..15 row-major
// (1-5 on the north row, 11-15 on the south row). Lane groups are derived
// from the morning-peak movement data below with these rules:
//   - one lane group per approach direction that has any movement;
//   - a dedicated left-turn lane group where a left movement coexists with a
//     through movement and carries at least half of the approach volume
//     (intersections 2 SB, 3 NB, 4 EB, 6 WB);
//   - one uncontrolled entry feeder lane group per boundary inflow;
//   - movements route by compass: through continues to the next intersection
//     in the travel direction, left/right turn onto the cross street; flows
//     aimed outside the grid exit the network (downstream target -1);
//   - flow entering an approach that has a left-turn lane group splits by the
//     approach's left-turn share.
// That yields 56 approach + 4 left-turn + 17 entry lane groups = 77.
//
// Signal phases follow the listed plans. Phase rows tagged EW serve the
// east-west axis, NS the north-south axis; where a plan lists the same axis
// twice and the approach has a left-turn lane group, the second occurrence
// serves the left-turn group alone, otherwise repeated rows serve the whole
// axis again. Plans whose published durations did not sum to the cycle are
// adjusted minimally (noted inline).
//
// Saturation flows are sized from the steady-state flow each lane group
// carries under the base demand (see size_saturation_flows), in 0.5 veh/s
// lane increments.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dgqn/network.hpp"
#include "network_build.hpp"

namespace dgqn {

namespace {

// Direction codes: 0=EB, 1=WB, 2=NB, 3=SB.
constexpr int EB = 0, WB = 1, NB = 2, SB = 3;
const char* kDirName[4] = {"EB", "WB", "NB", "SB"};

// Turning percentages per intersection and approach: {left, through, right}.
// 0 marks a movement that does not exist at that approach.
constexpr int kTurn[15][4][3] = {
    // EB            WB            NB            SB
    {{83, 0, 17}, {24, 0, 76}, {0, 85, 15}, {14, 58, 28}},   // 1
    {{4, 80, 16}, {9, 86, 5}, {26, 29, 45}, {59, 23, 18}},   // 2
    {{11, 62, 27}, {20, 73, 7}, {65, 10, 25}, {33, 35, 32}}, // 3
    {{57, 53, 0}, {0, 0, 0}, {46, 55, 0}, {44, 0, 56}},      // 4
    {{13, 87, 0}, {0, 82, 18}, {0, 0, 0}, {49, 0, 51}},      // 5
    {{20, 6, 74}, {55, 19, 26}, {43, 46, 11}, {11, 83, 6}},  // 6
    {{11, 81, 8}, {93, 0, 7}, {0, 0, 100}, {35, 14, 51}},    // 7
    {{0, 81, 19}, {3, 69, 28}, {37, 23, 40}, {19, 71, 10}},  // 8
    {{6, 87, 7}, {7, 87, 6}, {68, 0, 32}, {7, 0, 93}},       // 9
    {{7, 93, 0}, {0, 83, 17}, {0, 0, 0}, {67, 0, 33}},       // 10
    {{0, 94, 6}, {0, 0, 0}, {0, 100, 0}, {0, 53, 47}},       // 11
    {{37, 45, 18}, {26, 32, 42}, {10, 59, 31}, {25, 38, 37}},// 12
    {{71, 0, 29}, {0, 0, 100}, {16, 70, 14}, {0, 59, 41}},   // 13
    {{0, 0, 100}, {46, 0, 54}, {0, 82, 18}, {15, 82, 3}},    // 14
    {{0, 31, 69}, {0, 74, 26}, {11, 73, 16}, {2, 81, 17}},   // 15
};

// Boundary entry volumes (veh/h) per fed approach.
struct EntrySpec {
    int intersection;  // 1-based
    int dir;
    double vph;
};
constexpr EntrySpec kEntries[] = {
    {1, EB, 81},    {1, SB, 2506}, {2, SB, 259},  {3, SB, 169},  {4, SB, 494},
    {5, EB, 2511},  {5, SB, 352},  {7, NB, 13},   {9, NB, 236},  {10, WB, 3107},
    {12, WB, 972},  {13, NB, 485}, {14, NB, 871}, {15, WB, 231}, {15, NB, 457},
    {6, SB, 183},   {8, NB, 575},
};

// Fixed signal plans: axis tag and duration per phase. 'E' = east-west axis,
// 'N' = north-south.
struct PlanSpec {
    const char* tags;
    std::array<int, 4> durations;
    int cycle;
};
constexpr PlanSpec kPlans[15] = {
    {"NEE", {82, 48, 40, 0}, 170},
    {"NE", {40, 80, 0, 0}, 120},
    {"EENN", {45, 20, 37, 18}, 120},
    {"NEE", {55, 35, 30, 0}, 120},
    {"EEEN", {84, 39, 21, 36}, 180},  // first duration reduced from 120 to fit the cycle
    {"EEN", {73, 56, 51, 0}, 180},    // first duration raised from 37 to fit the cycle
    {"EEN", {93, 40, 37, 0}, 170},    // stray fourth duration (82) dropped; remainder fits
    {"EEN", {82, 82, 16, 0}, 180},    // third duration reduced from 82 to fit the cycle
    {"EEN", {109, 25, 26, 0}, 160},
    {"EEN", {107, 19, 44, 0}, 170},
    {"NNE", {100, 50, 40, 0}, 190},
    {"EENE", {45, 25, 40, 25}, 135},
    {"NE", {107, 33, 0, 0}, 140},
    {"NEE", {64, 39, 37, 0}, 140},
    {"ENEE", {30, 55, 25, 30}, 140},
};

bool approach_exists(int x, int d) {
    return kTurn[x][d][0] + kTurn[x][d][1] + kTurn[x][d][2] > 0;
}

bool has_left_bay(int x, int d) {
    const int l = kTurn[x][d][0], t = kTurn[x][d][1], r = kTurn[x][d][2];
    return l > 0 && t > 0 && 2 * l >= l + t + r;
}

double left_share(int x, int d) {
    const int l = kTurn[x][d][0], t = kTurn[x][d][1], r = kTurn[x][d][2];
    return static_cast<double>(l) / (l + t + r);
}

}  // namespace

RoadNetwork builtin_seoul15() {
    RoadNetwork net;
    // main_id[x][d] / left_id[x][d]: lane-group ids, -1 when absent.
    int main_id[15][4], left_id[15][4];
    for (int x = 0; x < 15; ++x)
        for (int d = 0; d < 4; ++d) main_id[x][d] = left_id[x][d] = -1;

    for (int x = 0; x < 15; ++x)
        for (int d = 0; d < 4; ++d) {
            if (!approach_exists(x, d)) continue;
            LaneGroup lg;
            lg.id = static_cast<int>(net.lane_groups.size());
            lg.intersection_id = x;
            lg.label = "i" + std::to_string(x + 1) + "-" + kDirName[d];
            main_id[x][d] = lg.id;
            net.lane_groups.push_back(std::move(lg));
            if (has_left_bay(x, d)) {
                LaneGroup left;
                left.id = static_cast<int>(net.lane_groups.size());
                left.intersection_id = x;
                left.label = "i" + std::to_string(x + 1) + "-" + kDirName[d] + "-left";
                left_id[x][d] = left.id;
                net.lane_groups.push_back(std::move(left));
            }
        }

    // Grid position of intersection index x (0-based): 3 rows x 5 columns.
    auto row = [](int x) { return x / 5; };
    auto col = [](int x) { return x % 5; };

    // Heading after each movement {left, through, right}: 0=N, 1=S, 2=E, 3=W.
    static const int kHeading[4][3] = {
        {0, 2, 1},  // EB
        {1, 3, 0},  // WB
        {3, 0, 2},  // NB
        {2, 1, 3},  // SB
    };

    // Resolves the lane groups receiving flow aimed at approach (x, d),
    // splitting by the left-turn share when a left bay exists.
    auto arrivals_into = [&](int x, int d) -> std::vector<TurnTarget> {
        if (x < 0 || main_id[x][d] < 0) return {{kExitTarget, 1.0}};
        if (left_id[x][d] >= 0) {
            const double ls = left_share(x, d);
            return {{left_id[x][d], ls}, {main_id[x][d], 1.0 - ls}};
        }
        return {{main_id[x][d], 1.0}};
    };

    auto neighbor_approach = [&](int x, int movement_heading) -> std::pair<int, int> {
        int r = row(x), c = col(x), d = 0;
        switch (movement_heading) {
            case 0: r -= 1; d = NB; break;
            case 1: r += 1; d = SB; break;
            case 2: c += 1; d = EB; break;
            case 3: c -= 1; d = WB; break;
        }
        if (r < 0 || r >= 3 || c < 0 || c >= 5) return {-1, 0};
        return {r * 5 + c, d};
    };

    auto add_movement = [&](LaneGroup& lg, int x, int d, int movement, double rate) {
        auto [tx, td] = neighbor_approach(x, kHeading[d][movement]);
        for (const TurnTarget& t : arrivals_into(tx, td))
            lg.downstream.push_back({t.to, rate * t.rate});
    };

    for (int x = 0; x < 15; ++x)
        for (int d = 0; d < 4; ++d) {
            if (main_id[x][d] < 0) continue;
            const int l = kTurn[x][d][0], t = kTurn[x][d][1], r = kTurn[x][d][2];
            LaneGroup& lg = net.lane_groups[main_id[x][d]];
            if (left_id[x][d] >= 0) {
                const double tr = t + r;
                if (t > 0) add_movement(lg, x, d, 1, t / tr);
                if (r > 0) add_movement(lg, x, d, 2, r / tr);
                LaneGroup& bay = net.lane_groups[left_id[x][d]];
                add_movement(bay, x, d, 0, 1.0);
            } else {
                const double sum = l + t + r;
                if (l > 0) add_movement(lg, x, d, 0, l / sum);
                if (t > 0) add_movement(lg, x, d, 1, t / sum);
                if (r > 0) add_movement(lg, x, d, 2, r / sum);
            }
        }

    for (const EntrySpec& e : kEntries) {
        const int x = e.intersection - 1;
        LaneGroup entry;
        entry.id = static_cast<int>(net.lane_groups.size());
        entry.intersection_id = kBoundaryIntersection;
        entry.label = "i" + std::to_string(e.intersection) + "-" + kDirName[e.dir] + "-entry";
        entry.entry_vph = e.vph;
        entry.downstream = arrivals_into(x, e.dir);
        net.lane_groups.push_back(std::move(entry));
    }

    for (int x = 0; x < 15; ++x) {
        Intersection inter;
        inter.id = x;
        const PlanSpec& plan = kPlans[x];
        const std::string tags = plan.tags;
        // Track per-axis occurrence index so a repeated axis row can serve
        // the left-turn lane group.
        int seen[2] = {0, 0};
        for (char tag : tags) {
            const bool ew = tag == 'E';
            const int axis = ew ? 0 : 1;
            const int occurrence = seen[axis]++;
            const int axis_dirs[2] = {ew ? EB : NB, ew ? WB : SB};
            std::vector<int> mains, lefts;
            for (int d : axis_dirs) {
                if (main_id[x][d] >= 0) mains.push_back(main_id[x][d]);
                if (left_id[x][d] >= 0) lefts.push_back(left_id[x][d]);
            }
            const int axis_count = static_cast<int>(std::count(tags.begin(), tags.end(), tag));
            Phase ph;
            if (axis_count == 1) {
                ph.green = mains;
                ph.green.insert(ph.green.end(), lefts.begin(), lefts.end());
            } else if (!lefts.empty() && occurrence == 1) {
                ph.green = lefts;
            } else {
                ph.green = mains;
            }
            std::sort(ph.green.begin(), ph.green.end());
            inter.phases.push_back(std::move(ph));
        }
        FixedPlan fp;
        fp.cycle_s = plan.cycle;
        for (std::size_t p = 0; p < tags.size(); ++p) fp.durations_s.push_back(plan.durations[p]);
        inter.fixed_plan = std::move(fp);
        net.intersections.push_back(std::move(inter));
    }

    detail::size_saturation_flows(net, 1.6);
    validate(net);
    net.mask = build_adjacency_mask(net);
    return net;
}

}  // namespace dgqn
