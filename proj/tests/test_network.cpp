#include <cmath>
#include <cstdio>
#include <set>
#include <string>

#include "doctest.h"
#include "dgqn/baselines.hpp"
#include "dgqn/network.hpp"

using namespace dgqn;

namespace {

// lg0 (intersection 0) -> lg1 (boundary sink); one single-phase signal.
RoadNetwork two_lane_chain() {
    RoadNetwork net;
    LaneGroup a;
    a.id = 0;
    a.intersection_id = 0;
    a.downstream = {{1, 1.0}};
    LaneGroup b;
    b.id = 1;
    net.lane_groups = {a, b};
    Intersection x;
    x.id = 0;
    x.phases = {Phase{{0}}};
    net.intersections = {x};
    return net;
}

const LaneGroup& find_label(const RoadNetwork& net, const std::string& label) {
    for (const LaneGroup& lg : net.lane_groups)
        if (lg.label == label) return lg;
    FAIL("no lane group labelled ", label);
    return net.lane_groups.front();
}

}  // namespace

TEST_CASE("adjacency mask marks self plus first-order neighbors") {
    RoadNetwork net = two_lane_chain();
    Tensor mask = build_adjacency_mask(net);
    CHECK(mask == Tensor::row_major({2, 2}, {1, 1, 1, 1}));

    SUBCASE("an isolated lane group keeps only its diagonal entry") {
        LaneGroup c;
        c.id = 2;
        net.lane_groups.push_back(c);
        Tensor m3 = build_adjacency_mask(net);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(m3.at(2, j) == (j == 2 ? 1.0 : 0.0));
            CHECK(m3.at(j, 2) == (j == 2 ? 1.0 : 0.0));
        }
    }

    SUBCASE("exit targets do not create mask edges") {
        net.lane_groups[1].downstream = {{kExitTarget, 1.0}};
        Tensor m = build_adjacency_mask(net);
        CHECK(m == Tensor::row_major({2, 2}, {1, 1, 1, 1}));
    }
}

TEST_CASE("validate rejects malformed networks with named entities") {
    SUBCASE("turning rates summing to 0.9") {
        RoadNetwork net = two_lane_chain();
        net.lane_groups[0].downstream = {{1, 0.9}};
        CHECK_THROWS_WITH_AS(validate(net),
                             doctest::Contains("turning rates sum to 0.9"),
                             std::invalid_argument);
    }
    SUBCASE("phase borrowing another intersection's lane group") {
        RoadNetwork net = two_lane_chain();
        net.lane_groups[1].intersection_id = 1;
        Intersection other;
        other.id = 1;
        other.phases = {Phase{{0}}};  // lane group 0 belongs to intersection 0
        net.intersections.push_back(other);
        CHECK_THROWS_WITH_AS(validate(net), doctest::Contains("intersection 1"),
                             std::invalid_argument);
    }
    SUBCASE("fixed plan durations not summing to the cycle") {
        RoadNetwork net = two_lane_chain();
        net.intersections[0].fixed_plan = FixedPlan{30, {20}};
        CHECK_THROWS_WITH_AS(validate(net), doctest::Contains("durations sum to 20"),
                             std::invalid_argument);
    }
    SUBCASE("out-of-order lane group ids") {
        RoadNetwork net = two_lane_chain();
        std::swap(net.lane_groups[0], net.lane_groups[1]);
        CHECK_THROWS_AS(validate(net), std::invalid_argument);
    }
    SUBCASE("route to an unknown lane group") {
        RoadNetwork net = two_lane_chain();
        net.lane_groups[0].downstream = {{7, 1.0}};
        CHECK_THROWS_WITH_AS(validate(net), doctest::Contains("unknown lane group 7"),
                             std::invalid_argument);
    }
    SUBCASE("empty phase") {
        RoadNetwork net = two_lane_chain();
        net.intersections[0].phases.push_back(Phase{});
        CHECK_THROWS_WITH_AS(validate(net), doctest::Contains("empty green set"),
                             std::invalid_argument);
    }
    SUBCASE("non-positive length") {
        RoadNetwork net = two_lane_chain();
        net.lane_groups[1].length_m = 0.0;
        CHECK_THROWS_AS(validate(net), std::invalid_argument);
    }
}

TEST_CASE("builtin network has the published structure") {
    RoadNetwork net = builtin_seoul15();
    CHECK(net.lane_group_count() == 77);
    CHECK(net.intersection_count() == 15);
    CHECK(net.max_phases() == 4);
    CHECK_NOTHROW(validate(net));

    const int cycles[15] = {170, 120, 120, 120, 180, 180, 170, 180,
                            160, 170, 190, 135, 140, 140, 140};
    for (int x = 0; x < 15; ++x) {
        REQUIRE(net.intersections[x].fixed_plan.has_value());
        CHECK(net.intersections[x].fixed_plan->cycle_s == cycles[x]);
    }

    SUBCASE("entry volumes match the survey") {
        int entries = 0;
        double total = 0.0;
        for (const LaneGroup& lg : net.lane_groups)
            if (lg.is_entry()) {
                ++entries;
                total += lg.entry_vph;
                CHECK(lg.intersection_id == kBoundaryIntersection);
            }
        CHECK(entries == 17);
        CHECK(total == doctest::Approx(13502.0));
        CHECK(find_label(net, "i10-WB-entry").entry_vph == 3107.0);
        CHECK(find_label(net, "i1-SB-entry").entry_vph == 2506.0);
        CHECK(find_label(net, "i5-EB-entry").entry_vph == 2511.0);
        CHECK(find_label(net, "i7-NB-entry").entry_vph == 13.0);
    }

    SUBCASE("mask row sums equal one plus degree") {
        const std::size_t n = net.lane_group_count();
        REQUIRE(net.mask.shape() == std::vector<std::size_t>({n, n}));
        std::vector<std::set<int>> neighbors(n);
        for (std::size_t i = 0; i < n; ++i)
            for (const TurnTarget& t : net.lane_groups[i].downstream) {
                if (t.to == kExitTarget) continue;
                neighbors[i].insert(t.to);
                neighbors[static_cast<std::size_t>(t.to)].insert(static_cast<int>(i));
            }
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double v = net.mask.at(i, j);
                CHECK((v == 0.0 || v == 1.0));
                CHECK(v == net.mask.at(j, i));
                row += v;
            }
            neighbors[i].erase(static_cast<int>(i));
            CHECK(row == 1.0 + static_cast<double>(neighbors[i].size()));
            CHECK(net.mask.at(i, i) == 1.0);
        }
    }

    SUBCASE("every controlled lane group is served by some phase") {
        std::vector<bool> served(net.lane_group_count(), false);
        for (const Intersection& x : net.intersections)
            for (const Phase& p : x.phases)
                for (int g : p.green) served[static_cast<std::size_t>(g)] = true;
        for (const LaneGroup& lg : net.lane_groups) {
            if (lg.intersection_id == kBoundaryIntersection) continue;
            CHECK_MESSAGE(served[static_cast<std::size_t>(lg.id)], "unserved: ", lg.label);
        }
    }

    SUBCASE("internal flow eventually reaches an exit") {
        // Every lane group must route somewhere: detached queues would trap
        // vehicles and break the long-horizon stability of the testbed.
        for (const LaneGroup& lg : net.lane_groups)
            CHECK_MESSAGE(!lg.downstream.empty(), "sink without exit: ", lg.label);
    }
}

TEST_CASE("network files round-trip field for field") {
    const std::string path = "roundtrip_net.json";
    RoadNetwork net = builtin_seoul15();
    save_network(net, path);
    RoadNetwork back = load_network(path);
    CHECK(back == net);
    CHECK(back.mask == net.mask);
    std::remove(path.c_str());

    SUBCASE("unknown keys are ignored") {
        std::string text = network_to_json(net);
        REQUIRE(text.front() == '{');
        std::string annotated = "{\n \"_notes\": \"hand-edited\"," + text.substr(1);
        RoadNetwork again = parse_network(annotated);
        CHECK(again == net);
    }
    SUBCASE("parse errors are reported as invalid input") {
        CHECK_THROWS_AS(parse_network("{\"lane_groups\": ["), std::invalid_argument);
    }
    SUBCASE("missing files name the path") {
        CHECK_THROWS_WITH_AS(load_network("no_such_dir/net.json"),
                             doctest::Contains("no_such_dir/net.json"), std::invalid_argument);
    }
    SUBCASE("invalid fixture fails validation on load") {
        RoadNetwork bad = two_lane_chain();
        bad.lane_groups[0].downstream = {{1, 0.9}};
        std::string text = network_to_json(bad);
        CHECK_THROWS_WITH_AS(parse_network(text), doctest::Contains("turning rates sum"),
                             std::invalid_argument);
    }
}

TEST_CASE("grid networks are valid and deterministic") {
    SUBCASE("1x1 grid") {
        RoadNetwork g = grid_network(1, 1, 600, 2);
        CHECK(g.intersection_count() == 1);
        CHECK_NOTHROW(validate(g));
    }
    SUBCASE("2x2 grid") {
        RoadNetwork g = grid_network(2, 2, 600, 2);
        CHECK(g.intersection_count() == 4);
        CHECK(g.lane_group_count() == 24);  // 16 approaches + 8 boundary feeders
        CHECK(g.max_phases() == 2);
        CHECK_NOTHROW(validate(g));
        for (const LaneGroup& lg : g.lane_groups) CHECK(!lg.downstream.empty());

        int ew = 0, ns = 0;
        for (const LaneGroup& lg : g.lane_groups) {
            if (!lg.is_entry()) continue;
            if (lg.entry_vph == 600.0) ++ew;
            if (lg.entry_vph == 240.0) ++ns;
        }
        CHECK(ew == 4);
        CHECK(ns == 4);

        const std::size_t n = g.lane_group_count();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) CHECK(g.mask.at(i, j) == g.mask.at(j, i));

        CHECK(grid_network(2, 2, 600, 2) == g);
    }
    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(grid_network(0, 2, 600, 2), std::invalid_argument);
        CHECK_THROWS_AS(grid_network(2, 2, 600, 0), std::invalid_argument);
        CHECK_THROWS_AS(grid_network(2, 2, -5, 2), std::invalid_argument);
    }
}

TEST_CASE("fixed-time control follows plan windows") {
    RoadNetwork net = builtin_seoul15();
    const Intersection& i1 = net.intersections[0];  // durations 82/48/40, cycle 170
    const Intersection& i2 = net.intersections[1];  // durations 40/80, cycle 120

    CHECK(fixed_phase(i2, 10) == 0);
    CHECK(fixed_phase(i2, 50) == 1);
    CHECK(fixed_phase(i2, 120) == fixed_phase(i2, 0));
    CHECK(fixed_phase(i1, 169) == 2);
    CHECK(fixed_phase(i1, 82) == 1);
    CHECK(fixed_phase(i1, 81) == 0);

    SUBCASE("intersections without a plan hold phase zero") {
        Intersection bare;
        bare.phases = {Phase{{0}}, Phase{{1}}};
        CHECK(fixed_phase(bare, 999) == 0);
    }

    SUBCASE("per-phase time over a full cycle equals the plan durations") {
        for (const Intersection& x : net.intersections) {
            const FixedPlan& plan = *x.fixed_plan;
            std::vector<int> seconds(x.phases.size(), 0);
            for (int t = 0; t < plan.cycle_s; ++t) ++seconds[fixed_phase(x, t)];
            for (std::size_t p = 0; p < seconds.size(); ++p)
                CHECK(seconds[p] == plan.durations_s[p]);
        }
    }

    SUBCASE("fixed_action emits one feasible phase per intersection") {
        for (long clock : {0L, 400L, 1234L}) {
            JointAction a = fixed_action(net, clock);
            REQUIRE(a.size() == net.intersection_count());
            for (std::size_t x = 0; x < a.size(); ++x) {
                CHECK(a[x] >= 0);
                CHECK(a[x] < static_cast<int>(net.intersections[x].phases.size()));
                CHECK(a[x] == fixed_phase(net.intersections[x], clock));
            }
        }
    }
}

TEST_CASE("spectral normalization of a constant adjacency") {
    SUBCASE("two mutually connected nodes") {
        Tensor a = Tensor::row_major({2, 2}, {0, 1, 1, 0});
        Tensor out = spectral_normalize(a);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) CHECK(out.at(i, j) == doctest::Approx(0.5));
    }
    SUBCASE("isolated node keeps weight one on itself") {
        Tensor a = Tensor::row_major({3, 3}, {0, 1, 0, 1, 0, 0, 0, 0, 0});
        Tensor out = spectral_normalize(a);
        CHECK(out.at(2, 2) == doctest::Approx(1.0));
        CHECK(out.at(0, 1) == doctest::Approx(0.5));
        CHECK(out.at(2, 0) == 0.0);
    }
    SUBCASE("matches the closed form on the grid mask") {
        RoadNetwork g = grid_network(2, 2, 600, 2);
        const std::size_t n = g.lane_group_count();
        Tensor a = g.mask;
        for (std::size_t i = 0; i < n; ++i) a.at(i, i) = 0.0;
        Tensor out = spectral_normalize(a);
        std::vector<double> deg(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            deg[i] = 1.0;
            for (std::size_t j = 0; j < n; ++j) deg[i] += a.at(i, j);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double tilde = (i == j ? 1.0 : a.at(i, j));
                CHECK(out.at(i, j) == doctest::Approx(tilde / std::sqrt(deg[i] * deg[j])));
                CHECK(std::fabs(out.at(i, j) - out.at(j, i)) <= 1e-12);
            }
    }
    SUBCASE("rejects asymmetric and self-looped input") {
        CHECK_THROWS_AS(spectral_normalize(Tensor::row_major({2, 2}, {0, 1, 0, 0})),
                        std::invalid_argument);
        CHECK_THROWS_AS(spectral_normalize(Tensor::row_major({2, 2}, {1, 1, 1, 0})),
                        std::invalid_argument);
        CHECK_THROWS_AS(spectral_normalize(Tensor::row_major({2, 2}, {0, 0.5, 0.5, 0})),
                        std::invalid_argument);
    }
}
