#include "dgqn/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "network_build.hpp"

namespace dgqn {

std::size_t RoadNetwork::max_phases() const {
    std::size_t m = 0;
    for (const auto& x : intersections) m = std::max(m, x.phases.size());
    return m;
}

void validate(const RoadNetwork& net) {
    const int n = static_cast<int>(net.lane_groups.size());
    const int icount = static_cast<int>(net.intersections.size());
    if (n == 0) throw std::invalid_argument("network: no lane groups");
    if (icount == 0) throw std::invalid_argument("network: no intersections");

    for (int i = 0; i < n; ++i) {
        const LaneGroup& lg = net.lane_groups[i];
        const std::string who = "lane group " + std::to_string(lg.id) +
                                (lg.label.empty() ? "" : " ('" + lg.label + "')");
        if (lg.id != i)
            throw std::invalid_argument("network: lane group ids must be 0..N-1 in order, found " +
                                        std::to_string(lg.id) + " at position " + std::to_string(i));
        if (lg.intersection_id != kBoundaryIntersection &&
            (lg.intersection_id < 0 || lg.intersection_id >= icount))
            throw std::invalid_argument("network: " + who + " references unknown intersection " +
                                        std::to_string(lg.intersection_id));
        if (!(lg.length_m > 0.0))
            throw std::invalid_argument("network: " + who + " has non-positive length");
        if (!(lg.sat_flow_vps > 0.0))
            throw std::invalid_argument("network: " + who + " has non-positive saturation flow");
        if (lg.entry_vph < 0.0)
            throw std::invalid_argument("network: " + who + " has negative entry volume");
        if (!lg.downstream.empty()) {
            double sum = 0.0;
            for (const TurnTarget& t : lg.downstream) {
                if (t.to != kExitTarget && (t.to < 0 || t.to >= n))
                    throw std::invalid_argument("network: " + who + " routes to unknown lane group " +
                                                std::to_string(t.to));
                if (t.rate < 0.0 || t.rate > 1.0)
                    throw std::invalid_argument("network: " + who + " has turning rate outside [0,1]");
                sum += t.rate;
            }
            if (std::fabs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("network: " + who + " turning rates sum to " +
                                            std::to_string(sum) + ", expected 1");
        }
    }

    for (int x = 0; x < icount; ++x) {
        const Intersection& inter = net.intersections[x];
        const std::string who = "intersection " + std::to_string(inter.id);
        if (inter.id != x)
            throw std::invalid_argument(
                "network: intersection ids must be 0..I-1 in order, found " +
                std::to_string(inter.id) + " at position " + std::to_string(x));
        if (inter.phases.empty())
            throw std::invalid_argument("network: " + who + " has no phases");
        for (std::size_t p = 0; p < inter.phases.size(); ++p) {
            const Phase& ph = inter.phases[p];
            if (ph.green.empty())
                throw std::invalid_argument("network: " + who + " phase " + std::to_string(p) +
                                            " has an empty green set");
            for (int g : ph.green) {
                if (g < 0 || g >= n)
                    throw std::invalid_argument("network: " + who + " phase " + std::to_string(p) +
                                                " references unknown lane group " +
                                                std::to_string(g));
                if (net.lane_groups[g].intersection_id != inter.id)
                    throw std::invalid_argument("network: " + who + " phase " + std::to_string(p) +
                                                " includes lane group " + std::to_string(g) +
                                                " which belongs to intersection " +
                                                std::to_string(net.lane_groups[g].intersection_id));
            }
        }
        if (inter.fixed_plan) {
            const FixedPlan& plan = *inter.fixed_plan;
            if (plan.durations_s.size() != inter.phases.size())
                throw std::invalid_argument("network: " + who + " fixed plan has " +
                                            std::to_string(plan.durations_s.size()) +
                                            " durations for " + std::to_string(inter.phases.size()) +
                                            " phases");
            int sum = 0;
            for (int d : plan.durations_s) {
                if (d <= 0)
                    throw std::invalid_argument("network: " + who +
                                                " fixed plan has a non-positive duration");
                sum += d;
            }
            if (sum != plan.cycle_s)
                throw std::invalid_argument("network: " + who + " fixed plan durations sum to " +
                                            std::to_string(sum) + ", cycle is " +
                                            std::to_string(plan.cycle_s));
        }
    }
}

Tensor build_adjacency_mask(const RoadNetwork& net) {
    const std::size_t n = net.lane_groups.size();
    Tensor mask({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        mask.at(i, i) = 1.0;
        for (const TurnTarget& t : net.lane_groups[i].downstream) {
            if (t.to == kExitTarget) continue;
            mask.at(i, static_cast<std::size_t>(t.to)) = 1.0;
            mask.at(static_cast<std::size_t>(t.to), i) = 1.0;
        }
    }
    return mask;
}

namespace {

RoadNetwork from_json(const nlohmann::json& doc) {
    RoadNetwork net;
    if (!doc.contains("lane_groups") || !doc["lane_groups"].is_array())
        throw std::invalid_argument("network file: missing 'lane_groups' array");
    if (!doc.contains("intersections") || !doc["intersections"].is_array())
        throw std::invalid_argument("network file: missing 'intersections' array");

    for (const auto& j : doc["lane_groups"]) {
        LaneGroup lg;
        if (!j.contains("id"))
            throw std::invalid_argument("network file: lane group without 'id'");
        lg.id = j["id"].get<int>();
        const std::string who = "lane group " + std::to_string(lg.id);
        if (!j.contains("intersection"))
            throw std::invalid_argument("network file: " + who + " missing 'intersection'");
        lg.intersection_id = j["intersection"].get<int>();
        lg.label = j.value("label", std::string{});
        lg.length_m = j.value("length_m", 150.0);
        lg.sat_flow_vps = j.value("sat_flow_vps", 0.5);
        lg.entry_vph = j.value("entry_vph", 0.0);
        if (j.contains("downstream")) {
            if (!j["downstream"].is_array())
                throw std::invalid_argument("network file: " + who + " 'downstream' must be an array");
            for (const auto& d : j["downstream"]) {
                if (!d.contains("to") || !d.contains("rate"))
                    throw std::invalid_argument("network file: " + who +
                                                " downstream entries need 'to' and 'rate'");
                lg.downstream.push_back({d["to"].get<int>(), d["rate"].get<double>()});
            }
        }
        net.lane_groups.push_back(std::move(lg));
    }

    for (const auto& j : doc["intersections"]) {
        Intersection inter;
        if (!j.contains("id"))
            throw std::invalid_argument("network file: intersection without 'id'");
        inter.id = j["id"].get<int>();
        const std::string who = "intersection " + std::to_string(inter.id);
        if (!j.contains("phases") || !j["phases"].is_array())
            throw std::invalid_argument("network file: " + who + " missing 'phases' array");
        for (const auto& p : j["phases"]) {
            Phase ph;
            ph.green = p.get<std::vector<int>>();
            std::sort(ph.green.begin(), ph.green.end());
            inter.phases.push_back(std::move(ph));
        }
        if (j.contains("fixed_plan") && !j["fixed_plan"].is_null()) {
            FixedPlan plan;
            plan.cycle_s = j["fixed_plan"].at("cycle_s").get<int>();
            plan.durations_s = j["fixed_plan"].at("durations").get<std::vector<int>>();
            inter.fixed_plan = std::move(plan);
        }
        net.intersections.push_back(std::move(inter));
    }

    validate(net);
    net.mask = build_adjacency_mask(net);
    return net;
}

}  // namespace

RoadNetwork parse_network(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("network file: parse failure: ") + e.what());
    }
    try {
        return from_json(doc);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("network file: malformed field: ") + e.what());
    }
}

RoadNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("network file: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_network(buf.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string(e.what()) + " (in '" + path + "')");
    }
}

std::string network_to_json(const RoadNetwork& net) {
    nlohmann::json doc;
    doc["lane_groups"] = nlohmann::json::array();
    for (const LaneGroup& lg : net.lane_groups) {
        nlohmann::json j;
        j["id"] = lg.id;
        j["intersection"] = lg.intersection_id;
        j["label"] = lg.label;
        j["length_m"] = lg.length_m;
        j["sat_flow_vps"] = lg.sat_flow_vps;
        j["downstream"] = nlohmann::json::array();
        for (const TurnTarget& t : lg.downstream)
            j["downstream"].push_back({{"to", t.to}, {"rate", t.rate}});
        j["entry_vph"] = lg.entry_vph;
        doc["lane_groups"].push_back(std::move(j));
    }
    doc["intersections"] = nlohmann::json::array();
    for (const Intersection& inter : net.intersections) {
        nlohmann::json j;
        j["id"] = inter.id;
        j["phases"] = nlohmann::json::array();
        for (const Phase& p : inter.phases) j["phases"].push_back(p.green);
        if (inter.fixed_plan) {
            j["fixed_plan"] = {{"cycle_s", inter.fixed_plan->cycle_s},
                               {"durations", inter.fixed_plan->durations_s}};
        }
        doc["intersections"].push_back(std::move(j));
    }
    return doc.dump(1);
}

void save_network(const RoadNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("network file: cannot open '" + path + "' for writing");
    out << network_to_json(net) << "\n";
}

namespace detail {

void size_saturation_flows(RoadNetwork& net, double safety) {
    const std::size_t n = net.lane_groups.size();
    std::vector<double> flow(n), arrivals(n);
    for (std::size_t i = 0; i < n; ++i) arrivals[i] = net.lane_groups[i].entry_vph / 3600.0;
    flow = arrivals;
    for (int iter = 0; iter < 300; ++iter) {
        std::vector<double> next = arrivals;
        for (std::size_t i = 0; i < n; ++i)
            for (const TurnTarget& t : net.lane_groups[i].downstream)
                if (t.to != kExitTarget) next[static_cast<std::size_t>(t.to)] += flow[i] * t.rate;
        flow = std::move(next);
    }

    std::vector<double> green_share(n, 1.0);
    for (const Intersection& inter : net.intersections) {
        std::vector<double> share_of(n, 0.0);
        double cycle = 0.0;
        for (std::size_t p = 0; p < inter.phases.size(); ++p) {
            const double dur = inter.fixed_plan
                                   ? static_cast<double>(inter.fixed_plan->durations_s[p])
                                   : 1.0;
            cycle += dur;
            for (int g : inter.phases[p].green) share_of[g] += dur;
        }
        for (std::size_t i = 0; i < n; ++i)
            if (net.lane_groups[i].intersection_id == inter.id)
                green_share[i] = std::max(share_of[i] / cycle, 1e-6);
    }

    for (std::size_t i = 0; i < n; ++i) {
        LaneGroup& lg = net.lane_groups[i];
        // Controlled groups lose 3 of every 20 seconds to amber on a switch;
        // 0.85 keeps headroom for that.
        const double effective = lg.intersection_id == kBoundaryIntersection
                                     ? 1.0
                                     : green_share[i] * 0.85;
        const double needed = flow[i] * safety / effective;
        lg.sat_flow_vps = std::max(0.5, std::ceil(needed / 0.5) * 0.5);
    }
}

}  // namespace detail

RoadNetwork grid_network(int rows, int cols, double demand_vph, int phases_per_intersection) {
    if (rows < 1 || cols < 1)
        throw std::invalid_argument("grid_network: rows and cols must be >= 1");
    if (phases_per_intersection < 1 || phases_per_intersection > 4)
        throw std::invalid_argument("grid_network: phases_per_intersection must be in 1..4");
    if (demand_vph < 0.0) throw std::invalid_argument("grid_network: negative demand");

    // Direction codes: 0=EB, 1=WB, 2=NB, 3=SB. An approach named by the
    // direction its traffic travels; EB traffic arrives from the west.
    static const char* kDir[4] = {"EB", "WB", "NB", "SB"};
    const int icount = rows * cols;
    RoadNetwork net;
    net.intersections.resize(icount);

    auto approach_id = [cols](int r, int c, int dir) { return (r * cols + c) * 4 + dir; };

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            for (int dir = 0; dir < 4; ++dir) {
                LaneGroup lg;
                lg.id = approach_id(r, c, dir);
                lg.intersection_id = r * cols + c;
                lg.label = "i" + std::to_string(lg.intersection_id) + "-" + kDir[dir];
                net.lane_groups.push_back(std::move(lg));
            }

    // Movement headings per approach direction: {left, through, right}.
    // Headings: 0=N, 1=S, 2=E, 3=W.
    static const int kHeading[4][3] = {
        {0, 2, 1},  // EB: left->N, through->E, right->S
        {1, 3, 0},  // WB
        {3, 0, 2},  // NB: left->W, through->N, right->E
        {2, 1, 3},  // SB
    };
    static const double kRate[3] = {0.2, 0.6, 0.2};

    auto target = [&](int r, int c, int heading) -> int {
        int tr = r, tc = c, dir = 0;
        switch (heading) {
            case 0: tr = r - 1; dir = 2; break;  // heading north arrives as NB
            case 1: tr = r + 1; dir = 3; break;
            case 2: tc = c + 1; dir = 0; break;
            case 3: tc = c - 1; dir = 1; break;
        }
        if (tr < 0 || tr >= rows || tc < 0 || tc >= cols) return kExitTarget;
        return approach_id(tr, tc, dir);
    };

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            for (int dir = 0; dir < 4; ++dir) {
                LaneGroup& lg = net.lane_groups[approach_id(r, c, dir)];
                for (int m = 0; m < 3; ++m)
                    lg.downstream.push_back({target(r, c, kHeading[dir][m]), kRate[m]});
            }

    // Boundary feeders: approaches with no internal upstream get an entry link.
    // East-west feeders carry the full demand, north-south feeders 40% of it.
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            for (int dir = 0; dir < 4; ++dir) {
                const bool boundary = (dir == 0 && c == 0) || (dir == 1 && c == cols - 1) ||
                                      (dir == 2 && r == rows - 1) || (dir == 3 && r == 0);
                if (!boundary) continue;
                LaneGroup entry;
                entry.id = static_cast<int>(net.lane_groups.size());
                entry.intersection_id = kBoundaryIntersection;
                entry.label = "i" + std::to_string(r * cols + c) + "-" + kDir[dir] + "-entry";
                entry.entry_vph = (dir < 2) ? demand_vph : std::round(0.4 * demand_vph);
                entry.downstream.push_back({approach_id(r, c, dir), 1.0});
                net.lane_groups.push_back(std::move(entry));
            }

    // Phase tags alternate east-west and north-south axes.
    for (int x = 0; x < icount; ++x) {
        Intersection& inter = net.intersections[x];
        inter.id = x;
        const int r = x / cols, c = x % cols;
        std::vector<int> ew = {approach_id(r, c, 0), approach_id(r, c, 1)};
        std::vector<int> ns = {approach_id(r, c, 2), approach_id(r, c, 3)};
        std::vector<int> all = {approach_id(r, c, 0), approach_id(r, c, 1),
                                approach_id(r, c, 2), approach_id(r, c, 3)};
        for (int p = 0; p < phases_per_intersection; ++p) {
            Phase ph;
            if (phases_per_intersection == 1)
                ph.green = all;
            else
                ph.green = (p % 2 == 0) ? ew : ns;
            inter.phases.push_back(std::move(ph));
        }
        FixedPlan plan;
        plan.cycle_s = 60;
        const int base = 60 / phases_per_intersection;
        plan.durations_s.assign(phases_per_intersection, base);
        plan.durations_s.back() += 60 - base * phases_per_intersection;
        inter.fixed_plan = std::move(plan);
    }

    detail::size_saturation_flows(net, 1.6);
    validate(net);
    net.mask = build_adjacency_mask(net);
    return net;
}

}  // namespace dgqn
