#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

#include "dgqn/network.hpp"

using namespace dgqn;

namespace {

void write_with_notes(const RoadNetwork& net, const std::string& path,
                      nlohmann::json notes) {
    nlohmann::json j = nlohmann::json::parse(network_to_json(net));
    j["_notes"] = std::move(notes);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
    std::cout << "wrote " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "data";
    std::filesystem::create_directories(dir);

    write_with_notes(
        builtin_seoul15(), dir + "/seoul15.json",
        {{"summary",
          "15 signalized intersections in two arterial rows with 77 lane groups; the "
          "reconstruction of the Gangnam-area testbed this project trains on"},
         {"units",
          "demand_vph is vehicles per hour at entry lane groups; durations and cycles are "
          "seconds; turning rates per lane group sum to 1; downstream -1 leaves the network"},
         {"phases",
          "phase lists hold the lane-group ids that receive green together; fixed_plan "
          "durations follow the same order as the phase list and sum to the cycle"}});

    write_with_notes(
        grid_network(2, 2, 600, 2), dir + "/grid2x2.json",
        {{"summary",
          "synthetic 2x2 grid used for desk-scale experiments: 4 intersections, 24 lane "
          "groups, two phases each (east-west green / north-south green)"},
         {"units",
          "boundary east-west entries carry 600 vph, north-south entries 240 vph; all other "
          "conventions match seoul15.json"}});
    return 0;
}
