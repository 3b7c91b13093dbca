#include "dgqn/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace dgqn {

int fixed_phase(const Intersection& inter, long clock_s) {
    if (!inter.fixed_plan) return 0;
    const FixedPlan& plan = *inter.fixed_plan;
    long t = clock_s % plan.cycle_s;
    if (t < 0) t += plan.cycle_s;
    long edge = 0;
    for (std::size_t p = 0; p < plan.durations_s.size(); ++p) {
        edge += plan.durations_s[p];
        if (t < edge) return static_cast<int>(p);
    }
    return static_cast<int>(plan.durations_s.size() - 1);
}

JointAction fixed_action(const RoadNetwork& net, long clock_s) {
    JointAction action(net.intersections.size());
    for (std::size_t x = 0; x < net.intersections.size(); ++x)
        action[x] = fixed_phase(net.intersections[x], clock_s);
    return action;
}

Tensor spectral_normalize(const Tensor& adjacency) {
    if (adjacency.rank() != 2 || adjacency.extent(0) != adjacency.extent(1))
        throw std::invalid_argument("spectral_normalize: input must be square, got " +
                                    adjacency.shape_str());
    const std::size_t n = adjacency.extent(0);
    for (std::size_t i = 0; i < n; ++i) {
        if (adjacency.at(i, i) != 0.0)
            throw std::invalid_argument("spectral_normalize: diagonal must be zero at row " +
                                        std::to_string(i));
        for (std::size_t j = 0; j < n; ++j) {
            const double v = adjacency.at(i, j);
            if (v != 0.0 && v != 1.0)
                throw std::invalid_argument("spectral_normalize: matrix must be binary");
            if (v != adjacency.at(j, i))
                throw std::invalid_argument("spectral_normalize: matrix must be symmetric (rows " +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
        }
    }
    std::vector<double> degree(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        degree[i] = 1.0;  // self-loop from I + A
        for (std::size_t j = 0; j < n; ++j) degree[i] += adjacency.at(i, j);
    }
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a_tilde = (i == j ? 1.0 : 0.0) + adjacency.at(i, j);
            if (a_tilde != 0.0) out.at(i, j) = a_tilde / std::sqrt(degree[i] * degree[j]);
        }
    return out;
}

}  // namespace dgqn
