#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dgqn/model.hpp"
#include "dgqn/simulator.hpp"

namespace dgqn {

struct EvalEpisode {
    int episode = 0;  // 1-based
    std::uint64_t seed = 0;
    double total_delay_h = 0.0;
    double max_queue_m = 0.0;
    std::string termination_cause;
    int decisions = 0;
};

struct EvalReport {
    std::string model;
    int episodes = 0;
    std::uint64_t seed = 0;
    std::vector<EvalEpisode> rows;
    double mean_total_delay_h = 0.0;
    double stddev_total_delay_h = 0.0;
    double mean_max_queue_m = 0.0;
    double stddev_max_queue_m = 0.0;
};

/// Decides the joint phases for the next interval from the live simulator
/// and the lag-stacked state the controller would observe.
using Controller = std::function<JointAction(const Simulator&, const StateTensor&)>;

/// Runs `episodes` fresh episodes (seed, seed+1, ...) to terminal or horizon
/// and aggregates per-episode total delay and peak queue.
EvalReport evaluate_controller(const RoadNetwork& net, const SimConfig& sim_cfg,
                               const ModelConfig& state_cfg, int episodes, std::uint64_t seed,
                               const std::string& label, const Controller& controller);

EvalReport evaluate_fixed(const RoadNetwork& net, const SimConfig& sim_cfg, int episodes,
                          std::uint64_t seed);

/// Greedy (no exploration) rollout of a trained value model.
EvalReport evaluate_greedy(const QModel& model, const ParamStore& params,
                           const SimConfig& sim_cfg, int episodes, std::uint64_t seed);

std::string eval_csv(const EvalReport& report);
std::string eval_json(const EvalReport& report);

}  // namespace dgqn
