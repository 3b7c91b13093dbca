#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dgqn/network.hpp"

namespace dgqn {

/// One phase index per intersection.
using JointAction = std::vector<int>;

struct SimConfig {
    int tick_s = 1;
    int t_initial_s = 400;
    int t_max_s = 4000;
    int delta_t_s = 20;
    int amber_s = 3;
    int entry_capacity_veh = 40;
    double vehicle_spacing_m = 7.5;
    double demand_scale_range = 0.30;
    double turning_perturb_range = 0.30;
    int turning_perturb_period_s = 400;
    double delay_threshold_s = 16000.0;

    void check() const;
};

struct LaneObservation {
    double delay_s = 0.0;     // veh-seconds accumulated over the interval
    double queue_len_m = 0.0; // queue at measurement time
};

struct Observation {
    std::vector<LaneObservation> lanes;
    double total_delay_h = 0.0;
    double max_queue_m = 0.0;
};

enum class TerminationCause { none, entry_full, delay_threshold, horizon };
const char* to_string(TerminationCause cause);

/// Store-and-forward mesoscopic simulator: integer point queues per lane
/// group, Poisson arrivals at entries, saturation-flow discharge on green
/// with fractional carryover, per-vehicle multinomial routing, and stopped
/// delay of 1 veh-second per queued vehicle per tick.
class Simulator {
public:
    Simulator(const RoadNetwork& net, SimConfig cfg, std::uint64_t seed);

    /// Draws per-entry demand scales, then runs the warm-up period under the
    /// network's fixed plans at unscaled demand. Delay accumulators are
    /// zeroed afterwards; vehicle counters are not (conservation holds from
    /// the first tick).
    void reset();

    /// Runs (delta_t - amber) seconds under the chosen phases, then amber
    /// seconds during which lane groups whose signal changed since the
    /// previous interval are held red. Returns the interval measurement and
    /// clears the interval accumulators.
    Observation apply_joint_action(const JointAction& action);

    /// Low-level single tick; greens indexed by lane-group id. Uncontrolled
    /// (boundary) lane groups discharge regardless.
    void step_second(const std::vector<char>& greens);

    std::pair<bool, TerminationCause> is_terminal() const;

    void perturb_turning();

    const Observation& last_observation() const { return last_obs_; }
    long clock_s() const { return clock_s_; }
    double last_interval_delay_s() const { return last_interval_delay_s_; }
    double cum_delay_s() const { return cum_delay_s_; }
    long long entered_total() const { return entered_; }
    long long exited_total() const { return exited_; }
    long long queued_total() const;
    const std::vector<long long>& queues() const { return queue_; }
    const std::vector<long long>& entry_backlog() const { return backlog_; }
    const std::vector<double>& episode_entry_scale() const { return entry_scale_; }
    const std::vector<std::vector<TurnTarget>>& current_turning() const { return turning_; }
    const RoadNetwork& network() const { return net_; }
    const SimConfig& config() const { return cfg_; }

    /// Greens implied by a joint action (union of the chosen phases plus
    /// uncontrolled lane groups).
    std::vector<char> greens_for(const JointAction& action) const;

    /// Test seam: places vehicles directly into a queue, keeping the
    /// conservation ledger consistent.
    void inject_vehicles(int lane_group, long long count);

    /// Called after every tick when set.
    std::function<void(const Simulator&)> tick_hook;

private:
    void run_interval(const std::vector<char>& new_greens);
    Observation measure_and_clear();

    const RoadNetwork& net_;
    SimConfig cfg_;
    std::uint64_t seed_;
    std::mt19937_64 rng_;

    long clock_s_ = 0;
    std::vector<long long> queue_;
    std::vector<long long> backlog_;
    std::vector<double> carry_;
    std::vector<double> interval_delay_;
    std::vector<double> entry_scale_;
    std::vector<std::vector<TurnTarget>> turning_;
    std::vector<char> prev_greens_;
    std::vector<char> uncontrolled_;
    double cum_delay_s_ = 0.0;
    double last_interval_delay_s_ = 0.0;
    long long entered_ = 0;
    long long exited_ = 0;
    Observation last_obs_;
};

}  // namespace dgqn
