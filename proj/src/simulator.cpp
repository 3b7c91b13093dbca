#include "dgqn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dgqn/baselines.hpp"

namespace dgqn {

void SimConfig::check() const {
    if (tick_s != 1) throw std::invalid_argument("sim config: tick_s must be 1");
    if (delta_t_s <= amber_s)
        throw std::invalid_argument("sim config: delta_t_s must exceed amber_s");
    if (t_initial_s >= t_max_s)
        throw std::invalid_argument("sim config: t_initial_s must be below t_max_s");
    if (demand_scale_range < 0.0 || demand_scale_range >= 1.0 || turning_perturb_range < 0.0 ||
        turning_perturb_range >= 1.0)
        throw std::invalid_argument("sim config: perturbation ranges must be in [0,1)");
    if (entry_capacity_veh <= 0)
        throw std::invalid_argument("sim config: entry capacity must be positive");
    if (turning_perturb_period_s <= 0)
        throw std::invalid_argument("sim config: turning perturbation period must be positive");
}

const char* to_string(TerminationCause cause) {
    switch (cause) {
        case TerminationCause::none: return "none";
        case TerminationCause::entry_full: return "entry_full";
        case TerminationCause::delay_threshold: return "delay_threshold";
        case TerminationCause::horizon: return "horizon";
    }
    return "unknown";
}

Simulator::Simulator(const RoadNetwork& net, SimConfig cfg, std::uint64_t seed)
    : net_(net), cfg_(cfg), seed_(seed), rng_(seed) {
    cfg_.check();
    const std::size_t n = net_.lane_groups.size();
    queue_.assign(n, 0);
    backlog_.assign(n, 0);
    carry_.assign(n, 0.0);
    interval_delay_.assign(n, 0.0);
    entry_scale_.assign(n, 1.0);
    uncontrolled_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        uncontrolled_[i] = net_.lane_groups[i].intersection_id == kBoundaryIntersection ? 1 : 0;
    turning_.resize(n);
    for (std::size_t i = 0; i < n; ++i) turning_[i] = net_.lane_groups[i].downstream;
    prev_greens_.assign(n, 1);
    last_obs_.lanes.assign(n, {});
}

void Simulator::reset() {
    rng_.seed(seed_);
    const std::size_t n = net_.lane_groups.size();
    clock_s_ = 0;
    std::fill(queue_.begin(), queue_.end(), 0);
    std::fill(backlog_.begin(), backlog_.end(), 0);
    std::fill(carry_.begin(), carry_.end(), 0.0);
    std::fill(interval_delay_.begin(), interval_delay_.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) turning_[i] = net_.lane_groups[i].downstream;
    // The first interval sees no signal change, so no amber-forced red.
    std::fill(prev_greens_.begin(), prev_greens_.end(), 1);
    cum_delay_s_ = 0.0;
    last_interval_delay_s_ = 0.0;
    entered_ = 0;
    exited_ = 0;

    std::uniform_real_distribution<double> scale(1.0 - cfg_.demand_scale_range,
                                                 1.0 + cfg_.demand_scale_range);
    for (std::size_t i = 0; i < n; ++i)
        entry_scale_[i] = net_.lane_groups[i].is_entry() ? scale(rng_) : 1.0;

    // Warm-up under the fixed plans; demand stays unscaled while
    // clock < t_initial (see step_second).
    while (clock_s_ < cfg_.t_initial_s) apply_joint_action(fixed_action(net_, clock_s_));
    std::fill(interval_delay_.begin(), interval_delay_.end(), 0.0);
    cum_delay_s_ = 0.0;
    last_interval_delay_s_ = 0.0;
}

std::vector<char> Simulator::greens_for(const JointAction& action) const {
    if (action.size() != net_.intersections.size())
        throw std::invalid_argument("apply_joint_action: expected " +
                                    std::to_string(net_.intersections.size()) +
                                    " phase indices, got " + std::to_string(action.size()));
    std::vector<char> greens(uncontrolled_.begin(), uncontrolled_.end());
    for (std::size_t x = 0; x < action.size(); ++x) {
        const Intersection& inter = net_.intersections[x];
        const int p = action[x];
        if (p < 0 || p >= static_cast<int>(inter.phases.size()))
            throw std::invalid_argument("apply_joint_action: phase " + std::to_string(p) +
                                        " infeasible for intersection " + std::to_string(inter.id));
        for (int g : inter.phases[p].green) greens[g] = 1;
    }
    return greens;
}

void Simulator::step_second(const std::vector<char>& greens) {
    const std::size_t n = net_.lane_groups.size();
    // Arrivals: Poisson into the entry backlog, then admission up to capacity.
    for (std::size_t i = 0; i < n; ++i) {
        const LaneGroup& lg = net_.lane_groups[i];
        if (!lg.is_entry()) continue;
        const double scale = clock_s_ < cfg_.t_initial_s ? 1.0 : entry_scale_[i];
        const double mean = lg.entry_vph * scale / 3600.0;
        std::poisson_distribution<long long> arrivals(mean);
        backlog_[i] += arrivals(rng_);
        const long long room = cfg_.entry_capacity_veh - queue_[i];
        const long long admit = std::max(0LL, std::min(backlog_[i], room));
        backlog_[i] -= admit;
        queue_[i] += admit;
        entered_ += admit;
    }

    // Discharge on green at saturation flow with fractional carryover;
    // routed vehicles become available downstream next tick.
    std::vector<long long> staged(n, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!greens[i]) continue;
        carry_[i] += net_.lane_groups[i].sat_flow_vps;
        long long d = std::min(queue_[i], static_cast<long long>(std::floor(carry_[i])));
        carry_[i] -= static_cast<double>(d);
        queue_[i] -= d;
        // Service credit accrues only against a standing queue; an idle
        // green must not bank discharge capacity.
        if (queue_[i] == 0) carry_[i] = 0.0;
        if (d == 0) continue;
        const auto& targets = turning_[i];
        if (targets.empty()) {
            exited_ += d;
            continue;
        }
        for (long long v = 0; v < d; ++v) {
            const double u = unit(rng_);
            double cdf = 0.0;
            int to = targets.back().to;
            for (const TurnTarget& t : targets) {
                cdf += t.rate;
                if (u < cdf) {
                    to = t.to;
                    break;
                }
            }
            if (to == kExitTarget)
                ++exited_;
            else
                ++staged[static_cast<std::size_t>(to)];
        }
    }
    for (std::size_t i = 0; i < n; ++i) queue_[i] += staged[i];

    // Stopped delay: one vehicle-second per queued vehicle per tick.
    for (std::size_t i = 0; i < n; ++i) {
        if (queue_[i] <= 0) continue;
        const double veh = static_cast<double>(queue_[i]);
        interval_delay_[i] += veh;
        cum_delay_s_ += veh;
    }

    clock_s_ += 1;

    if (clock_s_ > cfg_.t_initial_s &&
        (clock_s_ - cfg_.t_initial_s) % cfg_.turning_perturb_period_s == 0)
        perturb_turning();

    if (tick_hook) tick_hook(*this);
}

void Simulator::perturb_turning() {
    std::uniform_real_distribution<double> factor(1.0 - cfg_.turning_perturb_range,
                                                  1.0 + cfg_.turning_perturb_range);
    for (std::size_t i = 0; i < net_.lane_groups.size(); ++i) {
        const auto& base = net_.lane_groups[i].downstream;
        if (base.empty()) continue;
        auto& cur = turning_[i];
        double sum = 0.0;
        for (std::size_t k = 0; k < base.size(); ++k) {
            cur[k].rate = base[k].rate * factor(rng_);
            sum += cur[k].rate;
        }
        for (auto& t : cur) t.rate /= sum;
    }
}

void Simulator::run_interval(const std::vector<char>& new_greens) {
    for (int t = 0; t < cfg_.delta_t_s - cfg_.amber_s; ++t) step_second(new_greens);
    std::vector<char> amber(new_greens.size());
    for (std::size_t i = 0; i < new_greens.size(); ++i)
        amber[i] = (new_greens[i] && prev_greens_[i]) ? 1 : 0;
    for (int t = 0; t < cfg_.amber_s; ++t) step_second(amber);
    prev_greens_ = new_greens;
}

Observation Simulator::measure_and_clear() {
    const std::size_t n = net_.lane_groups.size();
    Observation obs;
    obs.lanes.resize(n);
    double total_s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        obs.lanes[i].delay_s = interval_delay_[i];
        obs.lanes[i].queue_len_m = static_cast<double>(queue_[i]) * cfg_.vehicle_spacing_m;
        total_s += interval_delay_[i];
        obs.max_queue_m = std::max(obs.max_queue_m, obs.lanes[i].queue_len_m);
        interval_delay_[i] = 0.0;
    }
    obs.total_delay_h = total_s / 3600.0;
    last_interval_delay_s_ = total_s;
    return obs;
}

Observation Simulator::apply_joint_action(const JointAction& action) {
    run_interval(greens_for(action));
    last_obs_ = measure_and_clear();
    return last_obs_;
}

std::pair<bool, TerminationCause> Simulator::is_terminal() const {
    for (std::size_t i = 0; i < net_.lane_groups.size(); ++i) {
        if (!net_.lane_groups[i].is_entry()) continue;
        if (queue_[i] >= cfg_.entry_capacity_veh && backlog_[i] >= cfg_.entry_capacity_veh)
            return {true, TerminationCause::entry_full};
    }
    if (last_interval_delay_s_ > cfg_.delay_threshold_s)
        return {true, TerminationCause::delay_threshold};
    if (clock_s_ >= cfg_.t_max_s) return {true, TerminationCause::horizon};
    return {false, TerminationCause::none};
}

long long Simulator::queued_total() const {
    long long total = 0;
    for (long long q : queue_) total += q;
    return total;
}

void Simulator::inject_vehicles(int lane_group, long long count) {
    if (lane_group < 0 || lane_group >= static_cast<int>(queue_.size()))
        throw std::out_of_range("inject_vehicles: unknown lane group " +
                                std::to_string(lane_group));
    if (count < 0) throw std::invalid_argument("inject_vehicles: negative count");
    queue_[static_cast<std::size_t>(lane_group)] += count;
    entered_ += count;
}

}  // namespace dgqn
