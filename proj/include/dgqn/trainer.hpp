#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "dgqn/model.hpp"
#include "dgqn/simulator.hpp"

namespace dgqn {

/// exp(-(c / e_i)^2), decaying from 1 toward 0.
double epsilon(long long c, double e_i);

/// +1 when the current interval accumulated strictly less delay than the
/// previous one, -1 otherwise (ties included).
double reward(double delay_cur_s, double delay_prev_s);

struct ExplorationSchedule {
    double eps_max = 1.0;
    double eps_min = 0.0;
    double e_i = 2.3e6;

    double at(long long c) const;
};

/// Bounded FIFO of transitions with uniform without-replacement sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return buf_.size(); }
    std::size_t capacity() const { return cap_; }
    const Transition& at(std::size_t i) const { return buf_.at(i); }  // 0 = oldest

    /// Pointers stay valid until the next push.
    std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng) const;

private:
    std::deque<Transition> buf_;
    std::size_t cap_;
};

/// The one object actors share: incumbent and target stores behind a single
/// mutex. Writes are exclusive; reads hand out full copies so a caller never
/// observes a tensor mid-update.
class SharedParams {
public:
    explicit SharedParams(ParamStore initial);

    ParamStore snapshot_incumbent() const;
    ParamStore snapshot_target() const;

    /// Accumulates the gradients into the incumbent store and applies one
    /// optimizer step. Returns the new global update count.
    long long apply_gradients(const std::map<std::string, Tensor>& grads, double learning_rate);

    void refresh_target();
    long long update_count() const;

    /// Called under the write lock after every update; used for checkpoint
    /// cadence so the saved tensors match the counter exactly.
    void set_update_observer(std::function<void(long long, const ParamStore&)> fn);

private:
    mutable std::mutex mu_;
    ParamStore incumbent_;
    ParamStore target_;
    long long updates_ = 0;
    std::function<void(long long, const ParamStore&)> observer_;
};

struct TrainConfig {
    ModelConfig model;
    SimConfig sim;
    int actors = 4;
    std::vector<double> e_schedule = {2.3e6, 2.6e6, 2.9e6, 3.2e6};  // per actor, cycled
    double eps_max = 1.0;
    double eps_min = 0.0;
    double eps_stop = 1e-3;  // end an actor once its schedule decays below this
    std::size_t replay_capacity = 30000;
    std::size_t replay_warmup = 3000;
    std::size_t batch_size = 32;
    long long target_refresh = 2500;  // per-actor decision counter period
    double learning_rate = 1e-4;
    int max_episodes = 0;  // per actor; 0 = until eps_stop
    std::uint64_t seed = 1;
    std::string out_dir;             // empty = keep everything in memory
    long long checkpoint_every = 0;  // global updates between checkpoints; 0 = final only

    void check() const;
};

struct DecisionRecord {
    int actor_id = 0;
    long long c_before = 0;  // per-actor counter when the action was chosen
    double epsilon = 0.0;
    bool explored = false;
    JointAction action;
    double delay_prev_s = 0.0;
    double delay_cur_s = 0.0;
    double reward = 0.0;
    std::size_t replay_size = 0;  // after inserting this transition
    bool updated = false;
    long long global_updates = 0;  // counter after the update, when one ran
    bool refreshed_target = false;
};

struct EpisodeStats {
    int actor_id = 0;
    int episode = 0;  // 1-based per actor
    double mean_reward = 0.0;
    double moving_avg_10 = 0.0;  // over this actor's last ten episode means
    double total_delay_h = 0.0;
    std::string termination_cause;
    int decisions = 0;
    double epsilon_end = 0.0;
    long long updates = 0;  // this actor's cumulative gradient updates
    long long target_refreshes = 0;

    bool operator==(const EpisodeStats&) const = default;
};

struct TrainHooks {
    std::function<void(const DecisionRecord&)> on_decision;
    std::function<void(const EpisodeStats&)> on_episode;
    long long max_updates = 0;    // per actor; 0 = unlimited
    long long max_decisions = 0;  // per actor; 0 = unlimited
};

/// Epsilon-greedy: one exploration coin per decision; an exploring decision
/// draws every intersection's phase uniformly from its feasible set.
JointAction select_action(const QModel& model, const ParamStore& params, const StateTensor& s,
                          double eps, std::mt19937_64& rng, bool* explored = nullptr);

/// One actor-learner: owns its simulator episodes, replay buffer, RNG and
/// counters; all cross-actor traffic goes through `shared`.
std::vector<EpisodeStats> run_actor(const RoadNetwork& net, const TrainConfig& cfg, int actor_id,
                                    SharedParams& shared, const TrainHooks* hooks = nullptr);

struct TrainResult {
    std::vector<EpisodeStats> episodes;  // ordered by (actor_id, episode)
    long long updates = 0;
    std::string metrics_path;     // empty unless out_dir was set
    std::string checkpoint_path;  // final checkpoint, empty unless out_dir was set
};

TrainResult train(const RoadNetwork& net, const TrainConfig& cfg, SharedParams& shared,
                  const TrainHooks* hooks = nullptr);

/// Convenience overload that initializes the shared stores from cfg.seed.
TrainResult train(const RoadNetwork& net, const TrainConfig& cfg,
                  const TrainHooks* hooks = nullptr);

std::string metrics_csv(const std::vector<EpisodeStats>& rows);

}  // namespace dgqn
