#include "dgqn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "dgqn/kernels.hpp"
#include "dgqn/tape.hpp"

namespace dgqn {

double epsilon(long long c, double e_i) {
    return ExplorationSchedule{1.0, 0.0, e_i}.at(c);
}

double ExplorationSchedule::at(long long c) const {
    if (c < 0) throw std::invalid_argument("epsilon: negative counter");
    if (e_i <= 0.0) throw std::invalid_argument("epsilon: decay parameter must be positive");
    const double x = static_cast<double>(c) / e_i;
    return (eps_max - eps_min) * std::exp(-x * x) + eps_min;
}

double reward(double delay_cur_s, double delay_prev_s) {
    return delay_cur_s < delay_prev_s ? 1.0 : -1.0;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : cap_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
}

void ReplayBuffer::push(Transition t) {
    buf_.push_back(std::move(t));
    if (buf_.size() > cap_) buf_.pop_front();
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch,
                                                    std::mt19937_64& rng) const {
    if (batch == 0 || batch > buf_.size())
        throw std::invalid_argument("ReplayBuffer: bad batch size " + std::to_string(batch) +
                                    " for buffer of " + std::to_string(buf_.size()));
    std::vector<std::size_t> all(buf_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> chosen(batch);
    std::sample(all.begin(), all.end(), chosen.begin(), batch, rng);
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t i : chosen) out.push_back(&buf_[i]);
    return out;
}

SharedParams::SharedParams(ParamStore initial) : incumbent_(std::move(initial)) {
    target_ = incumbent_;
}

ParamStore SharedParams::snapshot_incumbent() const {
    std::lock_guard<std::mutex> lock(mu_);
    return incumbent_;
}

ParamStore SharedParams::snapshot_target() const {
    std::lock_guard<std::mutex> lock(mu_);
    return target_;
}

long long SharedParams::apply_gradients(const std::map<std::string, Tensor>& grads,
                                        double learning_rate) {
    std::lock_guard<std::mutex> lock(mu_);
    incumbent_.accumulate_grads(grads);
    incumbent_.optimizer_step(learning_rate);
    ++updates_;
    if (observer_) observer_(updates_, incumbent_);
    return updates_;
}

void SharedParams::refresh_target() {
    std::lock_guard<std::mutex> lock(mu_);
    target_.copy_values_from(incumbent_);
}

long long SharedParams::update_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return updates_;
}

void SharedParams::set_update_observer(std::function<void(long long, const ParamStore&)> fn) {
    std::lock_guard<std::mutex> lock(mu_);
    observer_ = std::move(fn);
}

void TrainConfig::check() const {
    sim.check();
    if (model.gamma < 0.0 || model.gamma > 1.0)
        throw std::invalid_argument("train config: gamma must lie in [0,1]");
    if (actors < 1) throw std::invalid_argument("train config: need at least one actor");
    if (e_schedule.empty())
        throw std::invalid_argument("train config: empty exploration schedule");
    for (double e : e_schedule)
        if (!(e > 0.0))
            throw std::invalid_argument("train config: decay parameters must be positive");
    if (eps_min < 0.0 || eps_max < eps_min || eps_max > 1.0)
        throw std::invalid_argument("train config: need 0 <= eps_min <= eps_max <= 1");
    if (batch_size == 0) throw std::invalid_argument("train config: zero batch size");
    if (replay_warmup < batch_size)
        throw std::invalid_argument("train config: warm-start threshold below batch size");
    if (replay_capacity < replay_warmup)
        throw std::invalid_argument("train config: replay capacity below warm-start threshold");
    if (target_refresh < 1)
        throw std::invalid_argument("train config: target refresh period must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("train config: learning rate must be positive");
    if (max_episodes < 0 || checkpoint_every < 0)
        throw std::invalid_argument("train config: negative episode or checkpoint cadence");
    if (!(eps_stop > eps_min) && max_episodes == 0)
        throw std::invalid_argument("train config: no reachable stop condition");
}

JointAction select_action(const QModel& model, const ParamStore& params, const StateTensor& s,
                          double eps, std::mt19937_64& rng, bool* explored) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const bool explore = coin(rng) < eps;
    if (explored) *explored = explore;
    const RoadNetwork& net = model.network();
    if (explore) {
        JointAction a(net.intersections.size());
        for (std::size_t i = 0; i < net.intersections.size(); ++i) {
            const int n = static_cast<int>(net.intersections[i].phases.size());
            a[i] = std::uniform_int_distribution<int>(0, n - 1)(rng);
        }
        return a;
    }
    return greedy_joint_action(model.q_values(params, s)).first;
}

namespace {

Observation probe_observation(const Simulator& sim) {
    Observation o;
    o.lanes.resize(sim.network().lane_group_count());
    const double spacing = sim.config().vehicle_spacing_m;
    for (std::size_t i = 0; i < o.lanes.size(); ++i) {
        o.lanes[i].queue_len_m = static_cast<double>(sim.queues()[i]) * spacing;
        o.max_queue_m = std::max(o.max_queue_m, o.lanes[i].queue_len_m);
    }
    return o;
}

bool all_finite(const std::map<std::string, Tensor>& grads) {
    for (const auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (!std::isfinite(g.data()[i])) return false;
    return true;
}

}  // namespace

std::vector<EpisodeStats> run_actor(const RoadNetwork& net, const TrainConfig& cfg, int actor_id,
                                    SharedParams& shared, const TrainHooks* hooks) {
    QModel model(net, cfg.model);
    const ExplorationSchedule sched{cfg.eps_max, cfg.eps_min,
                                    cfg.e_schedule[actor_id % cfg.e_schedule.size()]};
    ReplayBuffer replay(cfg.replay_capacity);
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(actor_id)};
    std::mt19937_64 rng(seq);

    std::vector<EpisodeStats> episodes;
    std::deque<double> recent_means;
    long long c = 0;
    long long updates_done = 0;
    long long refreshes = 0;
    long long decisions_total = 0;
    int empty_streak = 0;
    bool stop = false;

    for (int ep = 1; !stop; ++ep) {
        if (cfg.max_episodes > 0 && ep > cfg.max_episodes) break;
        if (sched.at(c) < cfg.eps_stop) break;

        const std::uint64_t ep_seed = rng();
        Simulator sim(net, cfg.sim, ep_seed);
        sim.reset();
        std::deque<Observation> hist{probe_observation(sim)};
        StateTensor state = build_state({hist.front()}, cfg.model, cfg.sim.vehicle_spacing_m);

        double reward_sum = 0.0;
        int decisions = 0;
        std::string cause = to_string(TerminationCause::none);

        while (true) {
            const auto [terminal, tc] = sim.is_terminal();
            if (terminal) {
                cause = to_string(tc);
                break;
            }
            DecisionRecord rec;
            rec.actor_id = actor_id;
            rec.c_before = c;
            rec.epsilon = sched.at(c);

            const ParamStore acting = shared.snapshot_incumbent();
            rec.action = select_action(model, acting, state, rec.epsilon, rng, &rec.explored);
            rec.delay_prev_s = sim.last_interval_delay_s();
            const Observation obs = sim.apply_joint_action(rec.action);
            rec.delay_cur_s = sim.last_interval_delay_s();
            rec.reward = reward(rec.delay_cur_s, rec.delay_prev_s);
            reward_sum += rec.reward;
            ++decisions;
            ++decisions_total;

            hist.push_back(obs);
            while (hist.size() > static_cast<std::size_t>(kLagCount)) hist.pop_front();
            StateTensor next =
                build_state({hist.begin(), hist.end()}, cfg.model, cfg.sim.vehicle_spacing_m);
            replay.push(Transition{state, rec.action, next, rec.reward});
            rec.replay_size = replay.size();

            if (replay.size() >= cfg.replay_warmup) {
                const auto batch = replay.sample(cfg.batch_size, rng);
                const ParamStore incumbent = shared.snapshot_incumbent();
                const ParamStore target = shared.snapshot_target();
                Trace tr;
                const auto loss = model.loss_batch(tr, incumbent, target, batch, cfg.model.gamma);
                tr.backward(loss.node);
                const auto grads = tr.param_grads();
                if (!all_finite(grads)) {
                    cause = "nan_gradients";
                    if (hooks && hooks->on_decision) hooks->on_decision(rec);
                    break;
                }
                rec.global_updates = shared.apply_gradients(grads, cfg.learning_rate);
                rec.updated = true;
                ++updates_done;
            }

            state = std::move(next);
            ++c;
            if (c % cfg.target_refresh == 0) {
                shared.refresh_target();
                ++refreshes;
                rec.refreshed_target = true;
            }
            if (hooks && hooks->on_decision) hooks->on_decision(rec);
            if (hooks && hooks->max_decisions > 0 && decisions_total >= hooks->max_decisions) {
                cause = "stopped";
                stop = true;
                break;
            }
            if (hooks && hooks->max_updates > 0 && updates_done >= hooks->max_updates) {
                cause = "stopped";
                stop = true;
                break;
            }
        }

        EpisodeStats st;
        st.actor_id = actor_id;
        st.episode = ep;
        st.decisions = decisions;
        st.mean_reward = decisions > 0 ? reward_sum / decisions : 0.0;
        recent_means.push_back(st.mean_reward);
        if (recent_means.size() > 10) recent_means.pop_front();
        st.moving_avg_10 = std::accumulate(recent_means.begin(), recent_means.end(), 0.0) /
                           static_cast<double>(recent_means.size());
        st.total_delay_h = sim.cum_delay_s() / 3600.0;
        st.termination_cause = cause;
        st.epsilon_end = sched.at(c);
        st.updates = updates_done;
        st.target_refreshes = refreshes;
        episodes.push_back(st);
        if (hooks && hooks->on_episode) hooks->on_episode(st);

        empty_streak = decisions == 0 ? empty_streak + 1 : 0;
        if (empty_streak >= 3) break;  // episodes terminal on arrival; nothing will change
    }
    return episodes;
}

std::string metrics_csv(const std::vector<EpisodeStats>& rows) {
    std::string out =
        "actor_id,episode,mean_reward,moving_avg_10,total_delay_h,termination_cause,"
        "decisions,epsilon_end,updates,target_refreshes\n";
    char line[320];
    for (const EpisodeStats& r : rows) {
        std::snprintf(line, sizeof line, "%d,%d,%.10g,%.10g,%.10g,%s,%d,%.10g,%lld,%lld\n",
                      r.actor_id, r.episode, r.mean_reward, r.moving_avg_10, r.total_delay_h,
                      r.termination_cause.c_str(), r.decisions, r.epsilon_end, r.updates,
                      r.target_refreshes);
        out += line;
    }
    return out;
}

namespace {

struct ThreadBudgetGuard {
    int saved = kern::thread_budget();
    explicit ThreadBudgetGuard(int n) { kern::set_thread_budget(n); }
    ~ThreadBudgetGuard() { kern::set_thread_budget(saved); }
};

}  // namespace

TrainResult train(const RoadNetwork& net, const TrainConfig& cfg, SharedParams& shared,
                  const TrainHooks* hooks) {
    cfg.check();
    validate(net);
    QModel model(net, cfg.model);

    const bool emit_files = !cfg.out_dir.empty();
    if (emit_files) std::filesystem::create_directories(cfg.out_dir);
    if (emit_files && cfg.checkpoint_every > 0) {
        const std::string dir = cfg.out_dir;
        const auto meta = model.checkpoint_meta();
        const long long every = cfg.checkpoint_every;
        shared.set_update_observer([dir, meta, every](long long n, const ParamStore& ps) {
            if (n % every == 0)
                ps.save_file(dir + "/checkpoint_" + std::to_string(n) + ".ckpt", meta);
        });
    }

    std::vector<std::vector<EpisodeStats>> per_actor(static_cast<std::size_t>(cfg.actors));
    if (cfg.actors == 1) {
        per_actor[0] = run_actor(net, cfg, 0, shared, hooks);
    } else {
        // one kernel thread each; the actor threads are the parallelism
        ThreadBudgetGuard guard(1);
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.actors));
        for (int a = 0; a < cfg.actors; ++a)
            threads.emplace_back([&, a] {
                try {
                    per_actor[static_cast<std::size_t>(a)] = run_actor(net, cfg, a, shared, hooks);
                } catch (...) {
                    errors[static_cast<std::size_t>(a)] = std::current_exception();
                }
            });
        for (std::thread& t : threads) t.join();
        for (const std::exception_ptr& e : errors)
            if (e) std::rethrow_exception(e);
    }
    shared.set_update_observer(nullptr);

    TrainResult res;
    res.updates = shared.update_count();
    for (auto& v : per_actor)
        res.episodes.insert(res.episodes.end(), v.begin(), v.end());
    if (emit_files) {
        res.metrics_path = cfg.out_dir + "/metrics.csv";
        std::ofstream mf(res.metrics_path, std::ios::trunc);
        if (!mf) throw std::runtime_error("cannot write " + res.metrics_path);
        mf << metrics_csv(res.episodes);
        res.checkpoint_path = cfg.out_dir + "/final.ckpt";
        shared.snapshot_incumbent().save_file(res.checkpoint_path, model.checkpoint_meta());
    }
    return res;
}

TrainResult train(const RoadNetwork& net, const TrainConfig& cfg, const TrainHooks* hooks) {
    cfg.check();
    QModel model(net, cfg.model);
    ParamStore init;
    model.init_params(init, cfg.seed);
    SharedParams shared(std::move(init));
    return train(net, cfg, shared, hooks);
}

}  // namespace dgqn
