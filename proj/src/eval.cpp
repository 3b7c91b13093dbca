#include "dgqn/eval.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

#include "json.hpp"

#include "dgqn/baselines.hpp"

namespace dgqn {

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

void finish_stats(EvalReport& r) {
    const std::size_t n = r.rows.size();
    if (n == 0) return;
    double sd = 0.0, sq = 0.0;
    for (const EvalEpisode& e : r.rows) {
        sd += e.total_delay_h;
        sq += e.max_queue_m;
    }
    r.mean_total_delay_h = sd / static_cast<double>(n);
    r.mean_max_queue_m = sq / static_cast<double>(n);
    if (n > 1) {
        double vd = 0.0, vq = 0.0;
        for (const EvalEpisode& e : r.rows) {
            vd += (e.total_delay_h - r.mean_total_delay_h) * (e.total_delay_h - r.mean_total_delay_h);
            vq += (e.max_queue_m - r.mean_max_queue_m) * (e.max_queue_m - r.mean_max_queue_m);
        }
        r.stddev_total_delay_h = std::sqrt(vd / static_cast<double>(n - 1));
        r.stddev_max_queue_m = std::sqrt(vq / static_cast<double>(n - 1));
    }
}

}  // namespace

EvalReport evaluate_controller(const RoadNetwork& net, const SimConfig& sim_cfg,
                               const ModelConfig& state_cfg, int episodes, std::uint64_t seed,
                               const std::string& label, const Controller& controller) {
    if (episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
    validate(net);
    sim_cfg.check();

    EvalReport report;
    report.model = label;
    report.episodes = episodes;
    report.seed = seed;

    for (int ep = 1; ep <= episodes; ++ep) {
        const std::uint64_t ep_seed = seed + static_cast<std::uint64_t>(ep - 1);
        Simulator sim(net, sim_cfg, ep_seed);
        sim.reset();
        std::deque<Observation> hist{probe_observation(sim)};

        EvalEpisode row;
        row.episode = ep;
        row.seed = ep_seed;
        while (true) {
            const auto [terminal, cause] = sim.is_terminal();
            if (terminal) {
                row.termination_cause = to_string(cause);
                break;
            }
            StateTensor state =
                build_state({hist.begin(), hist.end()}, state_cfg, sim_cfg.vehicle_spacing_m);
            const Observation obs = sim.apply_joint_action(controller(sim, state));
            ++row.decisions;
            row.max_queue_m = std::max(row.max_queue_m, obs.max_queue_m);
            hist.push_back(obs);
            while (hist.size() > static_cast<std::size_t>(kLagCount)) hist.pop_front();
        }
        row.total_delay_h = sim.cum_delay_s() / 3600.0;
        report.rows.push_back(std::move(row));
    }
    finish_stats(report);
    return report;
}

EvalReport evaluate_fixed(const RoadNetwork& net, const SimConfig& sim_cfg, int episodes,
                          std::uint64_t seed) {
    return evaluate_controller(net, sim_cfg, ModelConfig{}, episodes, seed, "fixed",
                               [&net](const Simulator& sim, const StateTensor&) {
                                   return fixed_action(net, sim.clock_s());
                               });
}

EvalReport evaluate_greedy(const QModel& model, const ParamStore& params,
                           const SimConfig& sim_cfg, int episodes, std::uint64_t seed) {
    return evaluate_controller(model.network(), sim_cfg, model.config(), episodes, seed,
                               to_string(model.config().variant),
                               [&](const Simulator&, const StateTensor& state) {
                                   return greedy_joint_action(model.q_values(params, state)).first;
                               });
}

std::string eval_csv(const EvalReport& report) {
    std::string out = "model,episode,seed,total_delay_h,max_queue_m,termination_cause,decisions\n";
    char line[256];
    for (const EvalEpisode& e : report.rows) {
        std::snprintf(line, sizeof line, "%s,%d,%llu,%.10g,%.10g,%s,%d\n", report.model.c_str(),
                      e.episode, static_cast<unsigned long long>(e.seed), e.total_delay_h,
                      e.max_queue_m, e.termination_cause.c_str(), e.decisions);
        out += line;
    }
    return out;
}

std::string eval_json(const EvalReport& report) {
    nlohmann::json j;
    j["model"] = report.model;
    j["episodes"] = report.episodes;
    j["seed"] = report.seed;
    j["mean_total_delay_h"] = report.mean_total_delay_h;
    j["stddev_total_delay_h"] = report.stddev_total_delay_h;
    j["mean_max_queue_m"] = report.mean_max_queue_m;
    j["stddev_max_queue_m"] = report.stddev_max_queue_m;
    j["rows"] = nlohmann::json::array();
    for (const EvalEpisode& e : report.rows)
        j["rows"].push_back({{"episode", e.episode},
                             {"seed", e.seed},
                             {"total_delay_h", e.total_delay_h},
                             {"max_queue_m", e.max_queue_m},
                             {"termination_cause", e.termination_cause},
                             {"decisions", e.decisions}});
    return j.dump(2) + "\n";
}

}  // namespace dgqn
