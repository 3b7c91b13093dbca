#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dgqn/baselines.hpp"
#include "dgqn/eval.hpp"
#include "dgqn/trainer.hpp"

namespace {

using namespace dgqn;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Settings {
    std::string config_path;
    std::string network = "grid2x2";
    std::string checkpoint;
    std::string out_dir;
    std::string model = "dgqn";
    int episodes = -1;  // train: per-actor cap; eval: rollout count
    int actors = 4;
    std::uint64_t seed = 1;
    bool paper_scale = false;
    int duration_s = 0;  // simulate only; 0 = keep sim config
    TrainConfig train;   // model + sim + optimizer knobs

    bool network_from_file = false;
    bool schedule_from_file = false;
};

void add_common(CLI::App* cmd, Settings& s) {
    cmd->add_option("--config", s.config_path, "JSON run configuration file");
    cmd->add_option("--network", s.network, "seoul15, grid2x2, or a road-network JSON path");
    cmd->add_option("--checkpoint", s.checkpoint, "parameter checkpoint file");
    cmd->add_option("--episodes", s.episodes, "episode count (per actor when training)");
    cmd->add_option("--actors", s.actors, "number of actor-learners")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", s.seed, "base RNG seed");
    cmd->add_option("--out-dir", s.out_dir, "directory for reports, metrics and checkpoints");
    cmd->add_option("--model", s.model, "dgqn | dqn_ogcn | dqn_fc | fixed");
    cmd->add_flag("--paper-scale", s.paper_scale,
                  "published-testbed defaults: seoul15 network and full decay schedule");
}

nlohmann::json read_json_file(const std::string& path) {
    if (!fs::exists(path)) throw std::invalid_argument("config file not found: " + path);
    std::ifstream in(path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const std::exception& ex) {
        throw std::invalid_argument("cannot parse " + path + ": " + ex.what());
    }
}

void apply_config_file(Settings& s, const CLI::App* cmd) {
    const nlohmann::json j = read_json_file(s.config_path);
    auto unset = [&](const char* flag) { return cmd->count(flag) == 0; };

    if (j.contains("network") && unset("--network")) {
        s.network = j.at("network").get<std::string>();
        s.network_from_file = true;
    }
    if (j.contains("checkpoint") && unset("--checkpoint"))
        s.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("out_dir") && unset("--out-dir")) s.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("seed") && unset("--seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("paper_scale") && unset("--paper-scale"))
        s.paper_scale = j.at("paper_scale").get<bool>();
    if (j.contains("episodes") && unset("--episodes")) s.episodes = j.at("episodes").get<int>();

    if (j.contains("model")) {
        const auto& m = j.at("model");
        if (m.contains("variant") && unset("--model")) s.model = m.at("variant").get<std::string>();
        ModelConfig& mc = s.train.model;
        if (m.contains("activation")) mc.activation = activation_from(m.at("activation"));
        mc.embed_dim = m.value("embed_dim", mc.embed_dim);
        mc.conv_channels = m.value("conv_channels", mc.conv_channels);
        mc.conv_rows = m.value("conv_rows", mc.conv_rows);
        mc.gamma = m.value("gamma", mc.gamma);
        mc.delay_cap_s = m.value("delay_cap_s", mc.delay_cap_s);
        mc.queue_cap_veh = m.value("queue_cap_veh", mc.queue_cap_veh);
    }
    if (j.contains("sim")) {
        const auto& c = j.at("sim");
        SimConfig& sc = s.train.sim;
        sc.t_initial_s = c.value("t_initial_s", sc.t_initial_s);
        sc.t_max_s = c.value("t_max_s", sc.t_max_s);
        sc.delta_t_s = c.value("delta_t_s", sc.delta_t_s);
        sc.amber_s = c.value("amber_s", sc.amber_s);
        sc.entry_capacity_veh = c.value("entry_capacity_veh", sc.entry_capacity_veh);
        sc.vehicle_spacing_m = c.value("vehicle_spacing_m", sc.vehicle_spacing_m);
        sc.demand_scale_range = c.value("demand_scale_range", sc.demand_scale_range);
        sc.turning_perturb_range = c.value("turning_perturb_range", sc.turning_perturb_range);
        sc.turning_perturb_period_s =
            c.value("turning_perturb_period_s", sc.turning_perturb_period_s);
        sc.delay_threshold_s = c.value("delay_threshold_s", sc.delay_threshold_s);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        TrainConfig& tc = s.train;
        if (t.contains("actors") && unset("--actors")) s.actors = t.at("actors").get<int>();
        if (t.contains("e_schedule")) {
            tc.e_schedule = t.at("e_schedule").get<std::vector<double>>();
            s.schedule_from_file = true;
        }
        tc.eps_stop = t.value("eps_stop", tc.eps_stop);
        tc.replay_capacity = t.value("replay_capacity", tc.replay_capacity);
        tc.replay_warmup = t.value("replay_warmup", tc.replay_warmup);
        tc.batch_size = t.value("batch_size", tc.batch_size);
        tc.target_refresh = t.value("target_refresh", tc.target_refresh);
        tc.learning_rate = t.value("learning_rate", tc.learning_rate);
        tc.checkpoint_every = t.value("checkpoint_every", tc.checkpoint_every);
        if (t.contains("max_episodes") && unset("--episodes"))
            s.episodes = t.at("max_episodes").get<int>();
    }
}

void resolve_defaults(Settings& s, const CLI::App* cmd, bool training) {
    if (s.paper_scale) {
        if (cmd->count("--network") == 0 && !s.network_from_file) s.network = "seoul15";
        if (!s.schedule_from_file) s.train.e_schedule = {2.3e6, 2.6e6, 2.9e6, 3.2e6};
        if (s.episodes < 0) s.episodes = training ? 2000 : 600;
    } else {
        if (!s.schedule_from_file) s.train.e_schedule = {2300.0, 2600.0, 2900.0, 3200.0};
        if (s.episodes < 0) s.episodes = training ? 50 : 20;
    }
    if (const char* env = std::getenv("DGQN_THREADS")) {
        int cap = 0;
        try {
            cap = std::stoi(env);
        } catch (...) {
            cap = 0;
        }
        if (cap < 1) throw std::invalid_argument("DGQN_THREADS must be a positive integer");
        s.actors = std::min(s.actors, cap);
    }
}

RoadNetwork resolve_network(const std::string& spec) {
    if (spec == "seoul15") return builtin_seoul15();
    if (spec == "grid2x2") return grid_network(2, 2, 600, 2);
    if (!fs::exists(spec)) throw std::invalid_argument("network file not found: " + spec);
    return load_network(spec);
}

ModelConfig config_from_meta(const std::map<std::string, std::string>& meta) {
    auto need = [&](const char* key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end())
            throw std::invalid_argument("checkpoint is missing meta key '" + std::string(key) +
                                        "'");
        return it->second;
    };
    ModelConfig c;
    c.variant = model_variant_from(need("model"));
    c.activation = activation_from(need("activation"));
    c.embed_dim = std::stoi(need("embed_dim"));
    c.conv_channels = std::stoi(need("conv_channels"));
    c.conv_rows = std::stoi(need("conv_rows"));
    c.gamma = std::stod(need("gamma"));
    c.delay_cap_s = std::stod(need("delay_cap_s"));
    c.queue_cap_veh = std::stod(need("queue_cap_veh"));
    return c;
}

struct LoadedModel {
    ModelConfig cfg;
    ParamStore params;
};

LoadedModel load_checkpoint(const Settings& s, const RoadNetwork& net, const CLI::App* cmd) {
    if (s.checkpoint.empty())
        throw std::invalid_argument("this command needs --checkpoint (or --model fixed)");
    if (!fs::exists(s.checkpoint))
        throw std::invalid_argument("checkpoint not found: " + s.checkpoint);
    std::map<std::string, std::string> meta;
    LoadedModel lm;
    lm.params = ParamStore::load_file(s.checkpoint, &meta);
    lm.cfg = config_from_meta(meta);
    if (cmd->count("--model") > 0 && s.model != to_string(lm.cfg.variant))
        throw std::invalid_argument("checkpoint holds a '" +
                                    std::string(to_string(lm.cfg.variant)) +
                                    "' model but --model asked for '" + s.model + "'");
    QModel model(net, lm.cfg);
    model.check_checkpoint_meta(meta);  // network shape consistency
    if (lm.params.total_elements() != model.parameter_count())
        throw std::invalid_argument("checkpoint parameter payload does not match the model");
    return lm;
}

int cmd_train(Settings& s) {
    if (s.model == "fixed")
        throw std::invalid_argument("the fixed-time controller has nothing to train");
    RoadNetwork net = resolve_network(s.network);
    TrainConfig cfg = s.train;
    cfg.model.variant = model_variant_from(s.model);
    cfg.actors = s.actors;
    cfg.seed = s.seed;
    cfg.max_episodes = s.episodes;
    cfg.out_dir = s.out_dir.empty() ? "dgqn_run" : s.out_dir;
    cfg.check();
    validate(net);

    TrainResult res = train(net, cfg);
    std::cout << "trained " << to_string(cfg.model.variant) << " on " << s.network << ": "
              << res.episodes.size() << " episodes, " << res.updates << " updates\n"
              << "metrics:    " << res.metrics_path << "\n"
              << "checkpoint: " << res.checkpoint_path << "\n";
    for (int a = 0; a < cfg.actors; ++a) {
        const EpisodeStats* last = nullptr;
        for (const EpisodeStats& e : res.episodes)
            if (e.actor_id == a) last = &e;
        if (last)
            std::cout << "actor " << a << ": " << last->episode
                      << " episodes, final moving avg reward " << last->moving_avg_10
                      << ", epsilon " << last->epsilon_end << "\n";
    }
    return 0;
}

int cmd_eval(Settings& s, const CLI::App* cmd) {
    if (s.episodes < 1) throw std::invalid_argument("eval needs a positive --episodes");
    RoadNetwork net = resolve_network(s.network);
    EvalReport rep;
    if (s.model == "fixed" && s.checkpoint.empty()) {
        rep = evaluate_fixed(net, s.train.sim, s.episodes, s.seed);
    } else {
        LoadedModel lm = load_checkpoint(s, net, cmd);
        QModel model(net, lm.cfg);
        rep = evaluate_greedy(model, lm.params, s.train.sim, s.episodes, s.seed);
    }
    std::cout << rep.model << " over " << rep.episodes << " episodes: total delay "
              << rep.mean_total_delay_h << " h (sd " << rep.stddev_total_delay_h
              << "), max queue " << rep.mean_max_queue_m << " m (sd " << rep.stddev_max_queue_m
              << ")\n";
    if (!s.out_dir.empty()) {
        fs::create_directories(s.out_dir);
        const std::string jpath = s.out_dir + "/eval_report.json";
        const std::string cpath = s.out_dir + "/eval_rows.csv";
        std::ofstream(jpath, std::ios::trunc) << eval_json(rep);
        std::ofstream(cpath, std::ios::trunc) << eval_csv(rep);
        std::cout << "report: " << jpath << "\nrows:   " << cpath << "\n";
    } else {
        std::cout << eval_json(rep);
    }
    return 0;
}

int cmd_simulate(Settings& s, const CLI::App* cmd) {
    RoadNetwork net = resolve_network(s.network);
    SimConfig sc = s.train.sim;
    if (s.duration_s > 0) sc.t_max_s = s.duration_s;
    sc.check();

    const bool all_green = s.model == "all_green";
    const bool fixed = s.model == "fixed";
    LoadedModel lm;
    if (!all_green && !fixed) lm = load_checkpoint(s, net, cmd);
    QModel* model_ptr = nullptr;
    QModel model_storage = all_green || fixed ? QModel(net, ModelConfig{}) : QModel(net, lm.cfg);
    if (!all_green && !fixed) model_ptr = &model_storage;

    Simulator sim(net, sc, s.seed);
    sim.reset();
    std::deque<Observation> hist;
    {
        Observation probe;
        probe.lanes.resize(net.lane_group_count());
        for (std::size_t i = 0; i < probe.lanes.size(); ++i)
            probe.lanes[i].queue_len_m = static_cast<double>(sim.queues()[i]) * sc.vehicle_spacing_m;
        hist.push_back(probe);
    }

    std::string csv = "clock_s,action,interval_delay_veh_s,cum_delay_h,max_queue_m,cause\n";
    char line[256];
    while (true) {
        const auto [terminal, cause] = sim.is_terminal();
        if (terminal) {
            std::snprintf(line, sizeof line, "%ld,,,%.10g,,%s\n", sim.clock_s(),
                          sim.cum_delay_s() / 3600.0, to_string(cause));
            csv += line;
            break;
        }
        const long clock = sim.clock_s();
        std::string action_text;
        Observation obs;
        if (all_green) {
            const double cum_before = sim.cum_delay_s();
            std::vector<char> greens(net.lane_group_count(), 1);
            for (int t = 0; t < sc.delta_t_s; ++t) sim.step_second(greens);
            obs.lanes.resize(net.lane_group_count());
            for (std::size_t i = 0; i < obs.lanes.size(); ++i) {
                obs.lanes[i].queue_len_m =
                    static_cast<double>(sim.queues()[i]) * sc.vehicle_spacing_m;
                obs.max_queue_m = std::max(obs.max_queue_m, obs.lanes[i].queue_len_m);
            }
            obs.total_delay_h = (sim.cum_delay_s() - cum_before) / 3600.0;
            action_text = "all-green";
        } else {
            JointAction a;
            if (fixed) {
                a = fixed_action(net, clock);
            } else {
                StateTensor state =
                    build_state({hist.begin(), hist.end()}, model_ptr->config(),
                                sc.vehicle_spacing_m);
                a = greedy_joint_action(model_ptr->q_values(lm.params, state)).first;
            }
            for (std::size_t i = 0; i < a.size(); ++i)
                action_text += (i ? "|" : "") + std::to_string(a[i]);
            obs = sim.apply_joint_action(a);
            hist.push_back(obs);
            while (hist.size() > static_cast<std::size_t>(kLagCount)) hist.pop_front();
        }
        std::snprintf(line, sizeof line, "%ld,%s,%.10g,%.10g,%.10g,\n", clock,
                      action_text.c_str(), obs.total_delay_h * 3600.0,
                      sim.cum_delay_s() / 3600.0, obs.max_queue_m);
        csv += line;
    }

    if (!s.out_dir.empty()) {
        fs::create_directories(s.out_dir);
        const std::string path = s.out_dir + "/simulate_log.csv";
        std::ofstream(path, std::ios::trunc) << csv;
        std::cout << "log: " << path << "\n";
    } else {
        std::cout << csv;
    }
    return 0;
}

int cmd_describe(Settings& s, const CLI::App* cmd) {
    RoadNetwork net = resolve_network(s.network);
    ModelConfig mc = s.train.model;
    if (!s.checkpoint.empty()) {
        LoadedModel lm = load_checkpoint(s, net, cmd);
        mc = lm.cfg;
    } else if (s.model == "fixed") {
        throw std::invalid_argument("the fixed-time controller has no parameters to describe");
    } else {
        mc.variant = model_variant_from(s.model);
    }
    QModel model(net, mc);
    const ModelDescription d = model.describe();

    std::cout << "model:        " << to_string(mc.variant) << "\n"
              << "activation:   " << to_string(mc.activation) << "\n"
              << "network:      " << s.network << " (" << net.lane_group_count()
              << " lane groups, " << net.intersections.size() << " intersections)\n"
              << "embedding:    " << d.embed_dim << "\n";
    if (mc.variant == ModelVariant::dqn_fc) std::cout << "fc hidden:    " << d.fc_hidden << "\n";
    std::cout << "gamma:        " << mc.gamma << "\n"
              << "delay cap:    " << mc.delay_cap_s << " s\n"
              << "queue cap:    " << mc.queue_cap_veh << " veh\n";
    if (mc.variant == ModelVariant::dgqn) {
        const std::size_t n = net.lane_group_count();
        for (auto [k, l] : QModel::adjacency_indices())
            std::cout << "adjacency (k=" << k << ", l=" << l << "): " << n << "x" << n << "\n";
    }
    std::cout << "parameters by group:\n";
    for (const auto& [group, count] : d.group_elements)
        std::cout << "  " << group << ": " << count << "\n";
    std::cout << "total parameters: " << d.total << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint traffic-signal control with a factorized graph Q-network"};
    app.require_subcommand(1);
    Settings s;

    CLI::App* t = app.add_subcommand("train", "Train a controller and write metrics/checkpoints");
    CLI::App* e = app.add_subcommand("eval", "Greedy-policy evaluation of a checkpoint or the fixed plans");
    CLI::App* sim = app.add_subcommand("simulate", "Roll out one episode and log every decision");
    CLI::App* d = app.add_subcommand("describe", "Print model structure and parameter counts");
    add_common(t, s);
    add_common(e, s);
    add_common(sim, s);
    add_common(d, s);
    sim->add_option("--duration", s.duration_s, "episode length in seconds")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex);
        return code == 0 ? 0 : kExitConfig;
    }

    CLI::App* active = t->parsed() ? t : e->parsed() ? e : sim->parsed() ? sim : d;
    try {
        if (!s.config_path.empty()) apply_config_file(s, active);
        resolve_defaults(s, active, t->parsed());
        if (t->parsed()) return cmd_train(s);
        if (e->parsed()) return cmd_eval(s, active);
        if (sim->parsed()) return cmd_simulate(s, active);
        return cmd_describe(s, active);
    } catch (const std::invalid_argument& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
}
