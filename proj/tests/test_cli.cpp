#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "dgqn/network.hpp"
#include "dgqn/param_store.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() {
    const char* env = std::getenv("DGQN_CLI");
    return env ? env : "../tools/dgqn";
}

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args) {
    const std::string out_file = "cli_stdout.txt";
    const std::string err_file = "cli_stderr.txt";
    const std::string cmd =
        std::string(cli_path()) + " " + args + " >" + out_file + " 2>" + err_file;
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    fs::remove(out_file);
    fs::remove(err_file);
    return r;
}

std::size_t line_count(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

struct Workspace {
    std::string dir = "cli_test_ws";
    Workspace() {
        fs::remove_all(dir);
        fs::create_directories(dir);
        dgqn::save_network(dgqn::grid_network(1, 1, 300, 2), dir + "/net1x1.json");
        nlohmann::json cfg = {
            {"network", dir + "/net1x1.json"},
            {"model", {{"embed_dim", 8}, {"conv_channels", 2}}},
            {"sim", {{"t_max_s", 800}}},
            {"train",
             {{"e_schedule", {150.0}},
              {"replay_capacity", 300},
              {"replay_warmup", 12},
              {"batch_size", 4},
              {"target_refresh", 25},
              {"learning_rate", 5e-4},
              {"max_episodes", 3}}},
            {"seed", 4},
            {"out_dir", dir + "/run"}};
        std::ofstream(dir + "/cfg.json") << cfg.dump(2);
    }
    ~Workspace() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("command-line workflows") {
    Workspace ws;

    SUBCASE("train writes metrics and a loadable final checkpoint") {
        RunResult r = run_cli("train --config " + ws.dir + "/cfg.json --actors 1");
        CHECK(r.code == 0);
        CHECK(r.out.find("3 episodes") != std::string::npos);

        std::ifstream metrics(ws.dir + "/run/metrics.csv");
        REQUIRE(metrics.good());
        std::string header;
        std::getline(metrics, header);
        CHECK(header.find("actor_id,episode,mean_reward,moving_avg_10,total_delay_h,"
                          "termination_cause") == 0);
        int rows = 0;
        for (std::string line; std::getline(metrics, line);) ++rows;
        CHECK(rows == 3);

        std::map<std::string, std::string> meta;
        dgqn::ParamStore ps = dgqn::ParamStore::load_file(ws.dir + "/run/final.ckpt", &meta);
        CHECK(meta.at("model") == "dgqn");
        CHECK(ps.total_elements() > 0);

        SUBCASE("evaluation consumes the checkpoint and reports aggregates") {
            RunResult e = run_cli("eval --config " + ws.dir + "/cfg.json --checkpoint " + ws.dir +
                                  "/run/final.ckpt --episodes 3 --out-dir " + ws.dir + "/eval");
            CHECK(e.code == 0);
            std::ifstream jf(ws.dir + "/eval/eval_report.json");
            REQUIRE(jf.good());
            nlohmann::json rep = nlohmann::json::parse(jf);
            CHECK(rep.at("model") == "dgqn");
            CHECK(rep.at("rows").size() == 3);
            double mean = 0.0;
            for (const auto& row : rep.at("rows")) mean += row.at("total_delay_h").get<double>();
            mean /= 3.0;
            CHECK(std::abs(rep.at("mean_total_delay_h").get<double>() - mean) < 1e-9);

            std::ifstream cf(ws.dir + "/eval/eval_rows.csv");
            REQUIRE(cf.good());
            std::string body((std::istreambuf_iterator<char>(cf)),
                             std::istreambuf_iterator<char>());
            CHECK(line_count(body) == 4);  // header + 3 rows
        }
    }

    SUBCASE("same seed, same actor count, same checkpoint bytes") {
        RunResult a = run_cli("train --config " + ws.dir + "/cfg.json --actors 1 --seed 7 " +
                              "--out-dir " + ws.dir + "/run_a");
        RunResult b = run_cli("train --config " + ws.dir + "/cfg.json --actors 1 --seed 7 " +
                              "--out-dir " + ws.dir + "/run_b");
        REQUIRE(a.code == 0);
        REQUIRE(b.code == 0);
        dgqn::ParamStore pa = dgqn::ParamStore::load_file(ws.dir + "/run_a/final.ckpt");
        dgqn::ParamStore pb = dgqn::ParamStore::load_file(ws.dir + "/run_b/final.ckpt");
        CHECK(pa.bit_identical(pb));
    }

    SUBCASE("fixed-plan evaluation needs no checkpoint") {
        RunResult r = run_cli("eval --network " + ws.dir +
                              "/net1x1.json --model fixed --episodes 2 --seed 3");
        CHECK(r.code == 0);
        CHECK(r.out.find("\"model\": \"fixed\"") != std::string::npos);
    }

    SUBCASE("simulate logs one row per decision") {
        RunResult r = run_cli("simulate --network " + ws.dir +
                              "/net1x1.json --model fixed --duration 520 --seed 2");
        CHECK(r.code == 0);
        CHECK(r.out.find("clock_s,action,") != std::string::npos);
        // header + (520-400)/20 decisions + terminal row
        CHECK(line_count(r.out) == 1 + 6 + 1);
        RunResult again = run_cli("simulate --network " + ws.dir +
                                  "/net1x1.json --model fixed --duration 520 --seed 2");
        CHECK(again.out == r.out);
    }

    SUBCASE("describe prints grouped parameter counts") {
        RunResult r = run_cli("describe --network grid2x2 --model dgqn");
        CHECK(r.code == 0);
        CHECK(r.out.find("adjacency (k=1, l=0): 24x24") != std::string::npos);
        CHECK(r.out.find("total parameters: 152096") != std::string::npos);
        RunResult f = run_cli("describe --network grid2x2 --model dqn_fc");
        CHECK(f.out.find("adjacency (k=") == std::string::npos);
        CHECK(f.out.find("total parameters: 152121") != std::string::npos);
    }

    SUBCASE("config errors exit with code 2 and a named cause") {
        RunResult missing = run_cli("train --network /nonexistent/net.json");
        CHECK(missing.code == 2);
        CHECK(missing.err.find("/nonexistent/net.json") != std::string::npos);

        RunResult zero = run_cli("eval --network " + ws.dir +
                                 "/net1x1.json --model fixed --episodes 0");
        CHECK(zero.code == 2);

        RunResult nock = run_cli("eval --network " + ws.dir + "/net1x1.json");
        CHECK(nock.code == 2);
        CHECK(nock.err.find("--checkpoint") != std::string::npos);

        RunResult fixed_train = run_cli("train --model fixed --network " + ws.dir +
                                        "/net1x1.json");
        CHECK(fixed_train.code == 2);

        RunResult badsub = run_cli("bogus");
        CHECK(badsub.code == 2);
    }

    SUBCASE("checkpoint and model flags must agree") {
        RunResult t = run_cli("train --config " + ws.dir + "/cfg.json --actors 1");
        REQUIRE(t.code == 0);
        RunResult r = run_cli("eval --config " + ws.dir + "/cfg.json --checkpoint " + ws.dir +
                              "/run/final.ckpt --model dqn_ogcn --episodes 1");
        CHECK(r.code == 2);
        CHECK(r.err.find("dqn_ogcn") != std::string::npos);

        RunResult wrongnet = run_cli("describe --network grid2x2 --checkpoint " + ws.dir +
                                     "/run/final.ckpt");
        CHECK(wrongnet.code == 2);
        CHECK(wrongnet.err.find("mismatch") != std::string::npos);
    }

    SUBCASE("thread cap rejects garbage and caps the actor count") {
        const int capped = std::system((std::string("DGQN_THREADS=1 ") + cli_path() +
                                        " train --config " + ws.dir + "/cfg.json --out-dir " +
                                        ws.dir + "/capped --actors 2 > /dev/null 2>&1")
                                           .c_str());
        REQUIRE(WEXITSTATUS(capped) == 0);
        std::ifstream in(ws.dir + "/capped/metrics.csv");
        REQUIRE(in.good());
        std::string line;
        std::getline(in, line);  // header
        bool saw_actor_1 = false;
        while (std::getline(in, line))
            if (line.rfind("1,", 0) == 0) saw_actor_1 = true;
        CHECK_FALSE(saw_actor_1);  // capped to a single actor

        const int bad_env = std::system((std::string("DGQN_THREADS=zero ") + cli_path() +
                                         " describe --network grid2x2 > /dev/null 2>&1")
                                            .c_str());
        CHECK(WEXITSTATUS(bad_env) == 2);
    }
}

TEST_CASE("shipped network files load and match the builders") {
    const std::string seoul = "../../data/seoul15.json";
    const std::string grid = "../../data/grid2x2.json";
    REQUIRE(fs::exists(seoul));
    REQUIRE(fs::exists(grid));
    CHECK(dgqn::load_network(seoul) == dgqn::builtin_seoul15());
    CHECK(dgqn::load_network(grid) == dgqn::grid_network(2, 2, 600, 2));

    // the files carry an annotation block the loader must ignore
    std::ifstream in(seoul);
    nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j.contains("_notes"));
}
