#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "scenariofuzz/analysis.hpp"
#include "scenariofuzz/config.hpp"

namespace fs = std::filesystem;
using namespace sf;

namespace {

struct Loaded {
    RoadNetwork net;
    TopologyGraph g;
    SeedCorpus corpus;
    CampaignContext ctx;
};

std::string map_name_of(const std::string& path) {
    return fs::path(path).stem().string();
}

Loaded load_map(const std::string& xodr, const StateDir& dir, double spacing = 5.0) {
    if (!fs::exists(xodr)) throw Error("map file not found: " + xodr);
    Loaded out;
    out.net = load_opendrive_file(xodr);
    out.g = build_topology(out.net, spacing);
    auto stored = dir.load_corpus();
    if (stored && stored->map_name == map_name_of(xodr)) {
        out.corpus = std::move(*stored);
    } else {
        CorpusParams params;
        params.spacing = spacing;
        out.corpus = build_corpus(out.net, out.g, params, map_name_of(xodr));
    }
    out.ctx = {&out.corpus, &out.net, &out.g};
    return out;
}

int latest_sem_epoch(const StateDir& dir) {
    int best = -1;
    fs::path sem = fs::path(dir.root()) / "sem";
    if (!dir.enabled() || !fs::exists(sem)) return best;
    for (const auto& e : fs::directory_iterator(sem)) {
        if (e.path().extension() != ".ckpt") continue;
        try {
            best = std::max(best, std::stoi(e.path().stem().string()));
        } catch (const std::exception&) {
        }
    }
    return best;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    return Json::parse(in);
}

// per-agent counts per misbehavior kind, from the stored error library
Json error_breakdown(const StateDir& dir) {
    std::map<std::string, std::map<std::string, int>> counts;
    for (int id : dir.list_errors()) {
        auto err = dir.load_error(id);
        for (const auto& m : err.outcome.misbehaviors) ++counts[err.agent][m.kind];
    }
    Json j = Json::object();
    for (const auto& [agent, kinds] : counts) j[agent] = kinds;
    return j;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"scenario-based fuzzing engine for driving agents"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are accepted after the subcommand too

    std::uint64_t rng_seed = 0;
    bool rng_seed_set = false;
    std::string state_dir_flag;
    std::string log_level = "info";
    app.add_flag_callback("--version", [] {
        std::cout << "scenariofuzz 1.0\n";
        throw CLI::Success{};
    });
    app.add_option("--rng-seed", rng_seed, "root seed for every stochastic stage")
        ->each([&](const std::string&) { rng_seed_set = true; });
    app.add_option("--state-dir", state_dir_flag,
                   "campaign state directory (or $SCENARIOFUZZ_STATE)");
    app.add_option("--log-level", log_level)->check(CLI::IsMember({"debug", "info", "warn"}));

    auto state = [&]() {
        std::string root = state_dir_flag;
        if (root.empty()) {
            const char* env = std::getenv("SCENARIOFUZZ_STATE");
            if (env != nullptr) root = env;
        }
        if (root.empty()) throw Error("no state directory (--state-dir or SCENARIOFUZZ_STATE)");
        return StateDir(root);
    };

    // corpus build
    auto* corpus_cmd = app.add_subcommand("corpus", "seed corpus operations");
    auto* corpus_build = corpus_cmd->add_subcommand("build", "crawl a map into seeds");
    std::string cb_map, cb_out;
    double cb_spacing = 5.0;
    corpus_build->add_option("--map", cb_map, "OPENDRIVE file")->required();
    corpus_build->add_option("--out", cb_out, "output state directory");
    corpus_build->add_option("--spacing", cb_spacing, "waypoint spacing, m");
    corpus_build->callback([&] {
        StateDir dir = cb_out.empty() ? state() : StateDir(cb_out);
        auto loaded = load_map(cb_map, StateDir{}, cb_spacing);
        dir.save_corpus(loaded.corpus);
        Json j;
        j["map"] = loaded.corpus.map_name;
        j["seeds"] = loaded.corpus.seeds.size();
        j["build_seconds"] = loaded.corpus.build_seconds;
        j["out"] = dir.root();
        std::cout << j.dump(1) << "\n";
    });

    // fuzz run
    auto* fuzz_cmd = app.add_subcommand("fuzz", "fuzzing campaigns");
    auto* fuzz_run = fuzz_cmd->add_subcommand("run", "run a campaign");
    std::string fr_config, fr_agent = "basic", fr_map;
    int fr_budget = 0;
    bool fr_found_errors = false;
    fuzz_run->add_option("--config", fr_config, "campaign config file")->required();
    fuzz_run->add_option("--agent", fr_agent, "agent spec for make_agent");
    fuzz_run->add_option("--budget", fr_budget, "execution budget")->required();
    fuzz_run->add_option("--map", fr_map, "OPENDRIVE file")->required();
    fuzz_run->callback([&] {
        auto cfg = load_fuzz_config(fr_config);
        if (rng_seed_set) cfg.rng_seed = rng_seed;
        StateDir dir = state();
        auto loaded = load_map(fr_map, dir);
        dir.save_corpus(loaded.corpus);
        auto agent = make_agent(fr_agent);
        auto report = run_campaign(cfg, loaded.ctx, *agent, fr_budget, dir);
        std::cout << report.to_json().dump(1) << "\n";
        fr_found_errors = report.n_errors > 0;
    });

    // sem train / eval
    auto* sem_cmd = app.add_subcommand("sem", "scenario evaluation model");
    auto* sem_train = sem_cmd->add_subcommand("train", "train on the recorded history");
    std::string st_map;
    int st_epochs = 200;
    sem_train->add_option("--map", st_map, "OPENDRIVE file")->required();
    sem_train->add_option("--epochs", st_epochs);
    sem_train->callback([&] {
        StateDir dir = state();
        auto loaded = load_map(st_map, dir);
        auto records = dir.load_records();
        if (records.empty()) throw Error("no records in " + dir.root());
        auto graphs = records_to_graphs(records, loaded.corpus, loaded.net, loaded.g);
        std::vector<bool> labels;
        for (const auto& r : records) labels.push_back(r.label);
        SemModel model(SemConfig{}, derive_seed(rng_seed, 0x5e0));
        Rng rng(derive_seed(rng_seed, 0x5e1));
        auto result = train_sem(model, graphs, labels, st_epochs, rng);
        dir.save_sem(static_cast<int>(records.size()), model.to_json());
        Json j;
        j["records"] = records.size();
        j["n_train"] = result.n_train;
        j["n_val"] = result.n_val;
        j["validation"] = result.validation.to_json();
        std::cout << j.dump(1) << "\n";
    });

    auto* sem_eval = sem_cmd->add_subcommand("eval", "evaluate a checkpoint");
    std::string se_map, se_ckpt;
    sem_eval->add_option("--map", se_map, "OPENDRIVE file")->required();
    sem_eval->add_option("--ckpt", se_ckpt, "checkpoint file (default: latest)");
    sem_eval->callback([&] {
        StateDir dir = state();
        auto loaded = load_map(se_map, dir);
        auto records = dir.load_records();
        if (records.empty()) throw Error("no records in " + dir.root());
        if (se_ckpt.empty()) {
            int epoch = latest_sem_epoch(dir);
            if (epoch < 0) throw Error("no SEM checkpoint in " + dir.root());
            se_ckpt = dir.root() + "/sem/" + std::to_string(epoch) + ".ckpt";
        }
        auto model = SemModel::from_json(read_json_file(se_ckpt));
        auto graphs = records_to_graphs(records, loaded.corpus, loaded.net, loaded.g);
        std::vector<bool> labels;
        for (const auto& r : records) labels.push_back(r.label);
        auto metrics = evaluate_metrics(model, graphs, labels);
        Json j;
        j["ckpt"] = se_ckpt;
        j["records"] = records.size();
        j["metrics"] = metrics.to_json();
        std::cout << j.dump(1) << "\n";
    });

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "re-run a stored error scenario");
    std::string rp_map, rp_agent;
    int rp_id = -1;
    bool rp_failed = false;
    replay_cmd->add_option("--id", rp_id, "error scenario id")->required();
    replay_cmd->add_option("--map", rp_map, "OPENDRIVE file")->required();
    replay_cmd->add_option("--expect-agent", rp_agent, "flag mismatching agent spec");
    replay_cmd->callback([&] {
        StateDir dir = state();
        auto loaded = load_map(rp_map, dir);
        std::optional<std::string> expected;
        if (!rp_agent.empty()) expected = rp_agent;
        auto rep = replay_error(dir, rp_id, loaded.ctx, expected);
        std::cout << rep.to_json().dump(1) << "\n";
        rp_failed = !rep.pass;
    });

    // analyze cluster
    auto* analyze_cmd = app.add_subcommand("analyze", "error library analysis");
    auto* analyze_cluster = analyze_cmd->add_subcommand("cluster", "cluster collision scenarios");
    std::string ac_map, ac_system;
    int ac_k = 0, ac_epochs = 500;
    analyze_cluster->add_option("--map", ac_map, "OPENDRIVE file")->required();
    analyze_cluster->add_option("--k", ac_k, "cluster count (default: silhouette)");
    analyze_cluster->add_option("--system", ac_system, "only this agent spec");
    analyze_cluster->add_option("--epochs", ac_epochs, "encoder training epochs");
    analyze_cluster->callback([&] {
        StateDir dir = state();
        auto loaded = load_map(ac_map, dir);
        std::vector<CollisionTrajectoryPair> pairs;
        std::vector<int> scenario_ids;
        std::vector<ScenarioGraph> graphs;
        for (int id : dir.list_errors()) {
            auto err = dir.load_error(id);
            if (!ac_system.empty() && err.agent != ac_system) continue;
            try {
                auto pair = extract_collision_pair(err.trace, &err.scenario);
                pair.scenario_id = id;
                graphs.push_back(scenario_to_graph(
                    err.scenario,
                    loaded.corpus.seed_by_id(err.scenario.source_seed_id), loaded.net,
                    loaded.g));
                pairs.push_back(std::move(pair));
                scenario_ids.push_back(id);
            } catch (const NoCollision&) {
                continue;  // non-crash errors have no shared trajectory
            }
        }
        TrajectoryEncoder enc(derive_seed(rng_seed, 0xae));
        Rng rng(derive_seed(rng_seed, 0xaf));
        train_trajectory_encoder(enc, pairs, ac_epochs, rng);
        Eigen::MatrixXd X(static_cast<int>(pairs.size()), 4 * kTrajPoints);
        for (size_t i = 0; i < pairs.size(); ++i) {
            X.row(static_cast<int>(i)) = pairs[i].flatten().transpose();
        }
        Eigen::MatrixXd features = enc.encode(X);
        int epoch = latest_sem_epoch(dir);
        if (epoch >= 0) {
            auto model = SemModel::from_json(
                read_json_file(dir.root() + "/sem/" + std::to_string(epoch) + ".ckpt"));
            auto batch = preprocess_batch(graphs);
            Eigen::MatrixXd pooled;
            model.forward(batch, false, nullptr, &pooled);
            features = fuse_features(features, pooled);
        }
        std::optional<int> k;
        if (ac_k > 0) k = ac_k;
        auto clusters = cluster_error_scenarios(features, k, rng);
        Json j = clusters.to_json();
        Json meds = Json::array();
        for (int m : clusters.medoids) {
            meds.push_back({{"scenario_id", scenario_ids[static_cast<size_t>(m)]},
                            {"trace", dir.error_dir(scenario_ids[static_cast<size_t>(m)]) +
                                          "/trace.jsonl"}});
        }
        j["medoid_refs"] = std::move(meds);
        j["scenario_ids"] = scenario_ids;
        std::ofstream out(fs::path(dir.root()) / "cluster.json");
        out << j.dump(1) << "\n";
        std::cout << j.dump(1) << "\n";
    });

    // report
    auto* report_cmd = app.add_subcommand("report", "summarize a campaign state dir");
    report_cmd->callback([&] {
        StateDir dir = state();
        auto records = dir.load_records();
        int labeled = 0;
        for (const auto& r : records) labeled += r.label ? 1 : 0;
        Json j;
        j["state_dir"] = dir.root();
        j["records"] = records.size();
        j["error_scenarios"] = dir.list_errors().size();
        j["labeled_records"] = labeled;
        j["errors_by_agent"] = error_breakdown(dir);
        std::cout << j.dump(1) << "\n";

        std::ofstream md(fs::path(dir.root()) / "report.md");
        md << "# Campaign summary\n\n";
        md << "- executions recorded: " << records.size() << "\n";
        md << "- error scenarios: " << dir.list_errors().size() << "\n\n";
        md << "## Errors by agent and misbehavior\n\n";
        for (const auto& [agent, kinds] : j["errors_by_agent"].items()) {
            md << "### `" << agent << "`\n\n";
            for (const auto& [kind, count] : kinds.items()) {
                md << "- " << kind << ": " << count.get<int>() << "\n";
            }
            md << "\n";
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors
    }
    if (fr_found_errors) return 2;  // campaign completed and found bugs
    if (rp_failed) return 3;        // determinism contract broken
    return 0;
}

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        Json err{{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    }
}
