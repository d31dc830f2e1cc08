#include "scenariofuzz/fuzz.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

namespace sf {

namespace fs = std::filesystem;

StrategyMode strategy_from_string(const std::string& s) {
    if (s == "RMS") return StrategyMode::RMS;
    if (s == "2SMS") return StrategyMode::TwoSMS;
    if (s == "RMS+SEM") return StrategyMode::RmsSem;
    if (s == "2SMS+SEM") return StrategyMode::TwoSmsSem;
    throw InvalidConfig("unknown strategy: " + s);
}

std::string to_string(StrategyMode m) {
    switch (m) {
        case StrategyMode::RMS: return "RMS";
        case StrategyMode::TwoSMS: return "2SMS";
        case StrategyMode::RmsSem: return "RMS+SEM";
        case StrategyMode::TwoSmsSem: return "2SMS+SEM";
    }
    throw Error("bad StrategyMode");
}

bool strategy_uses_sem(StrategyMode m) {
    return m == StrategyMode::RmsSem || m == StrategyMode::TwoSmsSem;
}

bool strategy_two_stage(StrategyMode m) {
    return m == StrategyMode::TwoSMS || m == StrategyMode::TwoSmsSem;
}

int FuzzConfig::resolved_n_m() const {
    if (n_m > 0) return n_m;
    // with the SEM gating execution we can afford a wide candidate pool
    return strategy_uses_sem(strategy) ? 100 : 3;
}

void FuzzConfig::validate() const {
    if (n_c < 1) throw InvalidConfig("N_c must be >= 1");
    if (n_e < 1) throw InvalidConfig("N_e must be >= 1");
    if (tr < 1) throw InvalidConfig("tr must be >= 1");
    if (resolved_n_m() < 1) throw InvalidConfig("N_m must be >= 1");
    if (n_e > resolved_n_m()) throw InvalidConfig("N_e must not exceed N_m");
}

Json FuzzConfig::to_json() const {
    Json j;
    j["schema"] = "scenariofuzz-config/1";
    j["strategy"] = sf::to_string(strategy);
    j["n_c"] = n_c;
    j["n_m"] = n_m;
    j["n_e"] = n_e;
    j["tr"] = tr;
    j["rng_seed"] = rng_seed;
    j["horizon"] = limits.horizon;
    j["stuck_timeout"] = limits.stuck_timeout;
    j["sem_epochs"] = sem_epochs;
    j["load_history"] = load_history;
    if (filter.map_name) j["map"] = *filter.map_name;
    if (filter.road_type) j["road_type"] = sf::to_string(*filter.road_type);
    if (filter.has_traffic_lights) j["traffic_lights"] = *filter.has_traffic_lights;
    j["max_objects"] = mutation.max_objects;
    j["max_puddles"] = mutation.max_puddles;
    if (mutation.mission_direction) {
        j["mission_direction"] = sf::to_string(*mutation.mission_direction);
    }
    j["sem_config"] = sem.to_json();
    return j;
}

FuzzConfig FuzzConfig::from_json(const Json& j) {
    FuzzConfig c;
    c.strategy = strategy_from_string(j.value("strategy", "2SMS+SEM"));
    c.n_c = j.value("n_c", c.n_c);
    c.n_m = j.value("n_m", c.n_m);
    c.n_e = j.value("n_e", c.n_e);
    c.tr = j.value("tr", c.tr);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.limits.horizon = j.value("horizon", c.limits.horizon);
    c.limits.stuck_timeout = j.value("stuck_timeout", c.limits.stuck_timeout);
    c.sem_epochs = j.value("sem_epochs", c.sem_epochs);
    c.load_history = j.value("load_history", c.load_history);
    if (j.contains("map")) c.filter.map_name = j.at("map").get<std::string>();
    if (j.contains("road_type")) {
        c.filter.road_type = road_type_from_string(j.at("road_type"));
    }
    if (j.contains("traffic_lights")) c.filter.has_traffic_lights = j.at("traffic_lights");
    c.mutation.max_objects = j.value("max_objects", c.mutation.max_objects);
    c.mutation.max_puddles = j.value("max_puddles", c.mutation.max_puddles);
    if (j.contains("mission_direction")) {
        c.mutation.mission_direction = direction_from_string(j.at("mission_direction"));
    }
    if (j.contains("sem_config")) c.sem = SemConfig::from_json(j.at("sem_config"));
    c.validate();
    return c;
}

bool check_frequency(int frequency, Rng& rng) {
    if (frequency < 0) throw Error("negative frequency");
    return rng.uniform(0.0, 1.0) < 1.0 / (1.0 + frequency);
}

Json ExecutionRecord::to_json() const {
    Json j;
    j["execution"] = execution;
    j["seed_id"] = seed_id;
    j["selection"] = selection;
    j["cycle"] = cycle;
    j["mode"] = mode;
    j["scenario"] = scenario;
    j["outcome"] = outcome;
    j["misbehaviors"] = misbehaviors;
    if (score) j["score"] = *score;
    j["seconds"] = seconds;
    return j;
}

// ---------------------------------------------------------------- StateDir

StateDir::StateDir(std::string root) : root_(std::move(root)) {
    fs::create_directories(root_);
    fs::create_directories(fs::path(root_) / "corpus");
    fs::create_directories(fs::path(root_) / "errors");
    fs::create_directories(fs::path(root_) / "sem");
}

void StateDir::save_corpus(const SeedCorpus& corpus) const {
    if (!enabled()) return;
    std::ofstream out(fs::path(root_) / "corpus" / "corpus.json");
    if (!out) throw Error("cannot write corpus under " + root_);
    out << corpus_to_json(corpus).dump(1) << "\n";
}

std::optional<SeedCorpus> StateDir::load_corpus() const {
    if (!enabled()) return std::nullopt;
    std::ifstream in(fs::path(root_) / "corpus" / "corpus.json");
    if (!in) return std::nullopt;
    return corpus_from_json(Json::parse(in));
}

void StateDir::append_record(const TestRecord& r) const {
    if (!enabled()) return;
    std::ofstream out(fs::path(root_) / "records.jsonl", std::ios::app);
    if (!out) throw Error("cannot append to records.jsonl under " + root_);
    out << record_to_json(r).dump() << "\n";
    out.flush();
    if (!out) throw Error("write to records.jsonl failed");
}

std::vector<TestRecord> StateDir::load_records() const {
    std::vector<TestRecord> out;
    if (!enabled()) return out;
    std::ifstream in(fs::path(root_) / "records.jsonl");
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(Json::parse(line)));
        } catch (const std::exception&) {
            break;  // torn tail from a killed writer; everything before is good
        }
    }
    return out;
}

void StateDir::save_error(const ErrorScenario& e, const SimLimits& limits) const {
    if (!enabled()) return;
    fs::path dir = fs::path(root_) / "errors" / std::to_string(e.id);
    fs::path tmp = fs::path(root_) / "errors" / ("." + std::to_string(e.id) + ".tmp");
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    Json meta;
    meta["schema"] = "scenariofuzz-error/1";
    meta["id"] = e.id;
    meta["agent"] = e.agent;
    meta["rng_seed"] = e.trace.rng_seed;
    meta["horizon"] = limits.horizon;
    meta["stuck_timeout"] = limits.stuck_timeout;
    meta["outcome"] = sf::to_string(e.outcome.kind);
    Json ms = Json::array();
    for (const auto& m : e.outcome.misbehaviors) {
        ms.push_back({{"kind", m.kind}, {"tick", m.tick}, {"detail", m.detail}});
    }
    meta["misbehaviors"] = std::move(ms);
    meta["scenario"] = scenario_to_json(e.scenario);
    {
        std::ofstream out(tmp / "scenario.json");
        if (!out) throw Error("cannot write error scenario " + std::to_string(e.id));
        out << meta.dump(1) << "\n";
    }
    write_trace_files(e.trace, (tmp / "trace.jsonl").string(),
                      (tmp / "events.json").string());
    fs::rename(tmp, dir);  // publish atomically
}

std::vector<int> StateDir::list_errors() const {
    std::vector<int> ids;
    if (!enabled()) return ids;
    fs::path dir = fs::path(root_) / "errors";
    if (!fs::exists(dir)) return ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.empty() || name[0] == '.') continue;
        ids.push_back(std::stoi(name));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::string StateDir::error_dir(int id) const {
    return (fs::path(root_) / "errors" / std::to_string(id)).string();
}

ErrorScenario StateDir::load_error(int id) const {
    fs::path dir = error_dir(id);
    std::ifstream in(dir / "scenario.json");
    if (!in) throw MissingArtifacts("no stored error scenario " + std::to_string(id));
    Json meta = Json::parse(in);
    ErrorScenario e;
    e.id = meta.at("id");
    e.agent = meta.at("agent");
    e.rng_seed = meta.at("rng_seed");
    e.limits.horizon = meta.at("horizon");
    e.limits.stuck_timeout = meta.at("stuck_timeout");
    e.scenario = scenario_from_json(meta.at("scenario"));
    for (const auto& m : meta.at("misbehaviors")) {
        e.outcome.misbehaviors.push_back({m.at("kind"), m.at("tick"), m.at("detail")});
    }
    e.outcome.kind = OutcomeKind::Misbehavior;
    if (!fs::exists(dir / "trace.jsonl")) {
        throw MissingArtifacts("no stored trace for error " + std::to_string(id));
    }
    e.trace = read_trace_files((dir / "trace.jsonl").string(),
                               (dir / "events.json").string());
    return e;
}

void StateDir::save_sem(int epoch, const Json& checkpoint) const {
    if (!enabled()) return;
    std::ofstream out(fs::path(root_) / "sem" / (std::to_string(epoch) + ".ckpt"));
    if (!out) throw Error("cannot write SEM checkpoint");
    out << checkpoint.dump() << "\n";
}

void StateDir::save_report(const Json& report) const {
    if (!enabled()) return;
    std::ofstream out(fs::path(root_) / "report.json");
    if (!out) throw Error("cannot write report.json");
    out << report.dump(1) << "\n";
}

// ---------------------------------------------------------------- campaign

Json CampaignReport::to_json() const {
    Json j;
    j["schema"] = "scenariofuzz-report/1";
    j["executions"] = executions;
    j["n_errors"] = n_errors;
    j["errors_by_kind"] = errors_by_kind;
    j["total_seconds"] = total_seconds;
    Json tl = Json::array();
    for (const auto& e : timeline) tl.push_back(e.to_json());
    j["timeline"] = std::move(tl);
    return j;
}

Json CampaignReport::deterministic_summary() const {
    Json j = to_json();
    j.erase("total_seconds");
    for (auto& e : j["timeline"]) e.erase("seconds");
    return j;
}

void record_test(CampaignState& state, const StateDir& dir, const FuzzConfig& cfg,
                 const ConcreteScenario& sc, const Outcome& outcome,
                 const Trace& trace, const std::string& agent_name,
                 std::optional<double> score) {
    TestRecord rec;
    rec.scenario = sc;
    rec.label = outcome.kind == OutcomeKind::Misbehavior;
    rec.system_id = agent_name;
    rec.driving_score = score;
    dir.append_record(rec);  // journal before the in-memory update
    state.history.push_back(rec);

    if (rec.label) {
        ErrorScenario err;
        err.id = state.next_error_id++;
        err.scenario = sc;
        err.outcome = outcome;
        err.trace = trace;
        err.agent = agent_name;  // full spec string; replay rebuilds from it
        dir.save_error(err, cfg.limits);
        state.error_ids.push_back(err.id);
    }
}

namespace {

// retrain on a snapshot of T; swapped into filtering at the next cycle boundary
void maybe_retrain(const FuzzConfig& cfg, const CampaignContext& ctx,
                   CampaignState& state, const StateDir& dir) {
    if (!strategy_uses_sem(cfg.strategy) || state.history.empty()) return;
    if (state.history.size() % static_cast<size_t>(cfg.tr) != 0) return;

    auto graphs = records_to_graphs(state.history, *ctx.corpus, *ctx.net, *ctx.g);
    std::vector<bool> labels;
    for (const auto& r : state.history) labels.push_back(r.label);
    auto model = std::make_unique<SemModel>(*state.sem);  // continue from current
    Rng rng(derive_seed(cfg.rng_seed, 0x5e11, state.history.size()));
    try {
        train_sem(*model, graphs, labels, cfg.sem_epochs, rng);
    } catch (const DegenerateLabels&) {
        return;  // single-class history: keep the current snapshot
    }
    state.pending_epoch = static_cast<int>(state.history.size());
    dir.save_sem(state.pending_epoch, model->to_json());
    state.pending_sem = std::move(model);
}

}  // namespace

std::optional<ConcreteScenario> fuzz_one_seed(
    const ScenarioSeed& seed, const FuzzConfig& cfg, const CampaignContext& ctx,
    Agent& agent, CampaignState& state, const StateDir& dir,
    CampaignReport& report, int budget, std::uint64_t stream) {
    const int n_m = cfg.resolved_n_m();
    const bool use_sem = strategy_uses_sem(cfg.strategy);
    std::optional<ConcreteScenario> best_ref;  // min driving score so far
    double best_score = std::numeric_limits<double>::infinity();

    for (int cycle = 1; cycle <= cfg.n_c; ++cycle) {
        if (report.executions >= budget) return std::nullopt;

        // SEM snapshot changes only here, between cycles
        if (state.pending_sem) {
            state.sem = std::move(state.pending_sem);
            state.pending_epoch = -1;
        }

        SampleMode mode = SampleMode::Random;
        const ConcreteScenario* ref = nullptr;
        if (strategy_two_stage(cfg.strategy) && cycle > 1 && best_ref) {
            mode = SampleMode::Neighbor;
            ref = &*best_ref;
        }
        std::string mode_name = mode == SampleMode::Random ? "Random" : "Neighbor";

        std::vector<ConcreteScenario> mutants;
        mutants.reserve(static_cast<size_t>(n_m));
        for (int j = 0; j < n_m; ++j) {
            Rng rng(derive_seed(cfg.rng_seed, stream, static_cast<std::uint64_t>(cycle),
                                static_cast<std::uint64_t>(j)));
            mutants.push_back(mutate_scenario(seed, *ctx.g, mode, ref, cfg.mutation, rng));
        }

        std::vector<int> executed;
        if (use_sem) {
            std::vector<ScenarioGraph> graphs;
            graphs.reserve(mutants.size());
            for (const auto& sc : mutants) {
                graphs.push_back(scenario_to_graph(sc, seed, *ctx.net, *ctx.g));
            }
            executed = filter_seeds(*state.sem, graphs, cfg.n_e);
        } else {
            for (int j = 0; j < n_m; ++j) executed.push_back(j);  // unfiltered
        }

        for (int idx : executed) {
            if (report.executions >= budget) return std::nullopt;
            const ConcreteScenario& sc = mutants[static_cast<size_t>(idx)];

            ExecutionRecord er;
            er.execution = report.executions;
            er.seed_id = seed.id;
            er.selection = stream;
            er.cycle = cycle;
            er.mode = mode_name;
            er.scenario = scenario_hash(sc);
            auto t0 = std::chrono::steady_clock::now();

            std::optional<World> world;
            try {
                world.emplace(sc, *ctx.net, *ctx.g);
                world->initial_state();  // probe spawn validity up front
            } catch (const SpawnCollision& e) {
                er.outcome = "SpawnCollision";
                er.seconds = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
                report.timeline.push_back(er);
                continue;  // never ran; not part of T
            }

            auto [trace, outcome] =
                run_scenario(*world, agent, cfg.limits, derive_seed(cfg.rng_seed, er.scenario));
            ++report.executions;
            ++state.executions;
            er.outcome = sf::to_string(outcome.kind);
            for (const auto& m : outcome.misbehaviors) er.misbehaviors.push_back(m.kind);

            std::optional<double> score;
            if (outcome.kind == OutcomeKind::Completed ||
                outcome.kind == OutcomeKind::HorizonExpired) {
                score = driving_score(*world, trace);
            }
            record_test(state, dir, cfg, sc, outcome, trace, agent.spec(), score);
            if (outcome.kind == OutcomeKind::Misbehavior) {
                ++report.n_errors;
                for (const auto& m : outcome.misbehaviors) ++report.errors_by_kind[m.kind];
            } else if (score) {
                er.score = score;
                if (*score < best_score) {
                    best_score = *score;
                    best_ref = sc;
                }
            }
            er.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
            report.timeline.push_back(er);

            maybe_retrain(cfg, ctx, state, dir);
            if (outcome.kind == OutcomeKind::Misbehavior) return sc;
        }
    }
    return std::nullopt;
}

CampaignReport run_campaign(const FuzzConfig& cfg, const CampaignContext& ctx,
                            Agent& agent, int budget, const StateDir& dir) {
    cfg.validate();
    CampaignReport report;
    if (budget <= 0) {
        dir.save_report(report.to_json());
        return report;
    }
    if (ctx.corpus->seeds.empty()) throw NoMatch("empty corpus");

    auto t0 = std::chrono::steady_clock::now();
    CampaignState state;
    if (cfg.load_history) state.history = dir.load_records();
    auto prior = dir.list_errors();
    if (!prior.empty()) state.next_error_id = prior.back() + 1;
    if (strategy_uses_sem(cfg.strategy)) {
        state.sem = std::make_unique<SemModel>(cfg.sem, derive_seed(cfg.rng_seed, 0x5e0));
    }

    // seed pool honoring the config filter; pathless seeds cannot be mutated
    std::vector<int> pool;
    for (const auto& s : ctx.corpus->seeds) {
        if (s.paths.empty()) continue;
        if (cfg.filter.map_name && s.map_name != *cfg.filter.map_name) continue;
        if (cfg.filter.road_type && s.road_type != *cfg.filter.road_type) continue;
        if (cfg.filter.has_traffic_lights &&
            s.traffic_lights.empty() == *cfg.filter.has_traffic_lights) {
            continue;
        }
        pool.push_back(s.id);
    }
    if (pool.empty()) throw NoMatch("no seed matches the campaign filter");

    Rng roulette(derive_seed(cfg.rng_seed, 0xf0));
    size_t cursor = 0;
    std::uint64_t stream = 0;
    while (report.executions < budget) {
        if (state.queue.empty()) {
            state.queue.push_back(pool[cursor % pool.size()]);  // replenish
            ++cursor;
        }
        int sid = state.queue.front();
        state.queue.pop_front();
        int freq = state.frequency[sid]++;

        auto found = fuzz_one_seed(ctx.corpus->seed_by_id(sid), cfg, ctx, agent, state,
                                   dir, report, budget, stream++);
        if (found && check_frequency(freq, roulette)) state.queue.push_back(sid);
    }

    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    dir.save_report(report.to_json());
    return report;
}

CampaignReport run_campaign(const FuzzConfig& cfg, const CampaignContext& ctx,
                            Agent& agent, int budget) {
    StateDir none;
    return run_campaign(cfg, ctx, agent, budget, none);
}

}  // namespace sf
