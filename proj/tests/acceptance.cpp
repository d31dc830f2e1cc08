// Acceptance gate: the nine campaign-level criteria, one pass/fail line each.
// Module-level behavior is covered by the per-module suites; this binary
// exercises the frozen thresholds end to end.
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "scenariofuzz/analysis.hpp"

using namespace sf;
namespace fs = std::filesystem;

namespace {

const std::string kMapDir = std::string(SF_SOURCE_DIR) + "/data/maps/";
const std::string kGoldenDir = std::string(SF_SOURCE_DIR) + "/data/golden/";

struct Loaded {
    RoadNetwork net;
    TopologyGraph g;
    SeedCorpus corpus;
};

Loaded load(const std::string& name) {
    Loaded out;
    out.net = load_opendrive_file(kMapDir + name + ".xodr");
    out.g = build_topology(out.net, 5.0);
    out.corpus = build_corpus(out.net, out.g, CorpusParams{}, name);
    return out;
}

// One criterion: collect failures, time the body, print a single verdict line.
class Criterion {
public:
    Criterion(int number, std::string title, double budget_s)
        : number_(number), title_(std::move(title)), budget_s_(budget_s),
          start_(std::chrono::steady_clock::now()) {}

    void expect(bool cond, const std::string& what) {
        if (!cond) notes_.push_back(what);
    }

    void finish() {
        double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start_)
                          .count();
        if (budget_s_ > 0 && secs > budget_s_) {
            notes_.push_back("runtime " + std::to_string(secs) + " s over budget");
        }
        bool ok = notes_.empty();
        std::printf("[criterion %d] %s: %s (%.2f s", number_, title_.c_str(),
                    ok ? "PASS" : "FAIL", secs);
        if (budget_s_ > 0) std::printf(", budget %.0f s", budget_s_);
        std::printf(")\n");
        for (const auto& n : notes_) std::printf("    - %s\n", n.c_str());
        std::fflush(stdout);
        CHECK_MESSAGE(ok, "criterion ", number_, " failed");
    }

private:
    int number_;
    std::string title_;
    double budget_s_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> notes_;
};

// ---- shared fixtures -------------------------------------------------------

const char* kWeakSpec = "weak:height=1.0,red=1,weather=0,yield=0";

SemConfig small_sem() {
    SemConfig cfg;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.head_hidden = 4;
    cfg.type_dim = 3;
    cfg.sign_dim = 2;
    cfg.app_dim = 3;
    return cfg;
}

// criterion 6/7 setup: the desk-scale discovery campaign.
// The SEM is shrunk from the production defaults so 16 campaigns fit the gate.
FuzzConfig campaign_config(StrategyMode strategy, std::uint64_t rng_seed) {
    FuzzConfig cfg;
    cfg.strategy = strategy;
    cfg.tr = 50;
    cfg.limits.stuck_timeout = 30.0;
    cfg.sem = small_sem();
    cfg.sem_epochs = 50;
    cfg.rng_seed = rng_seed;
    return cfg;
}

ScenarioGraph tiny_graph(double fog) {
    ScenarioGraph g;
    g.nodes = {
        {{0, 0, 0}, static_cast<int>(NodeType::EgoStart), 0, 0},
        {{10, 2, 0}, static_cast<int>(NodeType::Default), 1, 0},
        {{20, -3, 0}, static_cast<int>(NodeType::EgoEnd), 0, 0},
        {{5, 8, 0}, static_cast<int>(NodeType::Vehicle), 0, 8},
    };
    g.edges = {
        {0, 1, 10.2, static_cast<int>(EdgeType::EgoMission), 2},
        {1, 2, 11.2, static_cast<int>(EdgeType::EgoMission), 2},
        {3, 1, 7.8, static_cast<int>(EdgeType::VehiclePath), 0},
    };
    g.weather = {10, 20, 0, 5, fog, 0, 90, 45};
    return g;
}

// crafted trace on a prepared world: ego drives the mission start pose, every
// frame overridden by the caller
TraceFrame base_frame(const World& world, int tick) {
    TraceFrame f;
    f.state = world.initial_state();
    f.state.tick = tick;
    f.state.time = tick * kDt;
    f.state.ego.speed = 5.0;
    return f;
}

double ari(const std::vector<int>& a, const std::vector<int>& b) {
    const int n = static_cast<int>(a.size());
    auto comb2 = [](double x) { return x * (x - 1) / 2.0; };
    std::map<std::pair<int, int>, int> joint;
    std::map<int, int> ca, cb;
    for (int i = 0; i < n; ++i) {
        ++joint[{a[static_cast<size_t>(i)], b[static_cast<size_t>(i)]}];
        ++ca[a[static_cast<size_t>(i)]];
        ++cb[b[static_cast<size_t>(i)]];
    }
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (const auto& [k, v] : joint) sum_ij += comb2(v);
    for (const auto& [k, v] : ca) sum_a += comb2(v);
    for (const auto& [k, v] : cb) sum_b += comb2(v);
    double expect = sum_a * sum_b / comb2(n);
    double max_idx = 0.5 * (sum_a + sum_b);
    return (sum_ij - expect) / (max_idx - expect);
}

}  // namespace

// ---- 1: corpus correctness -------------------------------------------------

TEST_CASE("criterion 1: corpus golden summaries") {
    Criterion c(1, "corpus matches hand-verified goldens on all 5 maps", 10.0);
    const char* maps[] = {"straight_road", "curved_road", "cross_small",
                          "tee_small", "mini_town"};
    for (const char* name : maps) {
        std::ifstream in(kGoldenDir + name + ".json");
        c.expect(in.good(), std::string(name) + ": golden file missing");
        if (!in.good()) continue;
        Json golden = Json::parse(in);

        auto l = load(name);
        Json got;
        got["map_name"] = l.corpus.map_name;
        got["n_seeds"] = l.corpus.seeds.size();
        got["seeds"] = Json::array();
        auto seeds = l.corpus.seeds;
        std::sort(seeds.begin(), seeds.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        for (const auto& s : seeds) {
            std::vector<std::string> dirs;
            for (const auto& p : s.paths) dirs.push_back(to_string(p.direction));
            std::sort(dirs.begin(), dirs.end());
            got["seeds"].push_back({{"id", s.id},
                                    {"road_type", to_string(s.road_type)},
                                    {"n_traffic_lights", s.traffic_lights.size()},
                                    {"directions", dirs}});
        }
        c.expect(got == golden, std::string(name) + ": summary diverges from golden");
    }
    c.finish();
}

// ---- 2: replay determinism -------------------------------------------------

TEST_CASE("criterion 2: 20 stored errors replay bit-identically") {
    Criterion c(2, "20 stored error scenarios replay PASS", 120.0);
    auto l = load("cross_small");
    CampaignContext ctx{&l.corpus, &l.net, &l.g};

    std::string root = "/tmp/sf_acceptance_replay";
    fs::remove_all(root);
    StateDir dir(root);
    dir.save_corpus(l.corpus);

    auto cfg = campaign_config(StrategyMode::RMS, 7);
    auto agent = make_agent(kWeakSpec);
    run_campaign(cfg, ctx, *agent, 40, dir);

    auto ids = dir.list_errors();
    c.expect(ids.size() >= 20, "campaign produced " + std::to_string(ids.size()) +
                                   " errors, need >= 20");
    int passed = 0;
    for (size_t i = 0; i < ids.size() && i < 20; ++i) {
        auto rep = replay_error(dir, ids[i], ctx);
        if (rep.pass && rep.max_deviation == 0.0) ++passed;
        c.expect(rep.pass, "error " + std::to_string(ids[i]) + " replay FAIL");
    }
    c.expect(passed == 20, "replay PASS " + std::to_string(passed) + "/20");
    c.finish();
}

// ---- 3: mutation properties ------------------------------------------------

TEST_CASE("criterion 3: mutation locality and validity at 1e5 scale") {
    Criterion c(3, "1e5 Neighbor samples local, 1e5 Random mutants valid", 60.0);

    // Neighbor locality: |sample - current| <= 5 steps, always in range
    {
        AttrMeta cont{"weather.fog", false, 0.0, 100.0, 1.0, 0};
        AttrMeta disc{"appearance", true, 0.0, 25.0, 1.0, 26};
        Rng rng(404);
        int bad = 0;
        for (int i = 0; i < 100000; ++i) {
            const AttrMeta& m = (i % 2 == 0) ? cont : disc;
            double cur = m.lo + rng.uniform(0, 1) * (m.hi - m.lo);
            if (m.discrete) cur = std::round(cur);
            double v = sample_attribute(m, SampleMode::Neighbor, cur, rng);
            if (std::abs(v - cur) > 5.0 * m.step + 1e-12 || v < m.lo || v > m.hi) ++bad;
        }
        c.expect(bad == 0, std::to_string(bad) + " Neighbor samples out of bounds");
    }

    // Random mutant validity: mission path from the corpus, spawns unique and
    // inside the seed region, puddle attributes in range
    {
        auto l = load("cross_small");
        const ScenarioSeed* seed = nullptr;
        for (const auto& s : l.corpus.seeds) {
            if (!s.traffic_lights.empty()) seed = &s;
        }
        REQUIRE(seed != nullptr);
        std::set<int> members(seed->waypoints.begin(), seed->waypoints.end());
        std::set<std::vector<int>> corpus_paths;
        for (const auto& p : seed->paths) corpus_paths.insert(p.waypoints);

        MutationParams params;
        Rng root(2025);
        int bad = 0;
        for (int i = 0; i < 100000; ++i) {
            Rng rng = root.derive(static_cast<std::uint64_t>(i));
            auto sc = mutate_scenario(*seed, l.g, SampleMode::Random, nullptr,
                                      params, rng);
            bool ok = corpus_paths.count(sc.mission.path) == 1 &&
                      static_cast<int>(sc.objects.size()) <= params.max_objects &&
                      static_cast<int>(sc.puddles.size()) <= params.max_puddles;
            std::set<int> spawns = {sc.mission.start_waypoint};
            for (const auto& ob : sc.objects) {
                ok = ok && members.count(ob.spawn_waypoint) == 1 &&
                     spawns.insert(ob.spawn_waypoint).second;
                if (ob.crossing) {
                    ok = ok && ob.path.size() == 2 && ob.kind == ObjectKind::Pedestrian;
                } else if (!ob.path.empty()) {
                    ok = ok && corpus_paths.count(ob.path) == 1 &&
                         ob.path.front() == ob.spawn_waypoint;
                }
            }
            for (const auto& pd : sc.puddles) {
                ok = ok && members.count(pd.center_waypoint) == 1 &&
                     pd.radius >= 0.5 && pd.radius <= 3.0 &&
                     pd.friction >= 0.1 && pd.friction <= 1.0;
            }
            ok = ok && sc.weather.fog >= 0.0 && sc.weather.fog <= 100.0;
            if (!ok) ++bad;
        }
        c.expect(bad == 0, std::to_string(bad) + " Random mutants invalid");
    }
    c.finish();
}

// ---- 4: SEM numerics -------------------------------------------------------

TEST_CASE("criterion 4: SEM gradients, invariance, synthetic accuracy") {
    Criterion c(4, "SEM numerics within frozen tolerances", 120.0);

    // analytic vs central finite differences over 10 sampled parameters
    {
        SemModel model(small_sem(), 77);
        auto b = preprocess_batch({tiny_graph(10), tiny_graph(60), tiny_graph(95)});
        Eigen::VectorXd labels(3);
        labels << 0, 1, 1;
        model.zero_grad();
        model.loss_and_grad(b, labels, nullptr);

        Rng rng(5);
        double max_rel = 0.0;
        for (int k = 0; k < 10; ++k) {
            int idx = static_cast<int>(rng.uniform_int(0, model.n_params() - 1));
            double orig = model.get_param(idx);
            double analytic = model.get_grad(idx);
            const double h = 1e-4;
            model.set_param(idx, orig + h);
            SemModel probe = model;
            probe.zero_grad();
            double lp = probe.loss_and_grad(b, labels, nullptr);
            model.set_param(idx, orig - h);
            probe = model;
            probe.zero_grad();
            double lm = probe.loss_and_grad(b, labels, nullptr);
            model.set_param(idx, orig);
            double numeric = (lp - lm) / (2 * h);
            double rel = std::abs(analytic - numeric) /
                         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
        c.expect(max_rel < 1e-3,
                 "gradient max relative error " + std::to_string(max_rel));
    }

    // node-permutation invariance of the confidence
    {
        auto gr = tiny_graph(42);
        ScenarioGraph perm;
        int n = static_cast<int>(gr.nodes.size());
        for (int i = n - 1; i >= 0; --i) perm.nodes.push_back(gr.nodes[static_cast<size_t>(i)]);
        for (auto e : gr.edges) {
            e.from = n - 1 - e.from;
            e.to = n - 1 - e.to;
            perm.edges.push_back(e);
        }
        perm.weather = gr.weather;
        SemModel model(small_sem(), 23);
        auto y1 = model.forward(preprocess_batch({gr}));
        auto y2 = model.forward(preprocess_batch({perm}));
        c.expect(std::abs(y1(0) - y2(0)) < 1e-9,
                 "permutation gap " + std::to_string(std::abs(y1(0) - y2(0))));
    }

    // separable synthetic set (label = fog > 50): >= 0.95 validation accuracy
    {
        std::vector<ScenarioGraph> graphs;
        std::vector<bool> labels;
        Rng rng(2025);
        for (int i = 0; i < 500; ++i) {
            double fog = rng.uniform(0, 100);
            graphs.push_back(tiny_graph(fog));
            labels.push_back(fog > 50);
        }
        SemConfig cfg = small_sem();
        cfg.dropout = 0.1;
        SemModel model(cfg, 7);
        Rng train_rng(11);
        auto res = train_sem(model, graphs, labels, 1000, train_rng);
        c.expect(res.validation.accuracy >= 0.95,
                 "validation accuracy " + std::to_string(res.validation.accuracy));
    }
    c.finish();
}

// ---- 5: misbehavior oracles ------------------------------------------------

TEST_CASE("criterion 5: five detectors fire, five near-miss twins do not") {
    Criterion c(5, "misbehavior oracles vs near-miss twins", 10.0);
    SimLimits limits;
    limits.stuck_timeout = 30.0;

    auto fired = [&](const World& w, const Trace& t, const std::string& kind) {
        for (const auto& m : detect_misbehavior(w, t, limits)) {
            if (m.kind == kind) return true;
        }
        return false;
    };

    // straight_road host scenario with one parked car on the opposite lane
    auto l = load("straight_road");
    ConcreteScenario sc;
    for (const auto& seed : l.corpus.seeds) {
        for (const auto& p : seed.paths) {
            if (l.g.node(p.waypoints.front()).lane_id == -1) {
                sc.source_seed_id = seed.id;
                sc.map_name = seed.map_name;
                sc.mission.path = p.waypoints;
                sc.mission.start_waypoint = p.waypoints.front();
                sc.mission.direction = p.direction;
            }
        }
    }
    REQUIRE(!sc.mission.path.empty());
    int far_spawn = -1;
    for (const auto& wp : l.g.nodes) {
        if (wp.lane_id == 1 && wp.s < 10) far_spawn = wp.id;
    }
    REQUIRE(far_spawn >= 0);
    ObjectSpec parked;
    parked.action = ActionType::Immobile;
    parked.spawn_waypoint = far_spawn;
    sc.objects.push_back(parked);
    World world(sc, l.net, l.g);

    // Crash: object driven onto the ego box vs a 0.5 m lateral gap
    {
        Trace hit;
        hit.frames.push_back(base_frame(world, 0));
        auto f = base_frame(world, 40);
        f.state.objects[0].pose = f.state.ego.pose;
        hit.frames.push_back(f);
        Trace miss = hit;
        miss.frames.back().state.objects[0].pose.y += kEgoWidth + 0.5;
        c.expect(fired(world, hit, "Crash"), "Crash did not fire");
        c.expect(!fired(world, miss, "Crash"), "Crash fired on the near miss");
    }

    // Speeding: 1.1 s over 1.05x the limit vs 0.9 s
    {
        double limit = world.speed_limit_at(world.mission_points()[0].x,
                                            world.mission_points()[0].y);
        auto make = [&](int over_ticks) {
            Trace t;
            t.frames.push_back(base_frame(world, 0));
            for (int i = 1; i <= over_ticks + 5; ++i) {
                auto f = base_frame(world, i);
                f.state.ego.speed = i <= over_ticks ? 1.2 * limit : 0.5 * limit;
                t.frames.push_back(f);
            }
            return t;
        };
        c.expect(fired(world, make(22), "Speeding"), "Speeding did not fire");
        c.expect(!fired(world, make(18), "Speeding"), "Speeding fired early");
    }

    // LaneInvasion: 2.4 m off the mission lane vs 1.0 m (half width 1.75)
    {
        auto make = [&](double offset) {
            Trace t;
            t.frames.push_back(base_frame(world, 0));
            auto f = base_frame(world, 1);
            f.state.ego.pose.y += offset;
            t.frames.push_back(f);
            return t;
        };
        c.expect(fired(world, make(-2.4), "LaneInvasion"), "LaneInvasion did not fire");
        c.expect(!fired(world, make(-1.0), "LaneInvasion"),
                 "LaneInvasion fired inside the lane");
    }

    // Stuck: 30 s + margin below 0.1 m/s vs just under the timeout
    {
        auto make = [&](int n_frames) {
            Trace t;
            for (int i = 0; i < n_frames; ++i) {
                auto f = base_frame(world, i);
                f.state.ego.speed = 0.05;
                t.frames.push_back(f);
            }
            return t;
        };
        c.expect(fired(world, make(650), "Stuck"), "Stuck did not fire");
        c.expect(!fired(world, make(590), "Stuck"), "Stuck fired before the timeout");
    }

    // RedLight: cross the governing stop line on Red vs on Green
    {
        auto lc = load("cross_small");
        ConcreteScenario lsc;
        for (const auto& seed : lc.corpus.seeds) {
            if (seed.traffic_lights.empty() || seed.paths.empty()) continue;
            lsc.source_seed_id = seed.id;
            lsc.map_name = seed.map_name;
            lsc.mission.path = seed.paths.front().waypoints;
            lsc.mission.start_waypoint = lsc.mission.path.front();
            lsc.mission.direction = seed.paths.front().direction;
        }
        World lw(lsc, lc.net, lc.g);
        REQUIRE(!lw.stop_lines().empty());
        auto start = lc.g.node(lsc.mission.path.front()).position;
        const World::StopLine* sl = nullptr;
        double best = 1e18;
        for (const auto& s : lw.stop_lines()) {
            double d = distance(s.position, start);
            if (d < best) {
                best = d;
                sl = &s;
            }
        }
        auto crossing_at = [&](double t_cross) {
            int tick = static_cast<int>(std::llround(t_cross / kDt));
            TraceFrame before = base_frame(lw, tick - 1);
            before.state.ego.pose = {sl->position.x - std::cos(sl->heading),
                                     sl->position.y - std::sin(sl->heading),
                                     sl->heading};
            TraceFrame after = before;
            after.state.tick = tick;
            after.state.time = tick * kDt;
            after.state.ego.pose.x = sl->position.x + std::cos(sl->heading);
            after.state.ego.pose.y = sl->position.y + std::sin(sl->heading);
            Trace t;
            t.frames.push_back(before);
            t.frames.push_back(after);
            return t;
        };
        double red_time = -1, green_time = -1;
        for (double t = 1.0; t < 30.0; t += 0.5) {
            if (light_phase_at(t, sl->signal_id) == LightPhase::Red && red_time < 0)
                red_time = t;
            if (light_phase_at(t, sl->signal_id) == LightPhase::Green && green_time < 0)
                green_time = t;
        }
        c.expect(fired(lw, crossing_at(red_time), "RedLight"), "RedLight did not fire");
        c.expect(!fired(lw, crossing_at(green_time), "RedLight"),
                 "RedLight fired on Green");
    }
    c.finish();
}

// ---- 6: end-to-end discovery -----------------------------------------------

TEST_CASE("criterion 6: 2SMS+SEM campaign discovers Crash and Stuck") {
    Criterion c(6, "weak agent on cross_small, budget 200, 2SMS+SEM", 300.0);
    auto l = load("cross_small");
    CampaignContext ctx{&l.corpus, &l.net, &l.g};
    auto cfg = campaign_config(StrategyMode::TwoSmsSem, 1);
    auto agent = make_agent(kWeakSpec);
    auto report = run_campaign(cfg, ctx, *agent, 200);
    c.expect(report.executions == 200,
             "executions " + std::to_string(report.executions));
    auto count = [&](const char* k) {
        auto it = report.errors_by_kind.find(k);
        return it == report.errors_by_kind.end() ? 0 : it->second;
    };
    c.expect(count("Crash") >= 1, "no Crash discovered");
    c.expect(count("Stuck") >= 1, "no Stuck discovered");
    c.finish();
}

// ---- 7: ablation direction -------------------------------------------------

TEST_CASE("criterion 7: median errors 2SMS+SEM >= 2SMS >= RMS") {
    Criterion c(7, "strategy ablation ordering over 5 rng seeds", 0.0);
    auto l = load("cross_small");
    CampaignContext ctx{&l.corpus, &l.net, &l.g};

    auto median_errors = [&](StrategyMode mode) {
        std::vector<int> counts;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            auto cfg = campaign_config(mode, seed);
            auto agent = make_agent(kWeakSpec);
            counts.push_back(run_campaign(cfg, ctx, *agent, 200).n_errors);
        }
        std::sort(counts.begin(), counts.end());
        return counts[2];
    };
    int rms = median_errors(StrategyMode::RMS);
    int two = median_errors(StrategyMode::TwoSMS);
    int two_sem = median_errors(StrategyMode::TwoSmsSem);
    std::printf("    medians: RMS=%d 2SMS=%d 2SMS+SEM=%d\n", rms, two, two_sem);
    c.expect(two >= rms, "2SMS median below RMS");
    c.expect(two_sem >= two, "2SMS+SEM median below 2SMS");
    c.finish();
}

// ---- 8: clustering recovery ------------------------------------------------

TEST_CASE("criterion 8: 3-family synthetic collision clustering") {
    Criterion c(8, "encoder + kmeans recover 3 collision families", 60.0);

    // disjoint geometry: head-on, side impact, rear-end; ego drives +x
    auto crafted = [&](int family, int variant) {
        Trace t;
        const int tick = 160;
        for (int i = 0; i <= tick; ++i) {
            double time = i * kDt;
            double jitter = 0.05 * variant;
            TraceFrame f;
            f.state.tick = i;
            f.state.time = time;
            f.state.ego.pose = {10.0 * time, 0.0, 0.0};
            f.state.ego.speed = 10.0;
            ObjectState os;
            switch (family) {
                case 0: os.pose = {80.0 - 8.0 * time + jitter, 0.3 * jitter, M_PI}; break;
                case 1: os.pose = {40.0 + jitter, -30.0 + 4.0 * time, M_PI / 2}; break;
                default: os.pose = {-20.0 + 12.0 * time + jitter, 0.1 * jitter, 0.0};
            }
            f.state.objects.push_back(os);
            t.frames.push_back(std::move(f));
        }
        t.events.push_back({"collision", tick, Json{{"entity", 0}}});
        return extract_collision_pair(t);
    };

    std::vector<CollisionTrajectoryPair> pairs;
    std::vector<int> truth;
    for (int f = 0; f < 3; ++f) {
        for (int v = 0; v < 20; ++v) {
            pairs.push_back(crafted(f, v));
            truth.push_back(f);
        }
    }
    TrajectoryEncoder enc(99);
    Rng train_rng(17);
    train_trajectory_encoder(enc, pairs, 300, train_rng);

    Eigen::MatrixXd X(pairs.size(), 4 * kTrajPoints);
    for (size_t i = 0; i < pairs.size(); ++i) X.row(static_cast<int>(i)) = pairs[i].flatten();
    Eigen::MatrixXd latents = enc.encode(X);

    Rng rng(1);
    auto res = cluster_error_scenarios(latents, std::nullopt, rng);
    c.expect(res.k == 3, "silhouette picked k=" + std::to_string(res.k));
    double score = ari(res.assignment, truth);
    c.expect(score >= 0.9, "ARI " + std::to_string(score));
    c.finish();
}

// ---- 9: metric definitions -------------------------------------------------

TEST_CASE("criterion 9: Brier and Pearson match independent recomputation") {
    Criterion c(9, "20-pair metric fixture within 1e-9", 0.0);
    Eigen::VectorXd s(20);
    std::vector<bool> labels;
    Rng rng(77);
    for (int i = 0; i < 20; ++i) {
        s(i) = rng.uniform(0, 1);
        labels.push_back(rng.bernoulli(0.5));
    }
    auto m = metrics_from_scores(s, labels);

    double brier = 0.0, sm = s.mean(), lm = 0.0;
    for (int i = 0; i < 20; ++i) {
        double y = labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
        brier += (s(i) - y) * (s(i) - y) / 20.0;
        lm += y / 20.0;
    }
    double num = 0, d1 = 0, d2 = 0;
    for (int i = 0; i < 20; ++i) {
        double a = s(i) - sm;
        double b = (labels[static_cast<size_t>(i)] ? 1.0 : 0.0) - lm;
        num += a * b;
        d1 += a * a;
        d2 += b * b;
    }
    double pearson = num / std::sqrt(d1 * d2);
    c.expect(std::abs(m.brier - brier) < 1e-9,
             "brier gap " + std::to_string(std::abs(m.brier - brier)));
    c.expect(std::abs(m.pearson - pearson) < 1e-9,
             "pearson gap " + std::to_string(std::abs(m.pearson - pearson)));
    c.finish();
}
