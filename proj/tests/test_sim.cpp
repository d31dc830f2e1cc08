#include <doctest.h>

#include <cmath>

#include "scenariofuzz/agents.hpp"

using namespace sf;

namespace {

const std::string kMapDir = std::string(SF_SOURCE_DIR) + "/data/maps/";

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

// straight eastbound mission on the single-road map, no other entities
ConcreteScenario straight_mission(const Loaded& l) {
    for (const auto& seed : l.corpus.seeds) {
        for (const auto& p : seed.paths) {
            if (l.g.node(p.waypoints.front()).lane_id == -1) {
                ConcreteScenario sc;
                sc.source_seed_id = seed.id;
                sc.map_name = seed.map_name;
                sc.mission.path = p.waypoints;
                sc.mission.start_waypoint = p.waypoints.front();
                sc.mission.direction = p.direction;
                return sc;
            }
        }
    }
    throw Error("no eastbound path");
}

ConcreteScenario lighted_mission(const Loaded& l) {
    for (const auto& seed : l.corpus.seeds) {
        if (seed.traffic_lights.empty() || seed.paths.empty()) continue;
        ConcreteScenario sc;
        sc.source_seed_id = seed.id;
        sc.map_name = seed.map_name;
        const auto& p = seed.paths.front();
        sc.mission.path = p.waypoints;
        sc.mission.start_waypoint = p.waypoints.front();
        sc.mission.direction = p.direction;
        return sc;
    }
    throw Error("no lighted seed");
}

ObjectSpec immobile_object(int spawn_wp, int appearance_id = 0) {
    ObjectSpec ob;
    ob.kind = ObjectKind::Vehicle;
    ob.appearance_id = appearance_id;
    ob.action = ActionType::Immobile;
    ob.spawn_waypoint = spawn_wp;
    return ob;
}

struct FullBrakeAgent : Agent {
    PerceptionModel pm;
    std::string name() const override { return "full_brake"; }
    const PerceptionModel& perception() const override { return pm; }
    AgentControl act(const AgentObservation&) override { return {0.0, 1.0, 0.0}; }
};

bool point_in_obb(const Obb& o, double px, double py) {
    double c = std::cos(o.heading), s = std::sin(o.heading);
    double dx = px - o.cx, dy = py - o.cy;
    double lx = dx * c + dy * s, ly = -dx * s + dy * c;
    return std::abs(lx) <= o.half_len && std::abs(ly) <= o.half_wid;
}

// brute-force point-sampling overlap oracle
bool sampled_overlap(const Obb& a, const Obb& b) {
    const int n = 150;
    auto scan = [&](const Obb& from, const Obb& other) {
        double c = std::cos(from.heading), s = std::sin(from.heading);
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; j <= n; ++j) {
                double lx = -from.half_len + 2.0 * from.half_len * i / n;
                double ly = -from.half_wid + 2.0 * from.half_wid * j / n;
                if (point_in_obb(other, from.cx + lx * c - ly * s, from.cy + lx * s + ly * c)) {
                    return true;
                }
            }
        }
        return false;
    };
    return scan(a, b) || scan(b, a);
}

}  // namespace

TEST_CASE("light schedule") {
    CHECK(light_phase_at(0.0, 2) == LightPhase::Green);
    CHECK(light_phase_at(11.9, 2) == LightPhase::Green);
    CHECK(light_phase_at(12.0, 2) == LightPhase::Yellow);
    CHECK(light_phase_at(15.0, 2) == LightPhase::Red);
    CHECK(light_phase_at(29.9, 2) == LightPhase::Red);
    CHECK(light_phase_at(30.0, 2) == LightPhase::Green);
    // odd ids run 15 s out of phase
    CHECK(light_phase_at(0.0, 3) == LightPhase::Red);
    CHECK(light_phase_at(15.0, 3) == LightPhase::Green);
}

TEST_CASE("obb overlap vs point-sampling oracle") {
    Rng rng(101);
    int overlaps = 0;
    for (int i = 0; i < 300; ++i) {
        Obb a{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-M_PI, M_PI),
              rng.uniform(0.5, 3), rng.uniform(0.3, 1.5)};
        Obb b{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-M_PI, M_PI),
              rng.uniform(0.5, 3), rng.uniform(0.3, 1.5)};
        bool sat = obb_overlap(a, b);
        bool oracle = sampled_overlap(a, b);
        CAPTURE(i);
        CHECK(sat == oracle);
        if (sat) {
            ++overlaps;
            CHECK(obb_distance(a, b) == 0.0);
        } else {
            CHECK(obb_distance(a, b) > 0.0);
        }
    }
    CHECK(overlaps > 20);  // the sample actually exercises both branches
}

TEST_CASE("obb distance arithmetic") {
    Obb a{0, 0, 0, 2, 1};
    Obb b{0, 4.5, 0, 2, 1};  // parallel, gap = 4.5 - 1 - 1
    CHECK(obb_distance(a, b) == doctest::Approx(2.5));
    Obb c{10, 0, 0, 2, 1};
    CHECK(obb_distance(a, c) == doctest::Approx(6.0));
}

TEST_CASE("instantiate_scenario") {
    auto l = load("straight_road");
    auto sc = straight_mission(l);

    SUBCASE("ego only") {
        auto ws = instantiate_scenario(sc, l.net, l.g);
        CHECK(ws.objects.empty());
        CHECK(ws.tick == 0);
        CHECK(ws.time == 0.0);
        const auto& start = l.g.node(sc.mission.path.front());
        CHECK(ws.ego.pose.x == doctest::Approx(start.position.x));
        CHECK(ws.ego.pose.y == doctest::Approx(start.position.y));
        CHECK(ws.ego.speed == 0.0);
    }
    SUBCASE("objects stand at their spawn waypoints") {
        auto sc3 = sc;
        // three spawns well clear of the ego and each other
        std::vector<int> spawns;
        for (const auto& wp : l.g.nodes) {
            if (wp.lane_id == 1 && (spawns.empty() ||
                                    distance(wp.position, l.g.node(spawns.back()).position) > 12)) {
                spawns.push_back(wp.id);
            }
            if (spawns.size() == 3) break;
        }
        REQUIRE(spawns.size() == 3);
        for (int s : spawns) sc3.objects.push_back(immobile_object(s));
        auto ws = instantiate_scenario(sc3, l.net, l.g);
        REQUIRE(ws.objects.size() == 3);
        for (size_t i = 0; i < 3; ++i) {
            const auto& wp = l.g.node(spawns[i]);
            CHECK(ws.objects[i].pose.x == doctest::Approx(wp.position.x));
            CHECK(ws.objects[i].pose.y == doctest::Approx(wp.position.y));
        }
    }
    SUBCASE("bit-identical on repetition") {
        auto a = instantiate_scenario(sc, l.net, l.g);
        auto b = instantiate_scenario(sc, l.net, l.g);
        CHECK(world_state_to_json(a).dump() == world_state_to_json(b).dump());
    }
    SUBCASE("overlapping spawns are rejected") {
        auto bad = sc;
        // two adjacent waypoints 5 m apart, both holding 11 m buses
        std::vector<int> lane1;
        for (const auto& wp : l.g.nodes) {
            if (wp.lane_id == 1) lane1.push_back(wp.id);
        }
        REQUIRE(lane1.size() >= 2);
        bad.objects.push_back(immobile_object(lane1[0], 5));
        bad.objects.push_back(immobile_object(lane1[1], 5));
        CHECK_THROWS_AS(instantiate_scenario(bad, l.net, l.g), SpawnCollision);
    }
}

TEST_CASE("step_world") {
    auto l = load("straight_road");
    auto sc = straight_mission(l);
    World world(sc, l.net, l.g);

    SUBCASE("zero control keeps speed, advances v*dt") {
        auto ws = world.initial_state();
        ws.ego.speed = 6.0;
        double x0 = ws.ego.pose.x;
        world.step(ws, {});
        CHECK(ws.ego.speed == doctest::Approx(6.0));
        CHECK(ws.ego.pose.x - x0 == doctest::Approx(6.0 * kDt));
        CHECK(ws.tick == 1);
        CHECK(ws.time == doctest::Approx(kDt));
    }
    SUBCASE("full brake from 10 m/s stops in 25 ticks") {
        auto ws = world.initial_state();
        ws.ego.speed = 10.0;
        int ticks = 0;
        while (ws.ego.speed > 0 && ticks < 100) {
            world.step(ws, {0.0, 1.0, 0.0});
            ++ticks;
        }
        CHECK(ticks == 25);
    }
    SUBCASE("puddle friction weakens braking") {
        auto wet = sc;
        PuddleSpec pd;
        pd.center_waypoint = sc.mission.path.front();
        pd.radius = 3.0;
        pd.friction = 0.5;
        wet.puddles.push_back(pd);
        World wet_world(wet, l.net, l.g);
        auto ws = wet_world.initial_state();
        ws.ego.speed = 10.0;
        wet_world.step(ws, {0.0, 1.0, 0.0});
        CHECK(ws.ego.accel == doctest::Approx(-4.0));  // 8 * 0.5
        CHECK(ws.ego.speed == doctest::Approx(10.0 - 4.0 * kDt));
    }
    SUBCASE("deterministic successor") {
        auto a = world.initial_state();
        a.ego.speed = 5.0;
        auto b = a;
        world.step(a, {0.3, 0.0, 0.2});
        world.step(b, {0.3, 0.0, 0.2});
        CHECK(world_state_to_json(a).dump() == world_state_to_json(b).dump());
    }
    SUBCASE("speed never rises without throttle") {
        auto ws = world.initial_state();
        ws.ego.speed = 8.0;
        Rng rng(4);
        double prev = ws.ego.speed;
        for (int i = 0; i < 200; ++i) {
            world.step(ws, {0.0, rng.uniform(0, 0.3), rng.uniform(-1, 1)});
            CHECK(ws.ego.speed <= prev + 1e-12);
            prev = ws.ego.speed;
        }
    }
    SUBCASE("linear object advances at constant speed") {
        auto moving = sc;
        ObjectSpec ob;
        ob.kind = ObjectKind::Vehicle;
        ob.appearance_id = 0;
        ob.action = ActionType::Linear;
        ob.speed = 4.0;
        // opposite lane path, away from the ego spawn
        for (const auto& seed : l.corpus.seeds) {
            for (const auto& p : seed.paths) {
                if (l.g.node(p.waypoints.front()).lane_id == 1) ob.path = p.waypoints;
            }
        }
        REQUIRE(!ob.path.empty());
        ob.spawn_waypoint = ob.path.front();
        moving.objects.push_back(ob);
        World w2(moving, l.net, l.g);
        auto ws = w2.initial_state();
        for (int i = 0; i < 40; ++i) w2.step(ws, {});
        CHECK(ws.objects[0].progress == doctest::Approx(4.0 * 40 * kDt));
        CHECK(ws.objects[0].speed == doctest::Approx(4.0));
    }
}

TEST_CASE("misbehavior detectors") {
    auto l = load("straight_road");
    auto sc = straight_mission(l);
    SimLimits limits;
    limits.stuck_timeout = 30.0;

    // one parked car on the opposite lane for crash crafting
    int far_spawn = -1;
    for (const auto& wp : l.g.nodes) {
        if (wp.lane_id == 1 && wp.s < 10) far_spawn = wp.id;
    }
    REQUIRE(far_spawn >= 0);
    auto sc_obj = sc;
    sc_obj.objects.push_back(immobile_object(far_spawn));
    World world(sc_obj, l.net, l.g);

    auto base_frame = [&](int tick) {
        TraceFrame f;
        f.state = world.initial_state();
        f.state.tick = tick;
        f.state.time = tick * kDt;
        f.state.ego.speed = 5.0;
        return f;
    };

    SUBCASE("crash fires on box overlap, not on a near miss") {
        Trace crash;
        crash.frames.push_back(base_frame(0));
        auto f39 = base_frame(39);
        auto f40 = base_frame(40);
        // drive the parked car onto the ego at tick 40
        f40.state.objects[0].pose = f40.state.ego.pose;
        crash.frames.push_back(f39);
        crash.frames.push_back(f40);
        auto ms = detect_misbehavior(world, crash, limits);
        REQUIRE(ms.size() == 1);
        CHECK(ms[0].kind == "Crash");
        CHECK(ms[0].tick == 40);
        CHECK(ms[0].detail.at("entity") == 0);

        Trace near = crash;
        auto& f = near.frames.back();
        f.state.objects[0].pose = f.state.ego.pose;
        f.state.objects[0].pose.y += kEgoWidth + 0.5;  // 0.5 m gap, same heading
        CHECK(detect_misbehavior(world, near, limits).empty());
    }

    SUBCASE("speeding needs a full second over 1.05x the limit") {
        double limit = 40.0 / 3.6;
        auto make = [&](int over_ticks) {
            Trace t;
            t.frames.push_back(base_frame(0));
            for (int i = 1; i <= over_ticks + 5; ++i) {
                auto f = base_frame(i);
                f.state.ego.speed = i <= over_ticks ? 1.2 * limit : 0.5 * limit;
                t.frames.push_back(f);
            }
            return t;
        };
        CHECK(detect_misbehavior(world, make(18), limits).empty());  // 0.9 s
        auto ms = detect_misbehavior(world, make(22), limits);       // 1.1 s
        REQUIRE(ms.size() == 1);
        CHECK(ms[0].kind == "Speeding");
        CHECK(ms[0].tick == 20);  // fires exactly at the 1.0 s mark
        CHECK(ms[0].detail.at("limit") == doctest::Approx(limit));
        CHECK(ms[0].detail.at("speed") == doctest::Approx(1.2 * limit));
    }

    SUBCASE("lane invasion against the mission corridor") {
        auto make = [&](double offset) {
            Trace t;
            t.frames.push_back(base_frame(0));
            auto f = base_frame(1);
            f.state.ego.pose.y += offset;
            t.frames.push_back(f);
            return t;
        };
        // shift away from the opposite lane so the parked car stays clear
        CHECK(detect_misbehavior(world, make(-1.0), limits).empty());
        auto ms = detect_misbehavior(world, make(-2.4), limits);
        REQUIRE(ms.size() == 1);
        CHECK(ms[0].kind == "LaneInvasion");
        CHECK(ms[0].detail.at("offset").get<double>() > 1.75);
    }
}

TEST_CASE("red light crossings") {
    auto l = load("cross_small");
    auto sc = lighted_mission(l);
    World world(sc, l.net, l.g);
    REQUIRE(!world.stop_lines().empty());
    SimLimits limits;

    // stop line governing the mission's approach: nearest to the start
    auto start = l.g.node(sc.mission.path.front()).position;
    const World::StopLine* sl = nullptr;
    double best = 1e18;
    for (const auto& s : world.stop_lines()) {
        double d = distance(s.position, start);
        if (d < best) {
            best = d;
            sl = &s;
        }
    }
    REQUIRE(sl != nullptr);

    auto crossing_at = [&](double t_cross) {
        int tick = static_cast<int>(std::llround(t_cross / kDt));
        Trace t;
        TraceFrame before;
        before.state = world.initial_state();
        before.state.tick = tick - 1;
        before.state.time = (tick - 1) * kDt;
        before.state.ego.pose = {sl->position.x - 1.0 * std::cos(sl->heading),
                                 sl->position.y - 1.0 * std::sin(sl->heading), sl->heading};
        before.state.ego.speed = 5.0;
        TraceFrame after = before;
        after.state.tick = tick;
        after.state.time = tick * kDt;
        after.state.ego.pose.x = sl->position.x + 1.0 * std::cos(sl->heading);
        after.state.ego.pose.y = sl->position.y + 1.0 * std::sin(sl->heading);
        t.frames.push_back(before);
        t.frames.push_back(after);
        return t;
    };

    // pick crossing times that land in Red / Green for this signal id
    double red_time = -1, green_time = -1;
    for (double t = 1.0; t < 30.0; t += 0.5) {
        if (light_phase_at(t, sl->signal_id) == LightPhase::Red && red_time < 0) red_time = t;
        if (light_phase_at(t, sl->signal_id) == LightPhase::Green && green_time < 0) green_time = t;
    }
    REQUIRE(red_time > 0);
    REQUIRE(green_time > 0);

    auto ms = detect_misbehavior(world, crossing_at(red_time), limits);
    bool red_fired = false;
    for (const auto& m : ms) {
        if (m.kind == "RedLight") {
            red_fired = true;
            CHECK(m.detail.at("signal") == sl->signal_id);
        }
    }
    CHECK(red_fired);

    for (const auto& m : detect_misbehavior(world, crossing_at(green_time), limits)) {
        CHECK(m.kind != "RedLight");
    }
}

TEST_CASE("run_scenario") {
    auto l = load("straight_road");
    auto sc = straight_mission(l);
    World world(sc, l.net, l.g);

    SUBCASE("clean mission completes without events") {
        auto agent = make_agent("basic");
        SimLimits limits;
        limits.stuck_timeout = 30.0;
        auto [trace, outcome] = run_scenario(world, *agent, limits, 7);
        CHECK(outcome.kind == OutcomeKind::Completed);
        CHECK(trace.events.empty());
        CHECK(outcome.misbehaviors.empty());
        CHECK(trace.frames.size() > 100);
        // ticks strictly increase
        for (size_t i = 1; i < trace.frames.size(); ++i) {
            CHECK(trace.frames[i].state.tick == trace.frames[i - 1].state.tick + 1);
        }
    }
    SUBCASE("frozen agent goes Stuck at tick 600") {
        FullBrakeAgent agent;
        SimLimits limits;
        limits.stuck_timeout = 30.0;
        limits.horizon = 60.0;
        auto [trace, outcome] = run_scenario(world, agent, limits, 7);
        CHECK(outcome.kind == OutcomeKind::Misbehavior);
        REQUIRE(outcome.misbehaviors.size() == 1);
        CHECK(outcome.misbehaviors[0].kind == "Stuck");
        CHECK(outcome.misbehaviors[0].tick == 600);
        CHECK(trace.frames.back().state.tick == 600);
    }
    SUBCASE("short horizon expires") {
        auto agent = make_agent("basic");
        SimLimits limits;
        limits.horizon = 1.0;
        auto [trace, outcome] = run_scenario(world, *agent, limits, 7);
        CHECK(outcome.kind == OutcomeKind::HorizonExpired);
        CHECK(trace.frames.size() == 21);  // spawn + 20 steps
    }
    SUBCASE("bit-identical determinism") {
        auto a1 = make_agent("basic");
        auto a2 = make_agent("basic");
        SimLimits limits;
        auto [t1, o1] = run_scenario(world, *a1, limits, 99);
        auto [t2, o2] = run_scenario(world, *a2, limits, 99);
        CHECK(o1.kind == o2.kind);
        CHECK(traces_identical(t1, t2));
    }
    SUBCASE("trace file round trip") {
        auto agent = make_agent("basic");
        SimLimits limits;
        auto [t1, o1] = run_scenario(world, *agent, limits, 5);
        std::string path = "/tmp/sf_trace_test.jsonl";
        write_trace(t1, path);
        auto t2 = read_trace(path);
        CHECK(traces_identical(t1, t2));
    }
}

TEST_CASE("driving_score") {
    auto l = load("straight_road");
    auto sc = straight_mission(l);
    World world(sc, l.net, l.g);

    auto frame = [&](int tick, double accel, double steer) {
        TraceFrame f;
        f.state = world.initial_state();
        f.state.tick = tick;
        f.state.time = tick * kDt;
        f.state.ego.accel = accel;
        f.control.steer = steer;
        return f;
    };

    SUBCASE("empty trace throws") {
        Trace t;
        CHECK_THROWS_AS(driving_score(world, t), EmptyTrace);
    }
    SUBCASE("smooth empty-road run scores 100") {
        Trace t;
        for (int i = 0; i < 50; ++i) t.frames.push_back(frame(i, 1.0, 0.05));
        CHECK(driving_score(world, t) == doctest::Approx(100.0));
    }
    SUBCASE("two hard brakes cost 10") {
        Trace t;
        for (int i = 0; i < 10; ++i) t.frames.push_back(frame(i, 0.0, 0.0));
        for (int i = 10; i < 13; ++i) t.frames.push_back(frame(i, -4.0, 0.0));  // one event
        for (int i = 13; i < 20; ++i) t.frames.push_back(frame(i, 0.0, 0.0));
        for (int i = 20; i < 22; ++i) t.frames.push_back(frame(i, -5.0, 0.0));  // second
        CHECK(driving_score(world, t) == doctest::Approx(90.0));
    }
    SUBCASE("steer reversals cost 2 each") {
        Trace t;
        t.frames.push_back(frame(0, 0.0, 0.5));
        t.frames.push_back(frame(1, 0.0, -0.5));
        t.frames.push_back(frame(2, 0.0, 0.5));
        CHECK(driving_score(world, t) == doctest::Approx(100.0 - 4.0));
    }
    SUBCASE("near miss at 1 m clearance scores 60") {
        auto sc_obj = sc;
        int spawn = -1;
        for (const auto& wp : l.g.nodes) {
            if (wp.lane_id == 1 && wp.s > 40) spawn = wp.id;
        }
        REQUIRE(spawn >= 0);
        sc_obj.objects.push_back(immobile_object(spawn));  // sedan, same box as ego
        World w2(sc_obj, l.net, l.g);
        Trace t;
        TraceFrame f;
        f.state = w2.initial_state();
        // parallel boxes with an exact 1 m lateral gap
        f.state.objects[0].pose = f.state.ego.pose;
        f.state.objects[0].pose.y += kEgoWidth + 1.0;
        t.frames.push_back(f);
        CHECK(driving_score(w2, t) == doctest::Approx(60.0));
    }
}
