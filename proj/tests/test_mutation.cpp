#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "scenariofuzz/mutation.hpp"

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

const ScenarioSeed& lighted_seed(const SeedCorpus& c) {
    for (const auto& s : c.seeds) {
        if (!s.traffic_lights.empty()) return s;
    }
    throw Error("no lighted seed");
}

// One-sample Kolmogorov-Smirnov p-value against U(lo,hi), asymptotic form.
double ks_uniform_p(std::vector<double> xs, double lo, double hi) {
    std::sort(xs.begin(), xs.end());
    double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double cdf = (xs[i] - lo) / (hi - lo);
        d = std::max(d, std::abs(cdf - (i + 1) / n));
        d = std::max(d, std::abs(cdf - i / n));
    }
    double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    }
    return std::clamp(p, 0.0, 1.0);
}

double attr(const ConcreteScenario& sc, const std::string& name) {
    for (const auto& a : sc.attributes) {
        if (a.name == name) return a.value;
    }
    throw Error("attribute not found: " + name);
}

}  // namespace

TEST_CASE("appearance table") {
    const auto& t = appearance_table();
    int vehicles = 0, pedestrians = 0;
    for (int i = 0; i < 26; ++i) {
        CHECK(t[static_cast<size_t>(i)].id == i);
        (t[static_cast<size_t>(i)].kind == ObjectKind::Vehicle ? vehicles : pedestrians)++;
    }
    CHECK(vehicles == 13);
    CHECK(pedestrians == 13);
    for (int i = 0; i < 13; ++i) CHECK(appearance(i).kind == ObjectKind::Vehicle);
    for (int i = 13; i < 26; ++i) CHECK(appearance(i).kind == ObjectKind::Pedestrian);
    // low-height actors exist
    bool h09 = false, h04 = false;
    for (const auto& a : t) {
        if (a.kind == ObjectKind::Pedestrian && a.height == 0.9) h09 = true;
        if (a.kind == ObjectKind::Pedestrian && a.height == 0.4) h04 = true;
    }
    CHECK(h09);
    CHECK(h04);
    CHECK_THROWS_AS(appearance(26), Error);
    CHECK_THROWS_AS(appearance(-1), Error);
}

TEST_CASE("sample_attribute") {
    SUBCASE("discrete A..Z, Neighbor around M stays in H..R") {
        AttrMeta m{"letter", true, 0, 25, 1, 26};
        Rng rng(7);
        std::set<int> seen;
        for (int i = 0; i < 10000; ++i) {
            int v = static_cast<int>(sample_attribute(m, SampleMode::Neighbor, 12, rng));
            CHECK(v >= 7);   // 'H'
            CHECK(v <= 17);  // 'R'
            seen.insert(v);
        }
        CHECK(seen.size() == 11);
    }
    SUBCASE("continuous fog Neighbor current=2 clips to [0,7]") {
        AttrMeta m{"fog", false, 0, 100, 1, 0};
        Rng rng(7);
        double lo = 1e9, hi = -1e9;
        for (int i = 0; i < 10000; ++i) {
            double v = sample_attribute(m, SampleMode::Neighbor, 2, rng);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo >= 0.0);
        CHECK(hi <= 7.0);
        CHECK(hi > 6.5);  // the whole clipped interval is reachable
        CHECK(lo < 0.5);
    }
    SUBCASE("Random speed draws are uniform on [3,10]") {
        AttrMeta m{"speed", false, 3, 10, 0.1, 0};
        Rng rng(11);
        std::vector<double> xs;
        for (int i = 0; i < 10000; ++i) {
            xs.push_back(sample_attribute(m, SampleMode::Random, 0, rng));
        }
        auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
        CHECK(*mn >= 3.0);
        CHECK(*mx <= 10.0);
        CHECK(ks_uniform_p(xs, 3.0, 10.0) > 0.01);
    }
    SUBCASE("discrete Random covers all choices") {
        AttrMeta m{"c", true, 0, 3, 1, 4};
        Rng rng(3);
        std::set<int> seen;
        for (int i = 0; i < 1000; ++i) {
            seen.insert(static_cast<int>(sample_attribute(m, SampleMode::Random, 0, rng)));
        }
        CHECK(seen == std::set<int>{0, 1, 2, 3});
    }
}

TEST_CASE("segment_maneuver_path") {
    MutationParams params;
    SUBCASE("25 m straight line -> 3 Straight segments") {
        std::vector<Vec3> pts;
        for (int i = 0; i <= 25; ++i) pts.push_back({static_cast<double>(i), 0, 0});
        Rng rng(1);
        auto segs = segment_maneuver_path(pts, rng, params);
        REQUIRE(segs.size() == 3);
        for (const auto& s : segs) {
            CHECK(s.kind == Direction::Straight);
            CHECK(s.nominal_angle_deg == doctest::Approx(0.0).epsilon(1e-9));
            CHECK(std::abs(s.angle_offset_deg) <= 20.0);
            CHECK(s.speed >= 3.0);
            CHECK(s.speed <= 10.0);
        }
        double total = 0;
        for (const auto& s : segs) total += s.length;
        CHECK(total == doctest::Approx(25.0));
    }
    SUBCASE("short path -> single segment") {
        Rng rng(1);
        auto segs = segment_maneuver_path({{0, 0, 0}, {5, 0, 0}}, rng, params);
        CHECK(segs.size() == 1);
    }
    SUBCASE("quarter arc turns left") {
        // radius 16 quarter circle: length 8*pi ~ 25.13 m -> 3 segments of ~30
        // degrees heading change each
        std::vector<Vec3> pts;
        for (int i = 0; i <= 60; ++i) {
            double a = (M_PI / 2.0) * i / 60.0;
            pts.push_back({16.0 * std::sin(a), 16.0 * (1.0 - std::cos(a)), 0});
        }
        Rng rng(1);
        auto segs = segment_maneuver_path(pts, rng, params);
        REQUIRE(segs.size() == 3);
        int lefts = 0;
        for (const auto& s : segs) {
            if (s.kind == Direction::Left) ++lefts;
        }
        CHECK(lefts >= 1);
        CHECK(lefts == 3);  // uniform curvature: every segment turns ~30 deg
    }
}

TEST_CASE("mutate_scenario basics") {
    auto l = load("cross_small");
    const auto& seed = lighted_seed(l.corpus);
    MutationParams params;

    SUBCASE("single-path seed forces the mission") {
        ScenarioSeed one = seed;
        one.paths.resize(1);
        Rng rng(5);
        auto sc = mutate_scenario(one, l.g, SampleMode::Random, nullptr, params, rng);
        CHECK(sc.mission.path == one.paths[0].waypoints);
        CHECK(sc.mission.direction == one.paths[0].direction);
        CHECK(sc.mission.start_waypoint == one.paths[0].waypoints.front());
    }
    SUBCASE("seed without paths throws") {
        ScenarioSeed empty = seed;
        empty.paths.clear();
        Rng rng(5);
        CHECK_THROWS_AS(
            mutate_scenario(empty, l.g, SampleMode::Random, nullptr, params, rng),
            SeedHasNoPaths);
    }
    SUBCASE("Neighbor without reference throws") {
        Rng rng(5);
        CHECK_THROWS_AS(
            mutate_scenario(seed, l.g, SampleMode::Neighbor, nullptr, params, rng),
            Error);
    }
    SUBCASE("mission direction filter") {
        params.mission_direction = Direction::Left;
        Rng rng(5);
        for (int i = 0; i < 50; ++i) {
            auto sc = mutate_scenario(seed, l.g, SampleMode::Random, nullptr, params, rng);
            CHECK(sc.mission.direction == Direction::Left);
        }
    }
    SUBCASE("reproducibility") {
        Rng a(99), b(99);
        auto s1 = mutate_scenario(seed, l.g, SampleMode::Random, nullptr, params, a);
        auto s2 = mutate_scenario(seed, l.g, SampleMode::Random, nullptr, params, b);
        CHECK(scenario_to_json(s1) == scenario_to_json(s2));
        CHECK(scenario_hash(s1) == scenario_hash(s2));
    }
}

TEST_CASE("Random mutants respect placement validity") {
    auto l = load("cross_small");
    const auto& seed = lighted_seed(l.corpus);
    std::set<int> members(seed.waypoints.begin(), seed.waypoints.end());
    std::set<std::vector<int>> corpus_paths;
    for (const auto& p : seed.paths) corpus_paths.insert(p.waypoints);

    MutationParams params;
    Rng root(2024);
    for (int i = 0; i < 1000; ++i) {
        Rng rng = root.derive(static_cast<std::uint64_t>(i));
        auto sc = mutate_scenario(seed, l.g, SampleMode::Random, nullptr, params, rng);

        CHECK(corpus_paths.count(sc.mission.path) == 1);
        CHECK(static_cast<int>(sc.objects.size()) <= params.max_objects);
        CHECK(static_cast<int>(sc.puddles.size()) <= params.max_puddles);

        std::set<int> spawns = {sc.mission.start_waypoint};
        for (const auto& ob : sc.objects) {
            CHECK(members.count(ob.spawn_waypoint) == 1);
            CHECK(spawns.count(ob.spawn_waypoint) == 0);  // no shared spawns
            spawns.insert(ob.spawn_waypoint);
            if (ob.crossing) {
                REQUIRE(ob.path.size() == 2);
                CHECK(ob.kind == ObjectKind::Pedestrian);
                CHECK(members.count(ob.path[0]) == 1);
                CHECK(members.count(ob.path[1]) == 1);
                const auto& a = l.g.node(ob.path[0]);
                const auto& b = l.g.node(ob.path[1]);
                CHECK(a.road_id == b.road_id);
                CHECK((a.lane_id < 0) != (b.lane_id < 0));
            } else if (!ob.path.empty()) {
                CHECK(ob.kind == ObjectKind::Vehicle);
                CHECK(corpus_paths.count(ob.path) == 1);
                CHECK(ob.path.front() == ob.spawn_waypoint);
            }
            if (ob.kind == ObjectKind::Pedestrian) {
                CHECK(ob.appearance_id >= 13);
                CHECK(!ob.color.has_value());
                if (ob.action == ActionType::Linear) {
                    CHECK(ob.speed >= 1.0);
                    CHECK(ob.speed <= 4.0);
                }
            } else {
                CHECK(ob.appearance_id <= 12);
                if (ob.action == ActionType::Linear || ob.action == ActionType::Autopilot) {
                    CHECK(ob.speed >= 3.0);
                    CHECK(ob.speed <= 10.0);
                }
            }
            if (ob.action == ActionType::Maneuver) {
                double len = 0;
                for (size_t k = 0; k + 1 < ob.path.size(); ++k) {
                    len += distance2d(l.g.node(ob.path[k]).position,
                                      l.g.node(ob.path[k + 1]).position);
                }
                int expect = len >= 8.0 ? static_cast<int>(std::floor(len / 8.0)) : 1;
                CHECK(static_cast<int>(ob.segments.size()) == expect);
                for (const auto& s : ob.segments) {
                    CHECK(s.speed >= 3.0);
                    CHECK(s.speed <= 10.0);
                    CHECK(std::abs(s.angle_offset_deg) <= 20.0);
                }
            }
        }
        for (const auto& pd : sc.puddles) {
            CHECK(members.count(pd.center_waypoint) == 1);
            CHECK(pd.radius >= 0.5);
            CHECK(pd.radius <= 3.0);
            CHECK(pd.friction >= 0.1);
            CHECK(pd.friction <= 1.0);
        }
        CHECK(sc.weather.fog >= 0.0);
        CHECK(sc.weather.fog <= 100.0);
        CHECK(sc.weather.sun_altitude >= -90.0);
        CHECK(sc.weather.sun_altitude <= 90.0);
    }
}

TEST_CASE("Neighbor locality") {
    auto l = load("cross_small");
    const auto& seed = lighted_seed(l.corpus);
    MutationParams params;

    Rng rng(31);
    auto ref = mutate_scenario(seed, l.g, SampleMode::Random, nullptr, params, rng);
    // pin fog to 50 for the documented example
    for (auto& a : ref.attributes) {
        if (a.name == "weather.fog") a.value = 50.0;
    }
    ref.weather.fog = 50.0;

    std::map<std::string, AttributeValue> ref_attrs;
    for (const auto& a : ref.attributes) ref_attrs[a.name] = a;

    for (int i = 0; i < 200; ++i) {
        Rng r = rng.derive(static_cast<std::uint64_t>(i));
        auto sc = mutate_scenario(seed, l.g, SampleMode::Neighbor, &ref, params, r);
        CHECK(sc.weather.fog >= 45.0);
        CHECK(sc.weather.fog <= 55.0);
        CHECK(attr(sc, "weather.fog") == sc.weather.fog);
        for (const auto& a : sc.attributes) {
            auto it = ref_attrs.find(a.name);
            if (it == ref_attrs.end()) continue;  // attribute new in this mutant
            CAPTURE(a.name);
            CHECK(std::abs(a.value - it->second.value) <= 5.0 * a.step + 1e-12);
        }
    }
}

TEST_CASE("scenario JSON round trip and CSV") {
    auto l = load("mini_town");
    const ScenarioSeed* seed = nullptr;
    for (const auto& s : l.corpus.seeds) {
        if (!s.paths.empty()) seed = &s;
    }
    REQUIRE(seed != nullptr);
    Rng rng(8);
    MutationParams params;
    auto sc = mutate_scenario(*seed, l.g, SampleMode::Random, nullptr, params, rng);

    auto j = scenario_to_json(sc);
    auto sc2 = scenario_from_json(j);
    CHECK(scenario_to_json(sc2) == j);
    CHECK(scenario_hash(sc2) == scenario_hash(sc));

    auto csv = attributes_to_csv(sc);
    CHECK(csv.rfind("name,value,lo,hi,step,discrete\n", 0) == 0);
    size_t lines = std::count(csv.begin(), csv.end(), '\n');
    CHECK(lines == sc.attributes.size() + 1);

    Json bad = j;
    bad["schema"] = "nope";
    CHECK_THROWS_AS(scenario_from_json(bad), Error);
}
