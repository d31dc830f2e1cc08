#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "scenariofuzz/analysis.hpp"
#include "scenariofuzz/config.hpp"

namespace py = pybind11;
using namespace sf;

namespace {

// JSON strings keep the boundary thin; Python side parses with json.loads
std::string dumps(const Json& j) { return j.dump(); }

class Engine {
public:
    explicit Engine(const std::string& map_path, double spacing = 5.0) {
        net_ = load_opendrive_file(map_path);
        g_ = build_topology(net_, spacing);
        std::string name = map_path;
        auto slash = name.find_last_of('/');
        if (slash != std::string::npos) name = name.substr(slash + 1);
        auto dot = name.rfind(".xodr");
        if (dot != std::string::npos) name = name.substr(0, dot);
        CorpusParams params;
        params.spacing = spacing;
        corpus_ = build_corpus(net_, g_, params, name);
    }

    int n_seeds() const { return static_cast<int>(corpus_.seeds.size()); }
    std::string map_name() const { return corpus_.map_name; }
    std::string corpus_json() const { return dumps(corpus_to_json(corpus_)); }

    std::string mutate(int seed_id, const std::string& strategy,
                       const std::string& reference_json, std::uint64_t rng_seed) const {
        SampleMode mode;
        if (strategy == "random") {
            mode = SampleMode::Random;
        } else if (strategy == "neighbor") {
            mode = SampleMode::Neighbor;
        } else {
            throw Error("strategy must be 'random' or 'neighbor'");
        }
        std::optional<ConcreteScenario> ref;
        if (!reference_json.empty()) {
            ref = scenario_from_json(Json::parse(reference_json));
        }
        Rng rng(rng_seed);
        auto sc = mutate_scenario(corpus_.seed_by_id(seed_id), g_, mode,
                                  ref ? &*ref : nullptr, MutationParams{}, rng);
        return dumps(scenario_to_json(sc));
    }

    std::string run(const std::string& scenario_json, const std::string& agent_spec,
                    double horizon, double stuck_timeout, std::uint64_t rng_seed) const {
        auto sc = scenario_from_json(Json::parse(scenario_json));
        World world(sc, net_, g_);
        auto agent = make_agent(agent_spec);
        SimLimits limits;
        limits.horizon = horizon;
        limits.stuck_timeout = stuck_timeout;
        try {
            world.initial_state();
        } catch (const SpawnCollision& e) {
            // mirror the campaign loop: invalid placements are an outcome,
            // not a fault
            Json j;
            j["outcome"] = "SpawnCollision";
            j["detail"] = e.what();
            j["misbehaviors"] = Json::array();
            j["n_frames"] = 0;
            j["events"] = 0;
            return dumps(j);
        }
        auto [trace, outcome] = run_scenario(world, *agent, limits, rng_seed);
        Json j;
        j["outcome"] = to_string(outcome.kind);
        Json ms = Json::array();
        for (const auto& m : outcome.misbehaviors) {
            ms.push_back({{"kind", m.kind}, {"tick", m.tick}});
        }
        j["misbehaviors"] = std::move(ms);
        j["n_frames"] = trace.frames.size();
        j["events"] = trace.events.size();
        if (outcome.kind == OutcomeKind::Completed ||
            outcome.kind == OutcomeKind::HorizonExpired) {
            j["driving_score"] = driving_score(world, trace);
        }
        return dumps(j);
    }

    std::string campaign(const std::string& config_text, const std::string& agent_spec,
                         int budget, const std::string& state_dir) const {
        auto cfg = parse_fuzz_config(config_text);
        auto agent = make_agent(agent_spec);
        CampaignContext ctx{&corpus_, &net_, &g_};
        StateDir dir = state_dir.empty() ? StateDir() : StateDir(state_dir);
        auto report = run_campaign(cfg, ctx, *agent, budget, dir);
        return dumps(report.to_json());
    }

    std::string replay(const std::string& state_dir, int id) const {
        StateDir dir(state_dir);
        CampaignContext ctx{&corpus_, &net_, &g_};
        return dumps(replay_error(dir, id, ctx).to_json());
    }

private:
    RoadNetwork net_;
    TopologyGraph g_;
    SeedCorpus corpus_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "scenario-based fuzzing engine for driving agents";

    py::register_exception<Error>(m, "ScenarioFuzzError");

    py::class_<Engine>(m, "Engine")
        .def(py::init<const std::string&, double>(), py::arg("map_path"),
             py::arg("spacing") = 5.0)
        .def_property_readonly("n_seeds", &Engine::n_seeds)
        .def_property_readonly("map_name", &Engine::map_name)
        .def("corpus_json", &Engine::corpus_json)
        .def("mutate", &Engine::mutate, py::arg("seed_id"), py::arg("strategy"),
             py::arg("reference_json") = std::string(), py::arg("rng_seed") = 0)
        .def("run", &Engine::run, py::arg("scenario_json"), py::arg("agent") = "basic",
             py::arg("horizon") = 60.0, py::arg("stuck_timeout") = 300.0,
             py::arg("rng_seed") = 0)
        .def("campaign", &Engine::campaign, py::arg("config_text"),
             py::arg("agent") = "basic", py::arg("budget") = 10,
             py::arg("state_dir") = std::string())
        .def("replay", &Engine::replay, py::arg("state_dir"), py::arg("id"));

    m.def(
        "light_phase",
        [](double time, int signal_id) {
            return to_string(light_phase_at(time, signal_id));
        },
        py::arg("time"), py::arg("signal_id"));
    m.def(
        "scenario_hash",
        [](const std::string& scenario_json) {
            return scenario_hash(scenario_from_json(Json::parse(scenario_json)));
        },
        py::arg("scenario_json"));
}
