#pragma once

#include "scenariofuzz/mutation.hpp"

namespace sf {

constexpr double kDt = 0.05;           // s
constexpr double kWheelbase = 2.7;     // m
constexpr double kMaxSteerRad = 0.6;   // ~34 deg at steer = +-1
constexpr double kEgoLength = 4.7;     // sedan-sized ego box
constexpr double kEgoWidth = 1.8;

enum class LightPhase { Red, Yellow, Green };
std::string to_string(LightPhase p);

// fixed 30 s schedule: Green [0,12), Yellow [12,15), Red [15,30); odd signal
// ids run 15 s out of phase
LightPhase light_phase_at(double time, int signal_id);

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

struct EgoState {
    Pose pose;
    double speed = 0.0;
    double accel = 0.0;
};

struct ObjectState {
    Pose pose;
    double speed = 0.0;
    double progress = 0.0;  // arc length along the plan, m
    bool done = false;
};

struct WorldState {
    int tick = 0;
    double time = 0.0;
    EgoState ego;
    std::vector<ObjectState> objects;
    std::vector<LightPhase> lights;  // parallel to World::light_ids
};

struct AgentControl {
    double throttle = 0.0;  // [0,1]
    double brake = 0.0;     // [0,1]
    double steer = 0.0;     // [-1,1]
};

// oriented bounding box, center + heading + half extents
struct Obb {
    double cx = 0.0, cy = 0.0, heading = 0.0;
    double half_len = 1.0, half_wid = 0.5;
};

bool obb_overlap(const Obb& a, const Obb& b);       // exact SAT
double obb_distance(const Obb& a, const Obb& b);    // 0 when overlapping

struct Misbehavior {
    std::string kind;  // Crash | RedLight | Speeding | LaneInvasion | Stuck
    int tick = 0;
    Json detail;
};

struct TraceEvent {
    std::string kind;  // collision | light_crossing | lane_crossing | speed_exceedance
    int tick = 0;
    Json detail;
};

struct TraceFrame {
    WorldState state;
    AgentControl control;
};

struct Trace {
    std::vector<TraceFrame> frames;
    std::vector<TraceEvent> events;
    std::uint64_t rng_seed = 0;
    std::uint64_t scenario_hash = 0;
};

Json frame_to_json(const TraceFrame& f);
TraceFrame frame_from_json(const Json& j);
Json trace_events_to_json(const Trace& t);

// JSONL frames + sidecar event file <path>.events.json
void write_trace(const Trace& t, const std::string& path);
Trace read_trace(const std::string& path);
// explicit paths (error-library layout uses trace.jsonl + events.json)
void write_trace_files(const Trace& t, const std::string& frames_path,
                       const std::string& events_path);
Trace read_trace_files(const std::string& frames_path, const std::string& events_path);
bool traces_identical(const Trace& a, const Trace& b);  // bit-identical frames

struct SimLimits {
    double horizon = 60.0;        // s
    double stuck_timeout = 300.0; // s (campaign default; tests override)
};

struct SpawnCollision : Error {
    using Error::Error;
};
struct EmptyTrace : Error {
    using Error::Error;
};

// Static per-run context: the scenario bound to its map, with per-entity
// plans, stop lines, and puddles resolved to inertial coordinates.
class World {
public:
    World(const ConcreteScenario& sc, const RoadNetwork& net, const TopologyGraph& g);

    WorldState initial_state() const;  // instantiate_scenario
    void step(WorldState& ws, const AgentControl& control) const;

    const ConcreteScenario& scenario() const { return *sc_; }
    const RoadNetwork& network() const { return *net_; }
    const TopologyGraph& graph() const { return *g_; }

    const std::vector<Vec3>& mission_points() const { return mission_pts_; }
    const std::vector<int>& light_ids() const { return light_ids_; }

    double friction_at(double x, double y) const;  // min puddle friction, 1 = dry
    double speed_limit_at(double x, double y) const;
    double mission_lane_half_width() const { return lane_half_width_; }

    // perpendicular distance from the mission polyline
    double mission_offset(double x, double y) const;

    Obb ego_box(const EgoState& e) const;
    Obb object_box(int index, const ObjectState& os) const;

    struct StopLine {
        int signal_id = 0;
        Vec3 position;
        double heading = 0.0;
    };
    const std::vector<StopLine>& stop_lines() const { return stop_lines_; }

    struct Plan {
        std::vector<Vec3> points;
        std::vector<double> cum;  // cumulative arc length
        double length = 0.0;
    };
    const Plan& object_plan(int index) const { return plans_.at(static_cast<size_t>(index)); }

private:
    const ConcreteScenario* sc_;
    const RoadNetwork* net_;
    const TopologyGraph* g_;
    std::vector<Vec3> mission_pts_;
    std::vector<double> mission_cum_;
    std::vector<Plan> plans_;     // per object (empty for immobile)
    std::vector<int> light_ids_;
    std::vector<StopLine> stop_lines_;
    double lane_half_width_ = 1.75;

    void advance_object(int index, ObjectState& os, const WorldState& ws) const;
};

WorldState instantiate_scenario(const ConcreteScenario& sc, const RoadNetwork& net,
                                const TopologyGraph& g);

Json world_state_to_json(const WorldState& ws);

class Agent;  // agents.hpp

enum class OutcomeKind { Misbehavior, Completed, HorizonExpired, AgentFault };
std::string to_string(OutcomeKind k);

struct Outcome {
    OutcomeKind kind = OutcomeKind::HorizonExpired;
    std::vector<Misbehavior> misbehaviors;
    std::string fault_message;
};

std::pair<Trace, Outcome> run_scenario(const World& world, Agent& agent,
                                       const SimLimits& limits,
                                       std::uint64_t rng_seed = 0);

// Incremental misbehavior detectors; run_scenario feeds frames live and
// detect_misbehavior replays a recorded trace through the same rules.
class DetectorBank {
public:
    DetectorBank(const World& world, const SimLimits& limits);

    // feed one post-step frame; fired misbehaviors come back, side events are
    // appended to `events`
    std::vector<Misbehavior> observe(const TraceFrame& f, std::vector<TraceEvent>& events);

private:
    const World* world_;
    SimLimits limits_;
    std::vector<double> prev_stop_lon_;  // per stop line
    int speeding_run_ = 0;
    bool speeding_fired_ = false;
    bool speeding_event_open_ = false;
    int stuck_run_ = 0;
    bool lane_fired_ = false;
};

// Offline detector sweep over a recorded trace (same rules the live run uses).
std::vector<Misbehavior> detect_misbehavior(const World& world, const Trace& trace,
                                            const SimLimits& limits);

double driving_score(const World& world, const Trace& trace);

}  // namespace sf
