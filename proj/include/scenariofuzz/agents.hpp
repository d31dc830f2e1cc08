#pragma once

#include <memory>

#include "scenariofuzz/sim.hpp"

namespace sf {

struct DetectedObject {
    int index = -1;
    Vec3 position;
    double heading = 0.0;
    double speed = 0.0;
    ObjectKind kind = ObjectKind::Vehicle;
    int appearance_id = 0;
    std::optional<std::array<int, 3>> color;
    double height = 0.0;
};

struct AgentObservation {
    Pose ego;
    double speed = 0.0;
    std::vector<Vec3> path_remaining;  // next mission points, nearest first
    std::vector<DetectedObject> objects;
    std::optional<LightPhase> light;   // governing light ahead, if any
    double light_distance = 1e9;       // m to its stop line
    double speed_limit = 13.89;
    bool near_junction = false;
};

// Ground-truth perception filter; the flaws mirror the reported bug cases.
struct PerceptionModel {
    double range = 60.0;
    double height_cutoff = 0.0;    // objects strictly shorter go unseen
    bool red_blindspot = false;    // red-painted vehicles go unseen
    bool weather_degraded = false; // range scaled by fog/rain
    bool lateral_yield = true;     // yield to cross traffic at junctions
};

struct AgentFault : Error {
    using Error::Error;
};

class Agent {
public:
    virtual ~Agent() = default;
    virtual std::string name() const = 0;
    virtual std::string spec() const { return name(); }  // full make_agent string
    virtual const PerceptionModel& perception() const = 0;
    virtual AgentControl act(const AgentObservation& obs) = 0;
};

// "basic" (sound pure-pursuit follower) or "weak" (basic plus perception
// flaws). "weak:height=1.0,red=1,weather=1,yield=0" tunes individual flaws.
std::unique_ptr<Agent> make_agent(const std::string& spec);

// Observation assembly used by run_scenario (exposed for tests).
AgentObservation build_observation(const World& world, const WorldState& ws,
                                   const PerceptionModel& pm);

}  // namespace sf
