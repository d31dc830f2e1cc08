#pragma once

#include <array>
#include <optional>

#include "scenariofuzz/corpus.hpp"

namespace sf {

struct WeatherParams {
    double cloud = 0.0;     // [0,100]
    double rain = 0.0;      // [0,100]
    double ponding = 0.0;   // [0,100]
    double wind = 0.0;      // [0,100]
    double fog = 0.0;       // [0,100]
    double wetness = 0.0;   // [0,100]
    double sun_angle = 0.0;     // deg, [0,360)
    double sun_altitude = 45.0; // deg, [-90,90]
};

enum class ObjectKind { Pedestrian, Vehicle };
enum class ActionType { Immobile, Linear, Maneuver, Autopilot };

std::string to_string(ObjectKind k);
std::string to_string(ActionType a);

// 26 appearance styles: ids 0..12 vehicles, 13..25 pedestrians.
struct AppearanceInfo {
    int id;
    const char* name;
    ObjectKind kind;
    double length;  // bounding box, m
    double width;
    double height;
    bool colorable;
};

const std::array<AppearanceInfo, 26>& appearance_table();
const AppearanceInfo& appearance(int id);

struct ManeuverSegment {
    Direction kind = Direction::Straight;
    double nominal_angle_deg = 0.0;  // heading change across the segment
    double angle_offset_deg = 0.0;   // perturbation in [-20, 20]
    double speed = 5.0;              // m/s
    double length = 0.0;             // m
};

struct ObjectSpec {
    ObjectKind kind = ObjectKind::Vehicle;
    int appearance_id = 0;
    std::optional<std::array<int, 3>> color;  // vehicles only
    ActionType action = ActionType::Immobile;
    double speed = 0.0;                    // Linear / Autopilot cruise cap
    std::vector<ManeuverSegment> segments; // Maneuver
    std::vector<int> path;                 // waypoint ids (crossing: exactly 2)
    bool crossing = false;                 // pedestrian road-crossing segment
    int spawn_waypoint = -1;
};

struct PuddleSpec {
    int center_waypoint = -1;
    double radius = 1.0;    // [0.5, 3.0]
    double friction = 1.0;  // [0.1, 1.0], 1.0 = dry
};

struct EgoMission {
    int start_waypoint = -1;
    std::vector<int> path;
    Direction direction = Direction::Unknown;
};

// One mutable attribute with its sampling metadata; the flat list of these is
// the scenario's attribute vector.
struct AttributeValue {
    std::string name;
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double step = 1.0;
    bool discrete = false;
};

struct ConcreteScenario {
    int source_seed_id = -1;
    std::string map_name;
    EgoMission mission;
    std::vector<ObjectSpec> objects;
    std::vector<PuddleSpec> puddles;
    WeatherParams weather;
    std::vector<AttributeValue> attributes;
};

struct AttrMeta {
    std::string name;
    bool discrete = false;
    double lo = 0.0;
    double hi = 1.0;
    double step = 1.0;  // continuous precision; discrete step is one position
    int n_choices = 0;  // discrete only
};

enum class SampleMode { Random, Neighbor };

struct MutationParams {
    int max_objects = 8;
    int max_puddles = 5;
    double weather_step = 1.0;
    double angle_step = 1.0;
    double speed_step = 0.1;
    double friction_step = 0.01;
    double radius_step = 0.1;
    std::optional<Direction> mission_direction;  // filter ego paths
};

struct SeedHasNoPaths : Error {
    using Error::Error;
};

// Random: uniform over the range / choice set. Neighbor: uniform within +-5
// steps of `current`, clipped to the range.
double sample_attribute(const AttrMeta& meta, SampleMode mode, double current,
                        Rng& rng);

// Split a polyline into max(1, floor(L/8)) segments, classify each by heading
// change (+-5 deg thresholds) and draw per-segment angle/speed perturbations.
std::vector<ManeuverSegment> segment_maneuver_path(const std::vector<Vec3>& points,
                                                   Rng& rng,
                                                   const MutationParams& params);

ConcreteScenario mutate_scenario(const ScenarioSeed& seed, const TopologyGraph& g,
                                 SampleMode strategy,
                                 const ConcreteScenario* reference,
                                 const MutationParams& params, Rng& rng);

Json scenario_to_json(const ConcreteScenario& sc);
ConcreteScenario scenario_from_json(const Json& j);
std::uint64_t scenario_hash(const ConcreteScenario& sc);
std::string attributes_to_csv(const ConcreteScenario& sc);

}  // namespace sf
