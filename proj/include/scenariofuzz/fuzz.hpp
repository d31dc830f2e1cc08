#pragma once

#include <deque>
#include <map>
#include <memory>

#include "scenariofuzz/agents.hpp"
#include "scenariofuzz/sem.hpp"

namespace sf {

// Ablation axes: Random mutation / two-stage mutation, with or without the
// scenario evaluation model gating execution.
enum class StrategyMode { RMS, TwoSMS, RmsSem, TwoSmsSem };

StrategyMode strategy_from_string(const std::string& s);
std::string to_string(StrategyMode m);
bool strategy_uses_sem(StrategyMode m);
bool strategy_two_stage(StrategyMode m);

struct InvalidConfig : Error {
    using Error::Error;
};

struct FuzzConfig {
    StrategyMode strategy = StrategyMode::TwoSmsSem;
    int n_c = 3;     // mutation cycles per seed
    int n_m = -1;    // mutants per cycle; -1 = 100 with SEM, 3 without
    int n_e = 3;     // executed per cycle (SEM-filtered)
    int tr = 1000;   // retrain whenever |T| crosses a multiple of this
    SeedFilter filter;
    std::uint64_t rng_seed = 0;
    SimLimits limits;
    MutationParams mutation;
    SemConfig sem;
    int sem_epochs = 200;
    bool load_history = false;  // start T from the state dir's records.jsonl

    int resolved_n_m() const;
    void validate() const;  // throws InvalidConfig

    Json to_json() const;
    static FuzzConfig from_json(const Json& j);
};

// Roulette re-queueing: keep with probability 1 / (1 + frequency).
bool check_frequency(int frequency, Rng& rng);

struct ExecutionRecord {
    int execution = 0;  // 0-based campaign-wide ordinal
    int seed_id = 0;
    std::uint64_t selection = 0;  // which seed selection this belongs to
    int cycle = 0;                // 1-based
    std::string mode;             // Random | Neighbor
    std::uint64_t scenario = 0;   // scenario_hash
    std::string outcome;          // OutcomeKind or SpawnCollision
    std::vector<std::string> misbehaviors;
    std::optional<double> score;  // clean runs only
    double seconds = 0.0;

    Json to_json() const;
};

struct ErrorScenario {
    int id = 0;
    ConcreteScenario scenario;
    Outcome outcome;
    Trace trace;
    std::string agent;  // full make_agent spec
    SimLimits limits;   // populated on load
    std::uint64_t rng_seed = 0;  // authoritative replay seed (scenario.json)
};

// Journaled campaign persistence. Layout under root:
//   corpus/corpus.json  records.jsonl  errors/<id>/{scenario.json,trace.jsonl,
//   events.json}  sem/<epoch>.ckpt  report.json
// A default-constructed StateDir keeps everything in memory.
class StateDir {
public:
    StateDir() = default;
    explicit StateDir(std::string root);  // creates the layout

    bool enabled() const { return !root_.empty(); }
    const std::string& root() const { return root_; }

    void save_corpus(const SeedCorpus& corpus) const;
    std::optional<SeedCorpus> load_corpus() const;

    void append_record(const TestRecord& r) const;  // flushed before returning
    std::vector<TestRecord> load_records() const;   // tolerates a torn tail line

    void save_error(const ErrorScenario& e, const SimLimits& limits) const;
    std::vector<int> list_errors() const;  // sorted ids
    std::string error_dir(int id) const;
    ErrorScenario load_error(int id) const;  // throws MissingArtifacts

    void save_sem(int epoch, const Json& checkpoint) const;
    void save_report(const Json& report) const;

private:
    std::string root_;
};

struct MissingArtifacts : Error {
    using Error::Error;
};

struct CampaignContext {
    const SeedCorpus* corpus = nullptr;
    const RoadNetwork* net = nullptr;
    const TopologyGraph* g = nullptr;
};

struct CampaignState {
    std::deque<int> queue;            // seed ids
    std::map<int, int> frequency;     // selections per seed
    std::vector<TestRecord> history;  // T
    std::vector<int> error_ids;       // S_error
    std::unique_ptr<SemModel> sem;    // snapshot visible to filtering
    std::unique_ptr<SemModel> pending_sem;  // swapped in at cycle boundaries
    int pending_epoch = -1;
    int next_error_id = 0;
    int executions = 0;
};

struct CampaignReport {
    int executions = 0;
    int n_errors = 0;
    std::map<std::string, int> errors_by_kind;  // every fired kind counted once
    double total_seconds = 0.0;
    std::vector<ExecutionRecord> timeline;

    Json to_json() const;
    // timing stripped; equal across reruns with the same config + rng seed
    Json deterministic_summary() const;
};

// Campaign bookkeeping for one executed scenario: journal first, then
// update T (and S_error on a misbehaving outcome).
void record_test(CampaignState& state, const StateDir& dir, const FuzzConfig& cfg,
                 const ConcreteScenario& sc, const Outcome& outcome,
                 const Trace& trace, const std::string& agent_name,
                 std::optional<double> score = std::nullopt);

// Per-seed fuzzing loop: N_c cycles of mutate -> filter -> execute;
// returns the first error scenario found, if any. `stream` disambiguates
// repeated selections of the same seed.
std::optional<ConcreteScenario> fuzz_one_seed(
    const ScenarioSeed& seed, const FuzzConfig& cfg, const CampaignContext& ctx,
    Agent& agent, CampaignState& state, const StateDir& dir,
    CampaignReport& report, int budget, std::uint64_t stream);

CampaignReport run_campaign(const FuzzConfig& cfg, const CampaignContext& ctx,
                            Agent& agent, int budget, const StateDir& dir);
CampaignReport run_campaign(const FuzzConfig& cfg, const CampaignContext& ctx,
                            Agent& agent, int budget);

}  // namespace sf
