#pragma once

#include "scenariofuzz/sem_model.hpp"

namespace sf {

struct TestRecord {
    ConcreteScenario scenario;
    bool label = false;  // true = misbehavior observed
    std::string system_id;
    std::optional<double> driving_score;
};

Json record_to_json(const TestRecord& r);
TestRecord record_from_json(const Json& j);

std::vector<ScenarioGraph> records_to_graphs(const std::vector<TestRecord>& records,
                                             const SeedCorpus& corpus,
                                             const RoadNetwork& net,
                                             const TopologyGraph& g);

struct SemMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double loss = 0.0;
    double brier = 0.0;
    double pearson = 0.0;
    bool degenerate_labels = false;  // single-class: recall/pearson flagged

    Json to_json() const;
};

struct TrainResult {
    SemMetrics validation;
    std::vector<double> train_loss;  // per epoch
    int n_train = 0;
    int n_val = 0;
    bool degenerate_labels = false;
};

struct DegenerateLabels : Error {
    using Error::Error;
};

// Full-batch Adam over binary cross-entropy; 80/20 train/validation split is
// deterministic by scenario hash (hash % 5 == 0 -> validation).
TrainResult train_sem(SemModel& model, const std::vector<ScenarioGraph>& graphs,
                      const std::vector<bool>& labels, int epochs, Rng& rng);

SemMetrics evaluate_metrics(SemModel& model, const std::vector<ScenarioGraph>& graphs,
                            const std::vector<bool>& labels);

// metric arithmetic on raw confidences (also used by evaluate_metrics)
SemMetrics metrics_from_scores(const Eigen::VectorXd& scores,
                               const std::vector<bool>& labels);

// selection rule on raw confidences (also used by filter_seeds)
std::vector<int> filter_by_scores(const Eigen::VectorXd& scores, int n_e);

// Indices of the kept mutants: predicted-positive sorted by confidence
// descending (ties by index), first n_e; top-n_e by confidence when nothing
// clears 0.5.
std::vector<int> filter_seeds(SemModel& model, const std::vector<ScenarioGraph>& mutants,
                              int n_e);

}  // namespace sf
