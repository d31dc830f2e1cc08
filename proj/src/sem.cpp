#include "scenariofuzz/sem.hpp"

#include <algorithm>
#include <cmath>

namespace sf {

Json record_to_json(const TestRecord& r) {
    Json j;
    j["scenario"] = scenario_to_json(r.scenario);
    j["label"] = r.label;
    j["system_id"] = r.system_id;
    if (r.driving_score) {
        j["driving_score"] = *r.driving_score;
    } else {
        j["driving_score"] = nullptr;
    }
    return j;
}

TestRecord record_from_json(const Json& j) {
    TestRecord r;
    r.scenario = scenario_from_json(j.at("scenario"));
    r.label = j.at("label");
    r.system_id = j.at("system_id");
    if (j.contains("driving_score") && !j.at("driving_score").is_null()) {
        r.driving_score = j.at("driving_score").get<double>();
    }
    return r;
}

std::vector<ScenarioGraph> records_to_graphs(const std::vector<TestRecord>& records,
                                             const SeedCorpus& corpus,
                                             const RoadNetwork& net,
                                             const TopologyGraph& g) {
    std::vector<ScenarioGraph> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(scenario_to_graph(r.scenario, corpus.seed_by_id(r.scenario.source_seed_id),
                                        net, g));
    }
    return out;
}

Json SemMetrics::to_json() const {
    return Json{{"accuracy", accuracy}, {"precision", precision},
                {"recall", recall},     {"loss", loss},
                {"brier", brier},       {"pearson", pearson},
                {"degenerate_labels", degenerate_labels}};
}

SemMetrics metrics_from_scores(const Eigen::VectorXd& scores,
                               const std::vector<bool>& labels) {
    SemMetrics m;
    int n = static_cast<int>(labels.size());
    int tp = 0, fp = 0, tn = 0, fn = 0;
    double loss = 0.0, brier = 0.0;
    for (int i = 0; i < n; ++i) {
        double y = std::clamp(scores(i), 1e-12, 1.0 - 1e-12);
        double tgt = labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
        loss += -(tgt * std::log(y) + (1.0 - tgt) * std::log(1.0 - y));
        brier += (scores(i) - tgt) * (scores(i) - tgt);
        bool pred = scores(i) > 0.5;
        if (pred && labels[static_cast<size_t>(i)]) ++tp;
        if (pred && !labels[static_cast<size_t>(i)]) ++fp;
        if (!pred && labels[static_cast<size_t>(i)]) ++fn;
        if (!pred && !labels[static_cast<size_t>(i)]) ++tn;
    }
    m.loss = loss / n;
    m.brier = brier / n;
    m.accuracy = static_cast<double>(tp + tn) / n;
    m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;

    int pos = tp + fn;
    m.degenerate_labels = (pos == 0 || pos == n);
    if (m.degenerate_labels) {
        m.pearson = 0.0;  // flagged: correlation with a constant is undefined
    } else {
        double sm = scores.mean();
        double lm = static_cast<double>(pos) / n;
        double num = 0.0, ds = 0.0, dl = 0.0;
        for (int i = 0; i < n; ++i) {
            double a = scores(i) - sm;
            double bb = (labels[static_cast<size_t>(i)] ? 1.0 : 0.0) - lm;
            num += a * bb;
            ds += a * a;
            dl += bb * bb;
        }
        m.pearson = (ds > 0 && dl > 0) ? num / std::sqrt(ds * dl) : 0.0;
    }
    return m;
}

std::vector<int> filter_by_scores(const Eigen::VectorXd& scores, int n_e) {
    std::vector<int> order(static_cast<size_t>(scores.size()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores(a) > scores(b); });
    std::vector<int> kept;
    for (int i : order) {
        if (scores(i) > 0.5) kept.push_back(i);
    }
    if (kept.empty()) kept = order;  // cold model: never stall the campaign
    if (static_cast<int>(kept.size()) > n_e) kept.resize(static_cast<size_t>(n_e));
    return kept;
}

TrainResult train_sem(SemModel& model, const std::vector<ScenarioGraph>& graphs,
                      const std::vector<bool>& labels, int epochs, Rng& rng) {
    if (graphs.size() != labels.size() || graphs.size() < 2) {
        throw Error("train_sem needs >= 2 labeled graphs");
    }
    TrainResult res;

    std::vector<int> train_idx, val_idx;
    for (size_t i = 0; i < graphs.size(); ++i) {
        // deterministic 80/20 split keyed on graph content
        Json j;
        j["w"] = graphs[i].weather;
        j["n"] = graphs[i].nodes.size();
        j["e"] = graphs[i].edges.size();
        Json nodes = Json::array();
        for (const auto& n : graphs[i].nodes) {
            nodes.push_back({n.rel_pos.x, n.rel_pos.y, n.rel_pos.z, n.node_type,
                             n.sign_type, n.appearance});
        }
        j["nodes"] = std::move(nodes);
        if (fnv1a(j.dump()) % 5 == 0) {
            val_idx.push_back(static_cast<int>(i));
        } else {
            train_idx.push_back(static_cast<int>(i));
        }
    }
    if (train_idx.empty()) std::swap(train_idx, val_idx);
    res.n_train = static_cast<int>(train_idx.size());
    res.n_val = static_cast<int>(val_idx.size());

    auto subset = [&](const std::vector<int>& idx) {
        std::vector<ScenarioGraph> gs;
        std::vector<bool> ls;
        for (int i : idx) {
            gs.push_back(graphs[static_cast<size_t>(i)]);
            ls.push_back(labels[static_cast<size_t>(i)]);
        }
        return std::make_pair(std::move(gs), std::move(ls));
    };
    auto [train_graphs, train_labels] = subset(train_idx);

    bool any_pos = false, any_neg = false;
    for (bool l : labels) (l ? any_pos : any_neg) = true;
    res.degenerate_labels = !(any_pos && any_neg);

    auto batch = preprocess_batch(train_graphs);
    Eigen::VectorXd y(train_labels.size());
    for (size_t i = 0; i < train_labels.size(); ++i) y(static_cast<Eigen::Index>(i)) = train_labels[i] ? 1.0 : 0.0;

    res.train_loss.reserve(static_cast<size_t>(epochs));
    for (int e = 0; e < epochs; ++e) {
        model.zero_grad();
        res.train_loss.push_back(model.loss_and_grad(batch, y, &rng));
        model.adam_step();
    }

    if (!val_idx.empty()) {
        auto [vg, vl] = subset(val_idx);
        res.validation = evaluate_metrics(model, vg, vl);
    } else {
        res.validation = evaluate_metrics(model, train_graphs, train_labels);
    }
    res.validation.degenerate_labels |= res.degenerate_labels;
    return res;
}

SemMetrics evaluate_metrics(SemModel& model, const std::vector<ScenarioGraph>& graphs,
                            const std::vector<bool>& labels) {
    if (graphs.size() != labels.size() || graphs.empty()) {
        throw Error("evaluate_metrics needs labeled graphs");
    }
    auto batch = preprocess_batch(graphs);
    return metrics_from_scores(model.forward(batch), labels);
}

std::vector<int> filter_seeds(SemModel& model, const std::vector<ScenarioGraph>& mutants,
                              int n_e) {
    if (mutants.empty()) throw Error("filter_seeds: no mutants");
    auto batch = preprocess_batch(mutants);
    return filter_by_scores(model.forward(batch), n_e);
}

}  // namespace sf
