#pragma once

#include "scenariofuzz/fuzz.hpp"

namespace sf {

struct NoCollision : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};

constexpr int kTrajPoints = 32;   // arc-length resample count per polyline
constexpr double kTrajWindow = 8.0;  // s before the collision
constexpr int kTrajLatent = 16;

struct CollisionTrajectoryPair {
    int scenario_id = -1;
    Eigen::MatrixXd ego;     // kTrajPoints x 2, ego-centric frame
    Eigen::MatrixXd object;  // kTrajPoints x 2, same frame
    int collision_tick = 0;
    ObjectKind object_kind = ObjectKind::Vehicle;
    int appearance_id = 0;

    Eigen::VectorXd flatten() const;  // 4 * kTrajPoints values
};

// Windows both trajectories over [collision - 8 s, collision], transforms to
// the frame of the ego pose at the window start, resamples to 32 points each.
CollisionTrajectoryPair extract_collision_pair(const Trace& trace,
                                               const ConcreteScenario* sc = nullptr);

// Dense autoencoder over flattened pairs: 128 -> tanh 64 -> 16 -> tanh 64 ->
// 128, trained with Adam on mean squared error. Inputs are z-scored with
// statistics frozen at training time.
class TrajectoryEncoder {
public:
    explicit TrajectoryEncoder(std::uint64_t init_seed, int hidden = 64);

    Eigen::MatrixXd encode(const Eigen::MatrixXd& X) const;       // n x 16
    Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& X) const;  // n x 128
    double mse(const Eigen::MatrixXd& X) const;

    // one full-batch step; accumulates grads, returns the loss
    double loss_and_grad(const Eigen::MatrixXd& X);
    void adam_step(double lr);
    void zero_grad();
    void set_normalization(const Eigen::VectorXd& mean, const Eigen::VectorXd& std);

    // flat parameter access for finite-difference checks
    int n_params() const;
    double get_param(int flat) const;
    void set_param(int flat, double v);
    double get_grad(int flat) const;

    Json to_json() const;
    static TrajectoryEncoder from_json(const Json& j);

private:
    struct Tensor {
        Eigen::MatrixXd v, g, m, u;
    };
    std::vector<Tensor> t_;  // W1 b1 W2 b2 W3 b3 W4 b4
    int hidden_;
    int adam_t_ = 0;
    Eigen::VectorXd mean_, std_;

    Eigen::MatrixXd norm(const Eigen::MatrixXd& X) const;
};

struct EncoderTrainResult {
    std::vector<double> loss;  // per epoch, on normalized inputs
    double input_variance = 0.0;
};

// Throws InsufficientData below 16 pairs. Deterministic given rng.
EncoderTrainResult train_trajectory_encoder(TrajectoryEncoder& enc,
                                            const std::vector<CollisionTrajectoryPair>& pairs,
                                            int epochs, Rng& rng);

// trajectory latent (16) concatenated with the SEM pooled embedding
Eigen::MatrixXd fuse_features(const Eigen::MatrixXd& latents,
                              const Eigen::MatrixXd& sem_pooled);

struct ClusterResult {
    int k = 0;
    std::vector<int> assignment;  // per feature row
    std::vector<int> medoids;     // row index per cluster
    double silhouette = 0.0;
    bool degenerate = false;  // all points identical

    Json to_json() const;
};

// Seeded k-means++ with Lloyd iterations; k picked by max silhouette over
// [2, min(12, n - 1)] when unspecified. Throws InsufficientData below 2 rows.
ClusterResult cluster_error_scenarios(const Eigen::MatrixXd& features,
                                      std::optional<int> k, Rng& rng);

struct ReplayReport {
    int id = 0;
    bool pass = false;
    double max_deviation = 0.0;      // per-tick max ego position deviation
    int first_divergence_tick = -1;  // -1 when identical
    bool agent_mismatch = false;     // stored spec != expected spec
    std::string outcome;

    Json to_json() const;
};

// Re-runs a stored error scenario with its recorded rng seed and agent spec;
// PASS iff the trace is bit-identical. `expected_agent` only flags mismatches,
// the stored spec is always the one replayed.
ReplayReport replay_error(const StateDir& dir, int id, const CampaignContext& ctx,
                          const std::optional<std::string>& expected_agent = std::nullopt);

}  // namespace sf
