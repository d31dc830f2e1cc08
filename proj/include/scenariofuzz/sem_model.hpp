#pragma once

#include "scenariofuzz/sem_graph.hpp"

namespace sf {

struct ShapeMismatch : Error {
    using Error::Error;
};

struct SemConfig {
    int hidden = 64;      // GAT output width H (concat over heads)
    int heads = 4;        // A
    double dropout = 0.1;
    double lr = 1e-3;
    int head_hidden = 32;  // readout MLP width
    int type_dim = 8;      // node_type embedding
    int sign_dim = 4;      // sign_type embedding
    int app_dim = 8;       // appearance embedding

    int input_dim() const { return 3 + type_dim + sign_dim + app_dim; }

    Json to_json() const;
    static SemConfig from_json(const Json& j);
};

// Two GAT layers (edge features folded into the attention logits), batchnorm
// + ELU + dropout after each, mean-pool readout, weather concat, 2-layer MLP,
// sigmoid. Trained full-batch with Adam; gradients are hand-derived.
class SemModel {
public:
    SemModel(const SemConfig& cfg, std::uint64_t init_seed);

    // confidences in (0,1), one per graph; `pooled` receives the G x H
    // mean-pooled embedding when non-null. Training mode uses batch statistics
    // for batchnorm (and updates running stats); dropout needs drop_rng.
    Eigen::VectorXd forward(const PreparedBatch& b, bool training = false,
                            Rng* drop_rng = nullptr,
                            Eigen::MatrixXd* pooled = nullptr);

    // mean binary cross-entropy; accumulates parameter gradients
    double loss_and_grad(const PreparedBatch& b, const Eigen::VectorXd& labels,
                         Rng* drop_rng);

    void zero_grad();
    void adam_step();

    // flat parameter access for finite-difference checks
    int n_params() const;
    double get_param(int flat) const;
    void set_param(int flat, double v);
    double get_grad(int flat) const;
    const std::string& param_name(int flat, int* offset_in_tensor = nullptr) const;

    const SemConfig& config() const { return cfg_; }

    Json to_json() const;
    static SemModel from_json(const Json& j);

private:
    struct Tensor {
        std::string name;
        Eigen::MatrixXd v, g, m, u;  // value, grad, Adam moments
    };

    SemConfig cfg_;
    std::vector<Tensor> tensors_;
    int adam_t_ = 0;
    // batchnorm running stats per layer (inference mode)
    std::array<Eigen::VectorXd, 2> run_mean_, run_var_;

    Tensor& t(const std::string& name);
    const Tensor& t(const std::string& name) const;
    void init_params(std::uint64_t seed);

    struct Cache;
    Eigen::VectorXd run(const PreparedBatch& b, bool training, Rng* drop_rng,
                        Eigen::MatrixXd* pooled, Cache* cache);
};

}  // namespace sf
