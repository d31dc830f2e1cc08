#include "scenariofuzz/sem_model.hpp"

#include <cmath>

namespace sf {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kLeaky = 0.2;
constexpr double kAdamB1 = 0.9;
constexpr double kAdamB2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

Json SemConfig::to_json() const {
    return Json{{"hidden", hidden},         {"heads", heads},
                {"dropout", dropout},       {"lr", lr},
                {"head_hidden", head_hidden}, {"type_dim", type_dim},
                {"sign_dim", sign_dim},     {"app_dim", app_dim}};
}

SemConfig SemConfig::from_json(const Json& j) {
    SemConfig c;
    c.hidden = j.at("hidden");
    c.heads = j.at("heads");
    c.dropout = j.at("dropout");
    c.lr = j.at("lr");
    c.head_hidden = j.at("head_hidden");
    c.type_dim = j.at("type_dim");
    c.sign_dim = j.at("sign_dim");
    c.app_dim = j.at("app_dim");
    return c;
}

SemModel::SemModel(const SemConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.hidden % cfg_.heads != 0) {
        throw Error("SEM hidden width must be divisible by head count");
    }
    const int P = cfg_.hidden / cfg_.heads;
    auto add = [&](const std::string& name, int rows, int cols) {
        Tensor tn;
        tn.name = name;
        tn.v = Eigen::MatrixXd::Zero(rows, cols);
        tn.g = Eigen::MatrixXd::Zero(rows, cols);
        tn.m = Eigen::MatrixXd::Zero(rows, cols);
        tn.u = Eigen::MatrixXd::Zero(rows, cols);
        tensors_.push_back(std::move(tn));
    };
    add("emb_type", 6, cfg_.type_dim);
    add("emb_sign", kNumSignTypes, cfg_.sign_dim);
    add("emb_app", 27, cfg_.app_dim);
    for (int l = 0; l < 2; ++l) {
        int fin = l == 0 ? cfg_.input_dim() : cfg_.hidden;
        for (int a = 0; a < cfg_.heads; ++a) {
            std::string s = std::to_string(l) + "_" + std::to_string(a);
            add("W" + s, fin, P);
            add("asrc" + s, P, 1);
            add("adst" + s, P, 1);
            add("aedge" + s, kEdgeFeatDim, 1);
        }
        std::string ls = std::to_string(l);
        add("bn" + ls + "_gamma", cfg_.hidden, 1);
        add("bn" + ls + "_beta", cfg_.hidden, 1);
        run_mean_[static_cast<size_t>(l)] = Eigen::VectorXd::Zero(cfg_.hidden);
        run_var_[static_cast<size_t>(l)] = Eigen::VectorXd::Ones(cfg_.hidden);
    }
    add("head_W1", cfg_.hidden + 8, cfg_.head_hidden);
    add("head_b1", cfg_.head_hidden, 1);
    add("head_W2", cfg_.head_hidden, 1);
    add("head_b2", 1, 1);
    init_params(init_seed);
}

void SemModel::init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& tn : tensors_) {
        if (tn.name.rfind("bn", 0) == 0) {
            tn.v.setConstant(tn.name.find("gamma") != std::string::npos ? 1.0 : 0.0);
        } else if (tn.name.rfind("head_b", 0) == 0) {
            tn.v.setZero();
        } else {
            // Glorot uniform
            double limit = std::sqrt(6.0 / static_cast<double>(tn.v.rows() + tn.v.cols()));
            for (int r = 0; r < tn.v.rows(); ++r) {
                for (int c = 0; c < tn.v.cols(); ++c) {
                    tn.v(r, c) = rng.uniform(-limit, limit);
                }
            }
        }
    }
}

SemModel::Tensor& SemModel::t(const std::string& name) {
    for (auto& tn : tensors_) {
        if (tn.name == name) return tn;
    }
    throw Error("unknown tensor: " + name);
}

const SemModel::Tensor& SemModel::t(const std::string& name) const {
    for (const auto& tn : tensors_) {
        if (tn.name == name) return tn;
    }
    throw Error("unknown tensor: " + name);
}

struct SemModel::Cache {
    Eigen::MatrixXd X0;
    struct Layer {
        Eigen::MatrixXd Xin;
        std::vector<Eigen::MatrixXd> H;       // per head, N x P
        std::vector<Eigen::VectorXd> z;       // per head, pre-LeakyReLU logits
        std::vector<Eigen::VectorXd> alpha;   // per head, attention weights
        Eigen::MatrixXd Y, xhat, Z, act, mask, out;
        Eigen::VectorXd var;
    };
    std::array<Layer, 2> layer;
    std::vector<std::vector<int>> incoming;  // node -> extended edge indices
    std::vector<int> ext_from;
    int n_real = 0;
    Eigen::MatrixXd pooled, headin, h1;
    Eigen::VectorXd y;
    std::vector<int> graph_count;
    bool training = false;
};

Eigen::VectorXd SemModel::run(const PreparedBatch& b, bool training, Rng* drop_rng,
                              Eigen::MatrixXd* pooled_out, Cache* cache) {
    const int N = static_cast<int>(b.node_type.size());
    const int G = b.n_graphs;
    const int Er = static_cast<int>(b.edge_from.size());
    if (b.pos.rows() != N || b.weather.rows() != G ||
        b.edge_feat.rows() != Er || b.edge_feat.cols() != kEdgeFeatDim) {
        throw ShapeMismatch("prepared batch has inconsistent shapes");
    }
    const int H = cfg_.hidden;
    const int A = cfg_.heads;
    const int P = H / A;

    Cache local;
    Cache& c = cache ? *cache : local;
    c.training = training;
    c.n_real = Er;

    // node features: standardized position + three embeddings
    const auto& Et = t("emb_type").v;
    const auto& Es = t("emb_sign").v;
    const auto& Ea = t("emb_app").v;
    c.X0.resize(N, cfg_.input_dim());
    for (int n = 0; n < N; ++n) {
        c.X0.row(n).segment(0, 3) = b.pos.row(n);
        c.X0.row(n).segment(3, cfg_.type_dim) = Et.row(b.node_type[static_cast<size_t>(n)]);
        c.X0.row(n).segment(3 + cfg_.type_dim, cfg_.sign_dim) =
            Es.row(b.sign_type[static_cast<size_t>(n)]);
        c.X0.row(n).segment(3 + cfg_.type_dim + cfg_.sign_dim, cfg_.app_dim) =
            Ea.row(b.appearance[static_cast<size_t>(n)]);
    }

    // extended edge list: real edges then one self-loop per node
    c.ext_from.assign(b.edge_from.begin(), b.edge_from.end());
    c.incoming.assign(static_cast<size_t>(N), {});
    for (int e = 0; e < Er; ++e) c.incoming[static_cast<size_t>(b.edge_to[static_cast<size_t>(e)])].push_back(e);
    for (int n = 0; n < N; ++n) {
        c.ext_from.push_back(n);
        c.incoming[static_cast<size_t>(n)].push_back(Er + n);
    }

    Eigen::MatrixXd X = c.X0;
    for (int l = 0; l < 2; ++l) {
        auto& L = c.layer[static_cast<size_t>(l)];
        L.Xin = X;
        L.Y.resize(N, H);
        L.H.resize(static_cast<size_t>(A));
        L.z.resize(static_cast<size_t>(A));
        L.alpha.resize(static_cast<size_t>(A));
        for (int a = 0; a < A; ++a) {
            std::string s = std::to_string(l) + "_" + std::to_string(a);
            const auto& W = t("W" + s).v;
            const Eigen::VectorXd asrc = t("asrc" + s).v.col(0);
            const Eigen::VectorXd adst = t("adst" + s).v.col(0);
            const Eigen::VectorXd aedge = t("aedge" + s).v.col(0);

            Eigen::MatrixXd Ha = X * W;
            Eigen::VectorXd ssrc = Ha * asrc;
            Eigen::VectorXd sdst = Ha * adst;
            Eigen::VectorXd sedge = b.edge_feat * aedge;

            Eigen::VectorXd z(Er + N), alpha(Er + N);
            for (int n = 0; n < N; ++n) {
                const auto& inc = c.incoming[static_cast<size_t>(n)];
                double mx = -1e300;
                for (int k : inc) {
                    int j = c.ext_from[static_cast<size_t>(k)];
                    double zv = ssrc(j) + sdst(n) + (k < Er ? sedge(k) : 0.0);
                    z(k) = zv;
                    double lv = zv > 0 ? zv : kLeaky * zv;
                    mx = std::max(mx, lv);
                }
                double sum = 0.0;
                for (int k : inc) {
                    double lv = z(k) > 0 ? z(k) : kLeaky * z(k);
                    alpha(k) = std::exp(lv - mx);
                    sum += alpha(k);
                }
                Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(P);
                for (int k : inc) {
                    alpha(k) /= sum;
                    acc += alpha(k) * Ha.row(c.ext_from[static_cast<size_t>(k)]);
                }
                L.Y.row(n).segment(a * P, P) = acc;
            }
            L.H[static_cast<size_t>(a)] = std::move(Ha);
            L.z[static_cast<size_t>(a)] = std::move(z);
            L.alpha[static_cast<size_t>(a)] = std::move(alpha);
        }

        // batchnorm
        const Eigen::VectorXd gamma = t("bn" + std::to_string(l) + "_gamma").v.col(0);
        const Eigen::VectorXd beta = t("bn" + std::to_string(l) + "_beta").v.col(0);
        L.xhat.resize(N, H);
        if (training) {
            Eigen::VectorXd mu = L.Y.colwise().mean();
            Eigen::VectorXd var(H);
            for (int col = 0; col < H; ++col) {
                var(col) = (L.Y.col(col).array() - mu(col)).square().mean();
            }
            for (int col = 0; col < H; ++col) {
                L.xhat.col(col) = (L.Y.col(col).array() - mu(col)) / std::sqrt(var(col) + kBnEps);
            }
            L.var = var;
            auto& rm = run_mean_[static_cast<size_t>(l)];
            auto& rv = run_var_[static_cast<size_t>(l)];
            rm = kBnMomentum * rm + (1.0 - kBnMomentum) * mu;
            rv = kBnMomentum * rv + (1.0 - kBnMomentum) * var;
        } else {
            const auto& rm = run_mean_[static_cast<size_t>(l)];
            const auto& rv = run_var_[static_cast<size_t>(l)];
            for (int col = 0; col < H; ++col) {
                L.xhat.col(col) = (L.Y.col(col).array() - rm(col)) / std::sqrt(rv(col) + kBnEps);
            }
        }
        L.Z = (L.xhat.array().rowwise() * gamma.transpose().array()).matrix();
        L.Z.rowwise() += beta.transpose();

        // ELU
        L.act = L.Z.unaryExpr([](double v) { return v > 0 ? v : std::exp(v) - 1.0; });

        // dropout (training only)
        if (training && cfg_.dropout > 0 && drop_rng != nullptr) {
            double keep = 1.0 - cfg_.dropout;
            L.mask.resize(N, H);
            for (int r = 0; r < N; ++r) {
                for (int col = 0; col < H; ++col) {
                    L.mask(r, col) = drop_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
                }
            }
            L.out = L.act.cwiseProduct(L.mask);
        } else {
            L.mask.resize(0, 0);
            L.out = L.act;
        }
        X = L.out;
    }

    // mean-pool per graph
    c.pooled = Eigen::MatrixXd::Zero(G, H);
    c.graph_count.assign(static_cast<size_t>(G), 0);
    for (int n = 0; n < N; ++n) {
        c.pooled.row(b.graph_of[static_cast<size_t>(n)]) += X.row(n);
        c.graph_count[static_cast<size_t>(b.graph_of[static_cast<size_t>(n)])]++;
    }
    for (int gi = 0; gi < G; ++gi) {
        c.pooled.row(gi) /= static_cast<double>(std::max(1, c.graph_count[static_cast<size_t>(gi)]));
    }
    if (pooled_out != nullptr) *pooled_out = c.pooled;

    // readout MLP with weather concat
    c.headin.resize(G, H + 8);
    c.headin.leftCols(H) = c.pooled;
    c.headin.rightCols(8) = b.weather;
    c.h1 = c.headin * t("head_W1").v;
    c.h1.rowwise() += t("head_b1").v.col(0).transpose();
    c.h1 = c.h1.cwiseMax(0.0);
    Eigen::VectorXd logit = c.h1 * t("head_W2").v.col(0);
    logit.array() += t("head_b2").v(0, 0);
    c.y = logit.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    return c.y;
}

Eigen::VectorXd SemModel::forward(const PreparedBatch& b, bool training, Rng* drop_rng,
                                  Eigen::MatrixXd* pooled) {
    return run(b, training, drop_rng, pooled, nullptr);
}

double SemModel::loss_and_grad(const PreparedBatch& b, const Eigen::VectorXd& labels,
                               Rng* drop_rng) {
    const int G = b.n_graphs;
    if (labels.size() != G) throw ShapeMismatch("label count != graph count");
    Cache c;
    run(b, true, drop_rng, nullptr, &c);

    double loss = 0.0;
    Eigen::VectorXd dlogit(G);
    for (int gi = 0; gi < G; ++gi) {
        double y = std::clamp(c.y(gi), 1e-12, 1.0 - 1e-12);
        double tgt = labels(gi);
        loss += -(tgt * std::log(y) + (1.0 - tgt) * std::log(1.0 - y));
        dlogit(gi) = (c.y(gi) - tgt) / static_cast<double>(G);
    }
    loss /= static_cast<double>(G);

    const int H = cfg_.hidden;
    const int A = cfg_.heads;
    const int P = H / A;
    const int N = static_cast<int>(b.node_type.size());
    const int Er = c.n_real;

    // readout backward
    t("head_W2").g += c.h1.transpose() * dlogit;
    t("head_b2").g(0, 0) += dlogit.sum();
    Eigen::MatrixXd dh1 = dlogit * t("head_W2").v.col(0).transpose();
    dh1 = (c.h1.array() > 0).select(dh1, 0.0);
    t("head_W1").g += c.headin.transpose() * dh1;
    t("head_b1").g.col(0) += dh1.colwise().sum().transpose();
    Eigen::MatrixXd dheadin = dh1 * t("head_W1").v.transpose();

    // un-pool
    Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(N, H);
    for (int n = 0; n < N; ++n) {
        int gi = b.graph_of[static_cast<size_t>(n)];
        dX.row(n) = dheadin.row(gi).head(H) /
                    static_cast<double>(std::max(1, c.graph_count[static_cast<size_t>(gi)]));
    }

    for (int l = 1; l >= 0; --l) {
        auto& L = c.layer[static_cast<size_t>(l)];
        // dropout
        Eigen::MatrixXd dact = L.mask.size() > 0 ? dX.cwiseProduct(L.mask) : dX;
        // ELU'
        Eigen::MatrixXd dZ =
            (L.Z.array() > 0).select(dact, dact.cwiseProduct((L.act.array() + 1.0).matrix()));
        // batchnorm backward (batch-statistics path included)
        const Eigen::VectorXd gamma = t("bn" + std::to_string(l) + "_gamma").v.col(0);
        auto& g_gamma = t("bn" + std::to_string(l) + "_gamma").g;
        auto& g_beta = t("bn" + std::to_string(l) + "_beta").g;
        Eigen::MatrixXd dY(N, H);
        for (int col = 0; col < H; ++col) {
            g_gamma(col, 0) += dZ.col(col).dot(L.xhat.col(col));
            g_beta(col, 0) += dZ.col(col).sum();
            Eigen::VectorXd dxhat = dZ.col(col) * gamma(col);
            double istd = 1.0 / std::sqrt(L.var(col) + kBnEps);
            double sum_dxhat = dxhat.sum();
            double sum_dxhat_xhat = dxhat.dot(L.xhat.col(col));
            dY.col(col) = (istd / static_cast<double>(N)) *
                          (static_cast<double>(N) * dxhat.array() - sum_dxhat -
                           L.xhat.col(col).array() * sum_dxhat_xhat);
        }

        // attention backward per head
        Eigen::MatrixXd dXin = Eigen::MatrixXd::Zero(N, L.Xin.cols());
        for (int a = 0; a < A; ++a) {
            std::string s = std::to_string(l) + "_" + std::to_string(a);
            const auto& W = t("W" + s).v;
            const Eigen::VectorXd asrc = t("asrc" + s).v.col(0);
            const Eigen::VectorXd adst = t("adst" + s).v.col(0);
            const auto& Ha = L.H[static_cast<size_t>(a)];
            const auto& alpha = L.alpha[static_cast<size_t>(a)];
            const auto& z = L.z[static_cast<size_t>(a)];

            Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(N, P);
            Eigen::VectorXd dssrc = Eigen::VectorXd::Zero(N);
            Eigen::VectorXd dsdst = Eigen::VectorXd::Zero(N);
            Eigen::VectorXd dsedge = Eigen::VectorXd::Zero(Er);

            for (int n = 0; n < N; ++n) {
                const auto& inc = c.incoming[static_cast<size_t>(n)];
                Eigen::RowVectorXd dout = dY.row(n).segment(a * P, P);
                double dot = 0.0;
                std::vector<double> dalpha(inc.size());
                for (size_t ki = 0; ki < inc.size(); ++ki) {
                    int k = inc[ki];
                    int j = c.ext_from[static_cast<size_t>(k)];
                    dalpha[ki] = dout.dot(Ha.row(j));
                    dH.row(j) += alpha(k) * dout;
                    dot += alpha(k) * dalpha[ki];
                }
                for (size_t ki = 0; ki < inc.size(); ++ki) {
                    int k = inc[ki];
                    int j = c.ext_from[static_cast<size_t>(k)];
                    double dl = alpha(k) * (dalpha[ki] - dot);
                    double dz = dl * (z(k) > 0 ? 1.0 : kLeaky);
                    dssrc(j) += dz;
                    dsdst(n) += dz;
                    if (k < Er) dsedge(k) += dz;
                }
            }

            t("asrc" + s).g.col(0) += Ha.transpose() * dssrc;
            t("adst" + s).g.col(0) += Ha.transpose() * dsdst;
            t("aedge" + s).g.col(0) += b.edge_feat.transpose() * dsedge;
            dH += dssrc * asrc.transpose() + dsdst * adst.transpose();
            t("W" + s).g += L.Xin.transpose() * dH;
            dXin += dH * W.transpose();
        }
        dX = std::move(dXin);
    }

    // embedding backward (position columns carry no parameters)
    auto& gEt = t("emb_type").g;
    auto& gEs = t("emb_sign").g;
    auto& gEa = t("emb_app").g;
    for (int n = 0; n < N; ++n) {
        gEt.row(b.node_type[static_cast<size_t>(n)]) += dX.row(n).segment(3, cfg_.type_dim);
        gEs.row(b.sign_type[static_cast<size_t>(n)]) +=
            dX.row(n).segment(3 + cfg_.type_dim, cfg_.sign_dim);
        gEa.row(b.appearance[static_cast<size_t>(n)]) +=
            dX.row(n).segment(3 + cfg_.type_dim + cfg_.sign_dim, cfg_.app_dim);
    }
    return loss;
}

void SemModel::zero_grad() {
    for (auto& tn : tensors_) tn.g.setZero();
}

void SemModel::adam_step() {
    ++adam_t_;
    double bc1 = 1.0 - std::pow(kAdamB1, adam_t_);
    double bc2 = 1.0 - std::pow(kAdamB2, adam_t_);
    for (auto& tn : tensors_) {
        tn.m = kAdamB1 * tn.m + (1.0 - kAdamB1) * tn.g;
        tn.u = kAdamB2 * tn.u.array() + (1.0 - kAdamB2) * tn.g.array().square();
        tn.v.array() -=
            cfg_.lr * (tn.m.array() / bc1) / ((tn.u.array() / bc2).sqrt() + kAdamEps);
    }
}

int SemModel::n_params() const {
    int n = 0;
    for (const auto& tn : tensors_) n += static_cast<int>(tn.v.size());
    return n;
}

namespace {
template <typename Self, typename Fn>
auto locate(Self& tensors, int flat, Fn&& fn) {
    for (auto& tn : tensors) {
        int sz = static_cast<int>(tn.v.size());
        if (flat < sz) return fn(tn, flat);
        flat -= sz;
    }
    throw Error("flat parameter index out of range");
}
}  // namespace

double SemModel::get_param(int flat) const {
    return locate(tensors_, flat, [](const Tensor& tn, int i) { return tn.v(i); });
}

void SemModel::set_param(int flat, double v) {
    locate(tensors_, flat, [&](Tensor& tn, int i) {
        tn.v(i) = v;
        return 0;
    });
}

double SemModel::get_grad(int flat) const {
    return locate(tensors_, flat, [](const Tensor& tn, int i) { return tn.g(i); });
}

const std::string& SemModel::param_name(int flat, int* offset) const {
    for (const auto& tn : tensors_) {
        int sz = static_cast<int>(tn.v.size());
        if (flat < sz) {
            if (offset != nullptr) *offset = flat;
            return tn.name;
        }
        flat -= sz;
    }
    throw Error("flat parameter index out of range");
}

namespace {
Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (int r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
    int rows = static_cast<int>(j.size());
    int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = j.at(static_cast<size_t>(r)).at(static_cast<size_t>(c));
    }
    return m;
}
}  // namespace

Json SemModel::to_json() const {
    Json j;
    j["schema"] = "scenariofuzz-sem/1";
    j["config"] = cfg_.to_json();
    j["adam_t"] = adam_t_;
    for (int l = 0; l < 2; ++l) {
        j["bn_running"][static_cast<size_t>(l)] = {
            {"mean", std::vector<double>(run_mean_[static_cast<size_t>(l)].data(),
                                         run_mean_[static_cast<size_t>(l)].data() + cfg_.hidden)},
            {"var", std::vector<double>(run_var_[static_cast<size_t>(l)].data(),
                                        run_var_[static_cast<size_t>(l)].data() + cfg_.hidden)}};
    }
    Json tensors = Json::object();
    for (const auto& tn : tensors_) {
        tensors[tn.name] = {{"v", matrix_to_json(tn.v)},
                            {"m", matrix_to_json(tn.m)},
                            {"u", matrix_to_json(tn.u)}};
    }
    j["tensors"] = std::move(tensors);
    return j;
}

SemModel SemModel::from_json(const Json& j) {
    if (j.value("schema", "") != "scenariofuzz-sem/1") {
        throw Error("unsupported SEM checkpoint schema");
    }
    SemModel model(SemConfig::from_json(j.at("config")), 0);
    model.adam_t_ = j.at("adam_t");
    for (int l = 0; l < 2; ++l) {
        auto mean = j.at("bn_running").at(static_cast<size_t>(l)).at("mean").get<std::vector<double>>();
        auto var = j.at("bn_running").at(static_cast<size_t>(l)).at("var").get<std::vector<double>>();
        model.run_mean_[static_cast<size_t>(l)] =
            Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        model.run_var_[static_cast<size_t>(l)] =
            Eigen::Map<Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()));
    }
    for (auto& tn : model.tensors_) {
        const auto& src = j.at("tensors").at(tn.name);
        Eigen::MatrixXd v = matrix_from_json(src.at("v"));
        if (v.rows() != tn.v.rows() || v.cols() != tn.v.cols()) {
            throw ShapeMismatch("checkpoint tensor shape mismatch: " + tn.name);
        }
        tn.v = std::move(v);
        tn.m = matrix_from_json(src.at("m"));
        tn.u = matrix_from_json(src.at("u"));
    }
    return model;
}

}  // namespace sf
