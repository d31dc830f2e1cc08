#include "scenariofuzz/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace sf {

namespace {

constexpr int kFlatDim = 4 * kTrajPoints;

// arc-length resample of a polyline to exactly kTrajPoints points
Eigen::MatrixXd resample(const std::vector<Eigen::Vector2d>& pts) {
    Eigen::MatrixXd out(kTrajPoints, 2);
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) {
        cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    double total = cum.back();
    if (total <= 0.0) {
        for (int i = 0; i < kTrajPoints; ++i) out.row(i) = pts.front().transpose();
        return out;
    }
    size_t seg = 0;
    for (int i = 0; i < kTrajPoints; ++i) {
        double target = total * i / (kTrajPoints - 1);
        while (seg + 1 < cum.size() - 1 && cum[seg + 1] < target) ++seg;
        double lo = cum[seg], hi = cum[seg + 1];
        double t = hi > lo ? (target - lo) / (hi - lo) : 0.0;
        out.row(i) = ((1.0 - t) * pts[seg] + t * pts[seg + 1]).transpose();
    }
    return out;
}

Eigen::MatrixXd json_to_mat(const Json& j) {
    Eigen::MatrixXd m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& d = j.at("data");
    int idx = 0;
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) m(r, c) = d.at(idx++);
    }
    return m;
}

Json mat_to_json(const Eigen::MatrixXd& m) {
    Json d = Json::array();
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) d.push_back(m(r, c));
    }
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(d)}};
}

}  // namespace

Eigen::VectorXd CollisionTrajectoryPair::flatten() const {
    Eigen::VectorXd v(kFlatDim);
    for (int i = 0; i < kTrajPoints; ++i) {
        v(2 * i) = ego(i, 0);
        v(2 * i + 1) = ego(i, 1);
        v(2 * kTrajPoints + 2 * i) = object(i, 0);
        v(2 * kTrajPoints + 2 * i + 1) = object(i, 1);
    }
    return v;
}

CollisionTrajectoryPair extract_collision_pair(const Trace& trace,
                                               const ConcreteScenario* sc) {
    const TraceEvent* collision = nullptr;
    for (const auto& e : trace.events) {
        if (e.kind == "collision") {
            collision = &e;
            break;
        }
    }
    if (collision == nullptr) throw NoCollision("trace has no collision event");
    int entity = collision->detail.at("entity");

    int first_tick = trace.frames.front().state.tick;
    int start_tick = std::max(
        first_tick, collision->tick - static_cast<int>(std::llround(kTrajWindow / kDt)));

    std::vector<Eigen::Vector2d> ego_pts, obj_pts;
    std::optional<Pose> origin;
    for (const auto& f : trace.frames) {
        if (f.state.tick < start_tick || f.state.tick > collision->tick) continue;
        if (!origin) origin = f.state.ego.pose;  // window-start ego frame
        double c = std::cos(origin->heading), s = std::sin(origin->heading);
        auto to_local = [&](double x, double y) {
            double dx = x - origin->x, dy = y - origin->y;
            return Eigen::Vector2d(dx * c + dy * s, -dx * s + dy * c);
        };
        ego_pts.push_back(to_local(f.state.ego.pose.x, f.state.ego.pose.y));
        const auto& op = f.state.objects.at(static_cast<size_t>(entity)).pose;
        obj_pts.push_back(to_local(op.x, op.y));
    }
    if (ego_pts.empty()) throw NoCollision("collision tick outside the trace");

    CollisionTrajectoryPair pair;
    pair.collision_tick = collision->tick;
    pair.ego = resample(ego_pts);
    pair.object = resample(obj_pts);
    if (sc != nullptr) {
        const auto& spec = sc->objects.at(static_cast<size_t>(entity));
        pair.object_kind = spec.kind;
        pair.appearance_id = spec.appearance_id;
    }
    return pair;
}

// ------------------------------------------------------- TrajectoryEncoder

TrajectoryEncoder::TrajectoryEncoder(std::uint64_t init_seed, int hidden)
    : hidden_(hidden) {
    Rng rng(init_seed);
    auto glorot = [&](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        double lim = std::sqrt(6.0 / (rows + cols));
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-lim, lim);
        }
        return m;
    };
    auto add = [&](Eigen::MatrixXd v) {
        Tensor t;
        t.v = std::move(v);
        t.g = Eigen::MatrixXd::Zero(t.v.rows(), t.v.cols());
        t.m = t.g;
        t.u = t.g;
        t_.push_back(std::move(t));
    };
    add(glorot(kFlatDim, hidden_));
    add(Eigen::MatrixXd::Zero(1, hidden_));
    add(glorot(hidden_, kTrajLatent));
    add(Eigen::MatrixXd::Zero(1, kTrajLatent));
    add(glorot(kTrajLatent, hidden_));
    add(Eigen::MatrixXd::Zero(1, hidden_));
    add(glorot(hidden_, kFlatDim));
    add(Eigen::MatrixXd::Zero(1, kFlatDim));
    mean_ = Eigen::VectorXd::Zero(kFlatDim);
    std_ = Eigen::VectorXd::Ones(kFlatDim);
}

void TrajectoryEncoder::set_normalization(const Eigen::VectorXd& mean,
                                          const Eigen::VectorXd& std) {
    mean_ = mean;
    std_ = std;
}

Eigen::MatrixXd TrajectoryEncoder::norm(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd out = X;
    for (int c = 0; c < out.cols(); ++c) {
        double s = std_(c);
        if (s > 0) {
            out.col(c) = ((out.col(c).array() - mean_(c)) / s).matrix();
        } else {
            out.col(c).setZero();
        }
    }
    return out;
}

Eigen::MatrixXd TrajectoryEncoder::encode(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Xn = norm(X);
    Eigen::MatrixXd h1 =
        ((Xn * t_[0].v).rowwise() + t_[1].v.row(0)).array().tanh();
    return (h1 * t_[2].v).rowwise() + t_[3].v.row(0);
}

Eigen::MatrixXd TrajectoryEncoder::reconstruct(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd z = encode(X);
    Eigen::MatrixXd h2 = ((z * t_[4].v).rowwise() + t_[5].v.row(0)).array().tanh();
    return (h2 * t_[6].v).rowwise() + t_[7].v.row(0);
}

double TrajectoryEncoder::mse(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Xn = norm(X);
    return (reconstruct(X) - Xn).squaredNorm() / static_cast<double>(Xn.size());
}

double TrajectoryEncoder::loss_and_grad(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd Xn = norm(X);
    Eigen::MatrixXd a1 = (Xn * t_[0].v).rowwise() + t_[1].v.row(0);
    Eigen::MatrixXd h1 = a1.array().tanh();
    Eigen::MatrixXd z = (h1 * t_[2].v).rowwise() + t_[3].v.row(0);
    Eigen::MatrixXd a2 = (z * t_[4].v).rowwise() + t_[5].v.row(0);
    Eigen::MatrixXd h2 = a2.array().tanh();
    Eigen::MatrixXd xhat = (h2 * t_[6].v).rowwise() + t_[7].v.row(0);

    Eigen::MatrixXd diff = xhat - Xn;
    double n = static_cast<double>(Xn.size());
    double loss = diff.squaredNorm() / n;

    Eigen::MatrixXd dxhat = 2.0 / n * diff;
    t_[6].g += h2.transpose() * dxhat;
    t_[7].g += dxhat.colwise().sum();
    Eigen::MatrixXd dh2 = dxhat * t_[6].v.transpose();
    Eigen::MatrixXd da2 = dh2.array() * (1.0 - h2.array().square());
    t_[4].g += z.transpose() * da2;
    t_[5].g += da2.colwise().sum();
    Eigen::MatrixXd dz = da2 * t_[4].v.transpose();
    t_[2].g += h1.transpose() * dz;
    t_[3].g += dz.colwise().sum();
    Eigen::MatrixXd dh1 = dz * t_[2].v.transpose();
    Eigen::MatrixXd da1 = dh1.array() * (1.0 - h1.array().square());
    t_[0].g += Xn.transpose() * da1;
    t_[1].g += da1.colwise().sum();
    return loss;
}

void TrajectoryEncoder::zero_grad() {
    for (auto& t : t_) t.g.setZero();
}

void TrajectoryEncoder::adam_step(double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++adam_t_;
    double c1 = 1.0 - std::pow(b1, adam_t_);
    double c2 = 1.0 - std::pow(b2, adam_t_);
    for (auto& t : t_) {
        t.m = b1 * t.m + (1.0 - b1) * t.g;
        t.u = b2 * t.u + (1.0 - b2) * t.g.array().square().matrix();
        t.v.array() -=
            lr * (t.m.array() / c1) / ((t.u.array() / c2).sqrt() + eps);
    }
}

int TrajectoryEncoder::n_params() const {
    int n = 0;
    for (const auto& t : t_) n += static_cast<int>(t.v.size());
    return n;
}

namespace {
std::pair<int, int> locate_flat(const std::vector<int>& sizes, int flat) {
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (flat < sizes[i]) return {static_cast<int>(i), flat};
        flat -= sizes[i];
    }
    throw Error("flat parameter index out of range");
}
}  // namespace

double TrajectoryEncoder::get_param(int flat) const {
    std::vector<int> sizes;
    for (const auto& t : t_) sizes.push_back(static_cast<int>(t.v.size()));
    auto [ti, off] = locate_flat(sizes, flat);
    return t_[static_cast<size_t>(ti)].v(off);
}

void TrajectoryEncoder::set_param(int flat, double v) {
    std::vector<int> sizes;
    for (const auto& t : t_) sizes.push_back(static_cast<int>(t.v.size()));
    auto [ti, off] = locate_flat(sizes, flat);
    t_[static_cast<size_t>(ti)].v(off) = v;
}

double TrajectoryEncoder::get_grad(int flat) const {
    std::vector<int> sizes;
    for (const auto& t : t_) sizes.push_back(static_cast<int>(t.v.size()));
    auto [ti, off] = locate_flat(sizes, flat);
    return t_[static_cast<size_t>(ti)].g(off);
}

Json TrajectoryEncoder::to_json() const {
    Json j;
    j["schema"] = "scenariofuzz-trajenc/1";
    j["hidden"] = hidden_;
    j["adam_t"] = adam_t_;
    j["mean"] = mat_to_json(mean_);
    j["std"] = mat_to_json(std_);
    Json ts = Json::array();
    for (const auto& t : t_) {
        ts.push_back({{"v", mat_to_json(t.v)},
                      {"m", mat_to_json(t.m)},
                      {"u", mat_to_json(t.u)}});
    }
    j["tensors"] = std::move(ts);
    return j;
}

TrajectoryEncoder TrajectoryEncoder::from_json(const Json& j) {
    if (j.value("schema", "") != "scenariofuzz-trajenc/1") {
        throw Error("bad trajectory-encoder checkpoint schema");
    }
    TrajectoryEncoder enc(0, j.at("hidden"));
    enc.adam_t_ = j.at("adam_t");
    enc.mean_ = json_to_mat(j.at("mean"));
    enc.std_ = json_to_mat(j.at("std"));
    const auto& ts = j.at("tensors");
    for (size_t i = 0; i < enc.t_.size(); ++i) {
        enc.t_[i].v = json_to_mat(ts.at(i).at("v"));
        enc.t_[i].m = json_to_mat(ts.at(i).at("m"));
        enc.t_[i].u = json_to_mat(ts.at(i).at("u"));
        enc.t_[i].g = Eigen::MatrixXd::Zero(enc.t_[i].v.rows(), enc.t_[i].v.cols());
    }
    return enc;
}

EncoderTrainResult train_trajectory_encoder(TrajectoryEncoder& enc,
                                            const std::vector<CollisionTrajectoryPair>& pairs,
                                            int epochs, Rng& rng) {
    if (pairs.size() < 16) {
        throw InsufficientData("need >= 16 collision pairs, have " +
                               std::to_string(pairs.size()));
    }
    (void)rng;  // full-batch training is order-free; kept for API symmetry
    Eigen::MatrixXd X(static_cast<int>(pairs.size()), kFlatDim);
    for (size_t i = 0; i < pairs.size(); ++i) {
        X.row(static_cast<int>(i)) = pairs[i].flatten().transpose();
    }
    Eigen::VectorXd mean = X.colwise().mean();
    Eigen::VectorXd std(kFlatDim);
    for (int c = 0; c < kFlatDim; ++c) {
        std(c) = std::sqrt((X.col(c).array() - mean(c)).square().mean());
    }
    enc.set_normalization(mean, std);

    EncoderTrainResult res;
    // after z-scoring, live columns have unit variance and dead ones zero
    int live = 0;
    for (int c = 0; c < kFlatDim; ++c) live += std(c) > 0 ? 1 : 0;
    res.input_variance = static_cast<double>(live) / kFlatDim;

    for (int e = 0; e < epochs; ++e) {
        enc.zero_grad();
        res.loss.push_back(enc.loss_and_grad(X));
        enc.adam_step(1e-3);
    }
    return res;
}

Eigen::MatrixXd fuse_features(const Eigen::MatrixXd& latents,
                              const Eigen::MatrixXd& sem_pooled) {
    if (latents.rows() != sem_pooled.rows()) throw Error("fuse_features row mismatch");
    Eigen::MatrixXd out(latents.rows(), latents.cols() + sem_pooled.cols());
    out << latents, sem_pooled;
    if (!out.allFinite()) throw Error("non-finite fused features");
    return out;
}

// ----------------------------------------------------------------- k-means

namespace {

struct KmeansRun {
    std::vector<int> assignment;
    Eigen::MatrixXd centers;
};

KmeansRun kmeans(const Eigen::MatrixXd& X, int k, Rng& rng) {
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd centers(k, X.cols());

    // k-means++ seeding
    int first = static_cast<int>(rng.uniform_int(0, n - 1));
    centers.row(0) = X.row(first);
    Eigen::VectorXd d2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = d2.sum();
        int pick = 0;
        if (total > 0) {
            double r = rng.uniform(0.0, total);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<int>(rng.uniform_int(0, n - 1));
        }
        centers.row(c) = X.row(pick);
        d2 = d2.cwiseMin((X.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<size_t>(n), 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = (X.row(i) - centers.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                double d = (X.row(i) - centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, X.cols());
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            sums.row(assign[static_cast<size_t>(i)]) += X.row(i);
            ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / counts[static_cast<size_t>(c)];
            }
        }
        if (!changed) break;
    }
    return {std::move(assign), std::move(centers)};
}

double silhouette(const Eigen::MatrixXd& X, const std::vector<int>& assign, int k) {
    const int n = static_cast<int>(X.rows());
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<size_t>(a)];
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> mean_d(static_cast<size_t>(k), 0.0);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_d[static_cast<size_t>(assign[static_cast<size_t>(j)])] +=
                (X.row(i) - X.row(j)).norm();
        }
        int ci = assign[static_cast<size_t>(i)];
        double a = counts[static_cast<size_t>(ci)] > 1
                       ? mean_d[static_cast<size_t>(ci)] /
                             (counts[static_cast<size_t>(ci)] - 1)
                       : 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == ci || counts[static_cast<size_t>(c)] == 0) continue;
            b = std::min(b, mean_d[static_cast<size_t>(c)] /
                                counts[static_cast<size_t>(c)]);
        }
        if (!std::isfinite(b)) continue;  // single non-empty cluster
        double s = std::max(a, b) > 0 ? (b - a) / std::max(a, b) : 0.0;
        total += s;
    }
    return total / n;
}

std::vector<int> medoids_of(const Eigen::MatrixXd& X, const std::vector<int>& assign,
                            int k) {
    std::vector<int> meds(static_cast<size_t>(k), -1);
    std::vector<double> best(static_cast<size_t>(k),
                             std::numeric_limits<double>::infinity());
    const int n = static_cast<int>(X.rows());
    for (int i = 0; i < n; ++i) {
        int c = assign[static_cast<size_t>(i)];
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            if (assign[static_cast<size_t>(j)] == c) sum += (X.row(i) - X.row(j)).norm();
        }
        if (sum < best[static_cast<size_t>(c)]) {
            best[static_cast<size_t>(c)] = sum;
            meds[static_cast<size_t>(c)] = i;
        }
    }
    meds.erase(std::remove(meds.begin(), meds.end(), -1), meds.end());
    return meds;
}

}  // namespace

Json ClusterResult::to_json() const {
    Json j;
    j["k"] = k;
    j["assignment"] = assignment;
    j["medoids"] = medoids;
    j["silhouette"] = silhouette;
    j["degenerate"] = degenerate;
    return j;
}

ClusterResult cluster_error_scenarios(const Eigen::MatrixXd& features,
                                      std::optional<int> k, Rng& rng) {
    const int n = static_cast<int>(features.rows());
    if (n < 2) throw InsufficientData("need >= 2 features to cluster");

    bool all_same = true;
    for (int i = 1; i < n && all_same; ++i) {
        if ((features.row(i) - features.row(0)).norm() > 0) all_same = false;
    }
    if (all_same) {
        ClusterResult r;
        r.k = 1;
        r.assignment.assign(static_cast<size_t>(n), 0);
        r.medoids = {0};
        r.degenerate = true;
        return r;
    }

    auto run_k = [&](int kk) {
        auto km = kmeans(features, kk, rng);
        ClusterResult r;
        r.k = kk;
        r.assignment = km.assignment;
        r.silhouette = silhouette(features, km.assignment, kk);
        r.medoids = medoids_of(features, km.assignment, kk);
        return r;
    };

    if (k) {
        if (*k < 1 || *k > n) throw InsufficientData("k out of range");
        return run_k(*k);
    }
    int k_hi = std::min(12, n - 1);
    if (k_hi < 2) return run_k(n);  // n = 2 distinct points: one each
    ClusterResult best;
    for (int kk = 2; kk <= k_hi; ++kk) {
        auto r = run_k(kk);
        if (best.k == 0 || r.silhouette > best.silhouette + 1e-12) best = std::move(r);
    }
    return best;
}

Json ReplayReport::to_json() const {
    Json j;
    j["id"] = id;
    j["pass"] = pass;
    j["max_deviation"] = max_deviation;
    j["first_divergence_tick"] = first_divergence_tick;
    j["agent_mismatch"] = agent_mismatch;
    j["outcome"] = outcome;
    return j;
}

ReplayReport replay_error(const StateDir& dir, int id, const CampaignContext& ctx,
                          const std::optional<std::string>& expected_agent) {
    ErrorScenario stored = dir.load_error(id);
    ReplayReport rep;
    rep.id = id;
    if (expected_agent && *expected_agent != stored.agent) rep.agent_mismatch = true;

    World world(stored.scenario, *ctx.net, *ctx.g);
    auto agent = make_agent(stored.agent);
    auto [trace, outcome] =
        run_scenario(world, *agent, stored.limits, stored.rng_seed);
    rep.outcome = to_string(outcome.kind);

    size_t n = std::min(trace.frames.size(), stored.trace.frames.size());
    for (size_t i = 0; i < n; ++i) {
        const auto& a = trace.frames[i].state.ego.pose;
        const auto& b = stored.trace.frames[i].state.ego.pose;
        rep.max_deviation = std::max(rep.max_deviation, std::hypot(a.x - b.x, a.y - b.y));
    }
    rep.pass = traces_identical(trace, stored.trace);
    if (!rep.pass) {
        rep.first_divergence_tick = static_cast<int>(n);
        for (size_t i = 0; i < n; ++i) {
            if (frame_to_json(trace.frames[i]).dump() !=
                frame_to_json(stored.trace.frames[i]).dump()) {
                rep.first_divergence_tick = stored.trace.frames[i].state.tick;
                break;
            }
        }
    }
    return rep;
}

}  // namespace sf
