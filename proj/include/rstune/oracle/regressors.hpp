#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rstune/rng.hpp"

namespace rstune::oracle {

enum class RegressorKind { tree, forest, knn };

inline std::string to_string(RegressorKind k) {
    switch (k) {
        case RegressorKind::tree: return "tree";
        case RegressorKind::forest: return "forest";
        case RegressorKind::knn: return "knn";
    }
    throw std::logic_error("unreachable");
}

inline RegressorKind regressor_from_string(const std::string& s) {
    if (s == "tree") return RegressorKind::tree;
    if (s == "forest") return RegressorKind::forest;
    if (s == "knn") return RegressorKind::knn;
    throw std::runtime_error("regressor: unknown kind " + s);
}

struct Hyperparams {
    std::string criterion = "mse";
    int max_depth = -1;  // -1 grows until pure
    int n_estimators = 100;
    std::string max_features = "all";
    int n_neighbors = 3;
    int p = 2;

    bool operator==(const Hyperparams&) const = default;
};

// Accepted hyperparameter values per regressor kind.
inline const std::vector<std::string>& grid_tree_criteria() {
    static const std::vector<std::string> v{"mse", "mae"};
    return v;
}
inline const std::vector<int>& grid_forest_depths() {
    static const std::vector<int> v{10, 20, -1};
    return v;
}
inline const std::vector<std::string>& grid_forest_features() {
    static const std::vector<std::string> v{"all", "sqrt"};
    return v;
}
inline const std::vector<int>& grid_forest_estimators() {
    static const std::vector<int> v{10, 20, 50, 100, 200};
    return v;
}
inline const std::vector<int>& grid_knn_neighbors() {
    static const std::vector<int> v{1, 2, 3, 4, 5, 6};
    return v;
}
inline const std::vector<int>& grid_knn_p() {
    static const std::vector<int> v{1, 2};
    return v;
}

template <typename T>
bool in_grid(const T& value, const std::vector<T>& grid) {
    return std::find(grid.begin(), grid.end(), value) != grid.end();
}

inline void validate_hyperparams(RegressorKind kind, const Hyperparams& hp) {
    switch (kind) {
        case RegressorKind::tree:
            if (!in_grid(hp.criterion, grid_tree_criteria()))
                throw std::runtime_error("tree: criterion outside the declared grid");
            return;
        case RegressorKind::forest:
            if (!in_grid(hp.criterion, grid_tree_criteria()))
                throw std::runtime_error("forest: criterion outside the declared grid");
            if (!in_grid(hp.max_depth, grid_forest_depths()))
                throw std::runtime_error("forest: max_depth outside the declared grid");
            if (!in_grid(hp.max_features, grid_forest_features()))
                throw std::runtime_error("forest: max_features outside the declared grid");
            if (!in_grid(hp.n_estimators, grid_forest_estimators()))
                throw std::runtime_error("forest: n_estimators outside the declared grid");
            return;
        case RegressorKind::knn:
            if (!in_grid(hp.n_neighbors, grid_knn_neighbors()))
                throw std::runtime_error("knn: n_neighbors outside the declared grid");
            if (!in_grid(hp.p, grid_knn_p()))
                throw std::runtime_error("knn: p outside the declared grid");
            return;
    }
    throw std::runtime_error("regressor: unknown kind");
}

// ---- CART regression tree --------------------------------------------------

/// Running sum of absolute deviations about the median, supporting one-sided
/// inserts so a split scan stays O(log n) per step.
class MedianAccumulator {
public:
    void insert(double v) {
        if (lo_.empty() || v <= *lo_.rbegin()) {
            lo_.insert(v);
            sum_lo_ += v;
        } else {
            hi_.insert(v);
            sum_hi_ += v;
        }
        rebalance();
    }

    void erase(double v) {
        auto it = lo_.find(v);
        if (it != lo_.end()) {
            lo_.erase(it);
            sum_lo_ -= v;
        } else {
            it = hi_.find(v);
            if (it == hi_.end()) throw std::logic_error("median accumulator: missing value");
            hi_.erase(it);
            sum_hi_ -= v;
        }
        rebalance();
    }

    [[nodiscard]] std::size_t size() const { return lo_.size() + hi_.size(); }

    [[nodiscard]] double median() const {
        if (lo_.empty()) throw std::logic_error("median accumulator: empty");
        return *lo_.rbegin();
    }

    [[nodiscard]] double abs_deviation() const {
        if (lo_.empty()) return 0.0;
        const double m = median();
        const auto nl = static_cast<double>(lo_.size());
        const auto nh = static_cast<double>(hi_.size());
        return (m * nl - sum_lo_) + (sum_hi_ - m * nh);
    }

private:
    void rebalance() {
        while (lo_.size() > hi_.size() + 1) {
            const auto it = std::prev(lo_.end());
            const double v = *it;
            lo_.erase(it);
            sum_lo_ -= v;
            hi_.insert(v);
            sum_hi_ += v;
        }
        while (hi_.size() > lo_.size()) {
            const auto it = hi_.begin();
            const double v = *it;
            hi_.erase(it);
            sum_hi_ -= v;
            lo_.insert(v);
            sum_lo_ += v;
        }
    }

    std::multiset<double> lo_, hi_;
    double sum_lo_ = 0.0, sum_hi_ = 0.0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1, right = -1;
};

struct TreeFitOptions {
    std::string criterion = "mse";
    int max_depth = -1;
    Rng* rng = nullptr;       // enables per-split feature subsampling
    int max_features = -1;    // -1 considers every feature
};

class DecisionTree {
public:
    std::vector<TreeNode> nodes;

    void fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
             const TreeFitOptions& opts) {
        if (x.empty() || x.size() != y.size())
            throw std::runtime_error("tree: empty or mismatched training data");
        nodes.clear();
        std::vector<int> idx(x.size());
        std::iota(idx.begin(), idx.end(), 0);
        build(x, y, opts, idx, 0);
    }

    [[nodiscard]] double predict(const std::vector<double>& x) const {
        int at = 0;
        while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(at)];
            at = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }

private:
    static double leaf_value(const std::string& criterion, std::vector<double> targets) {
        if (criterion == "mae") {
            const auto mid = targets.size() / 2;
            std::nth_element(targets.begin(), targets.begin() + mid, targets.end());
            if (targets.size() % 2 == 1) return targets[mid];
            const double upper = targets[mid];
            const double lower = *std::max_element(targets.begin(), targets.begin() + mid);
            return 0.5 * (lower + upper);
        }
        return std::accumulate(targets.begin(), targets.end(), 0.0) /
               static_cast<double>(targets.size());
    }

    struct Split {
        bool found = false;
        int feature = -1;
        double threshold = 0.0;
        double cost = 0.0;
    };

    static Split best_split(const std::vector<std::vector<double>>& x,
                            const std::vector<double>& y, const std::vector<int>& idx,
                            const std::vector<int>& feats, const std::string& criterion) {
        Split best;
        std::vector<std::pair<double, double>> vt(idx.size());
        for (int c : feats) {
            for (std::size_t i = 0; i < idx.size(); ++i)
                vt[i] = {x[static_cast<std::size_t>(idx[i])][static_cast<std::size_t>(c)],
                         y[static_cast<std::size_t>(idx[i])]};
            std::sort(vt.begin(), vt.end());
            if (vt.front().first == vt.back().first) continue;

            if (criterion == "mse") {
                double suml = 0.0, sumsql = 0.0;
                double sumr = 0.0, sumsqr = 0.0;
                for (const auto& [_, t] : vt) {
                    sumr += t;
                    sumsqr += t * t;
                }
                for (std::size_t i = 0; i + 1 < vt.size(); ++i) {
                    const double t = vt[i].second;
                    suml += t;
                    sumsql += t * t;
                    sumr -= t;
                    sumsqr -= t * t;
                    if (vt[i].first == vt[i + 1].first) continue;
                    const auto nl = static_cast<double>(i + 1);
                    const auto nr = static_cast<double>(vt.size() - i - 1);
                    const double cost = (sumsql - suml * suml / nl) + (sumsqr - sumr * sumr / nr);
                    const double thr = 0.5 * (vt[i].first + vt[i + 1].first);
                    if (!best.found || cost < best.cost) best = {true, c, thr, cost};
                }
            } else {
                MedianAccumulator left, right;
                for (const auto& [_, t] : vt) right.insert(t);
                for (std::size_t i = 0; i + 1 < vt.size(); ++i) {
                    const double t = vt[i].second;
                    right.erase(t);
                    left.insert(t);
                    if (vt[i].first == vt[i + 1].first) continue;
                    const double cost = left.abs_deviation() + right.abs_deviation();
                    const double thr = 0.5 * (vt[i].first + vt[i + 1].first);
                    if (!best.found || cost < best.cost) best = {true, c, thr, cost};
                }
            }
        }
        return best;
    }

    int build(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
              const TreeFitOptions& opts, const std::vector<int>& idx, int depth) {
        const int me = static_cast<int>(nodes.size());
        nodes.emplace_back();

        std::vector<double> targets;
        targets.reserve(idx.size());
        for (int i : idx) targets.push_back(y[static_cast<std::size_t>(i)]);
        const bool pure = std::all_of(targets.begin(), targets.end(),
                                      [&targets](double t) { return t == targets.front(); });

        if (pure || idx.size() < 2 || (opts.max_depth >= 0 && depth >= opts.max_depth)) {
            nodes[static_cast<std::size_t>(me)].value = leaf_value(opts.criterion, targets);
            return me;
        }

        const auto nf = static_cast<int>(x.front().size());
        std::vector<int> feats(static_cast<std::size_t>(nf));
        std::iota(feats.begin(), feats.end(), 0);
        if (opts.rng != nullptr && opts.max_features > 0 && opts.max_features < nf) {
            for (int i = 0; i < opts.max_features; ++i) {
                const auto j = i + static_cast<int>(opts.rng->below(
                                       static_cast<std::uint64_t>(nf - i)));
                std::swap(feats[static_cast<std::size_t>(i)], feats[static_cast<std::size_t>(j)]);
            }
            feats.resize(static_cast<std::size_t>(opts.max_features));
            std::sort(feats.begin(), feats.end());
        }

        const Split split = best_split(x, y, idx, feats, opts.criterion);
        if (!split.found) {
            nodes[static_cast<std::size_t>(me)].value = leaf_value(opts.criterion, targets);
            return me;
        }

        std::vector<int> left_idx, right_idx;
        for (int i : idx) {
            const double v =
                x[static_cast<std::size_t>(i)][static_cast<std::size_t>(split.feature)];
            (v <= split.threshold ? left_idx : right_idx).push_back(i);
        }

        nodes[static_cast<std::size_t>(me)].feature = split.feature;
        nodes[static_cast<std::size_t>(me)].threshold = split.threshold;
        const int l = build(x, y, opts, left_idx, depth + 1);
        const int r = build(x, y, opts, right_idx, depth + 1);
        nodes[static_cast<std::size_t>(me)].left = l;
        nodes[static_cast<std::size_t>(me)].right = r;
        return me;
    }
};

// ---- Random forest ----------------------------------------------------------

class RandomForest {
public:
    std::vector<DecisionTree> trees;

    void fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
             const Hyperparams& hp, std::uint64_t seed) {
        if (x.empty()) throw std::runtime_error("forest: empty training data");
        trees.assign(static_cast<std::size_t>(hp.n_estimators), {});
        const auto nf = static_cast<int>(x.front().size());
        int max_features = -1;
        if (hp.max_features == "sqrt")
            max_features = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(nf))));

        for (std::size_t t = 0; t < trees.size(); ++t) {
            Rng rng(derive_seed(seed, 0xF0, t));
            std::vector<std::vector<double>> bx;
            std::vector<double> by;
            bx.reserve(x.size());
            by.reserve(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const auto pick = rng.below(x.size());
                bx.push_back(x[pick]);
                by.push_back(y[pick]);
            }
            TreeFitOptions opts;
            opts.criterion = hp.criterion;
            opts.max_depth = hp.max_depth;
            opts.rng = &rng;
            opts.max_features = max_features;
            trees[t].fit(bx, by, opts);
        }
    }

    [[nodiscard]] double predict(const std::vector<double>& x) const {
        double sum = 0.0;
        for (const auto& t : trees) sum += t.predict(x);
        return sum / static_cast<double>(trees.size());
    }
};

// ---- k nearest neighbors -----------------------------------------------------

class KnnRegressor {
public:
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    int k = 3;
    int p = 2;

    void fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
             const Hyperparams& hp) {
        if (xs.empty()) throw std::runtime_error("knn: empty training data");
        x = xs;
        y = ys;
        k = hp.n_neighbors;
        p = hp.p;
    }

    [[nodiscard]] double predict(const std::vector<double>& q) const {
        std::vector<std::pair<double, int>> dist;
        dist.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            double d = 0.0;
            for (std::size_t c = 0; c < q.size(); ++c) {
                const double diff = std::abs(x[i][c] - q[c]);
                d += p == 1 ? diff : diff * diff;
            }
            dist.emplace_back(d, static_cast<int>(i));
        }
        const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
        std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
        double sum = 0.0;
        for (std::size_t i = 0; i < kk; ++i) sum += y[static_cast<std::size_t>(dist[i].second)];
        return sum / static_cast<double>(kk);
    }
};

// ---- Tagged wrapper ----------------------------------------------------------

struct AnyRegressor {
    RegressorKind kind = RegressorKind::tree;
    DecisionTree tree;
    RandomForest forest;
    KnnRegressor knn;

    void fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
             const Hyperparams& hp, std::uint64_t seed) {
        validate_hyperparams(kind, hp);
        switch (kind) {
            case RegressorKind::tree: {
                TreeFitOptions opts;
                opts.criterion = hp.criterion;
                opts.max_depth = hp.max_depth;
                tree.fit(x, y, opts);
                return;
            }
            case RegressorKind::forest:
                forest.fit(x, y, hp, seed);
                return;
            case RegressorKind::knn:
                knn.fit(x, y, hp);
                return;
        }
    }

    [[nodiscard]] double predict(const std::vector<double>& x) const {
        switch (kind) {
            case RegressorKind::tree: return tree.predict(x);
            case RegressorKind::forest: return forest.predict(x);
            case RegressorKind::knn: return knn.predict(x);
        }
        throw std::logic_error("unreachable");
    }
};

// ---- JSON serialization -------------------------------------------------------

inline nlohmann::json tree_to_json(const DecisionTree& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes)
        nodes.push_back({{"f", n.feature},
                         {"t", n.threshold},
                         {"v", n.value},
                         {"l", n.left},
                         {"r", n.right}});
    return nodes;
}

inline DecisionTree tree_from_json(const nlohmann::json& j) {
    DecisionTree t;
    for (const auto& n : j)
        t.nodes.push_back({n.at("f").get<int>(), n.at("t").get<double>(), n.at("v").get<double>(),
                           n.at("l").get<int>(), n.at("r").get<int>()});
    return t;
}

inline nlohmann::json hyperparams_to_json(const Hyperparams& hp) {
    return {{"criterion", hp.criterion},       {"max_depth", hp.max_depth},
            {"n_estimators", hp.n_estimators}, {"max_features", hp.max_features},
            {"n_neighbors", hp.n_neighbors},   {"p", hp.p}};
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
    Hyperparams hp;
    hp.criterion = j.value("criterion", hp.criterion);
    hp.max_depth = j.value("max_depth", hp.max_depth);
    hp.n_estimators = j.value("n_estimators", hp.n_estimators);
    hp.max_features = j.value("max_features", hp.max_features);
    hp.n_neighbors = j.value("n_neighbors", hp.n_neighbors);
    hp.p = j.value("p", hp.p);
    return hp;
}

inline nlohmann::json regressor_to_json(const AnyRegressor& m) {
    nlohmann::json j{{"kind", to_string(m.kind)}};
    switch (m.kind) {
        case RegressorKind::tree:
            j["tree"] = tree_to_json(m.tree);
            break;
        case RegressorKind::forest: {
            nlohmann::json trees = nlohmann::json::array();
            for (const auto& t : m.forest.trees) trees.push_back(tree_to_json(t));
            j["trees"] = std::move(trees);
            break;
        }
        case RegressorKind::knn:
            j["x"] = m.knn.x;
            j["y"] = m.knn.y;
            j["k"] = m.knn.k;
            j["p"] = m.knn.p;
            break;
    }
    return j;
}

inline AnyRegressor regressor_from_json(const nlohmann::json& j) {
    AnyRegressor m;
    m.kind = regressor_from_string(j.at("kind").get<std::string>());
    switch (m.kind) {
        case RegressorKind::tree:
            m.tree = tree_from_json(j.at("tree"));
            break;
        case RegressorKind::forest:
            for (const auto& t : j.at("trees")) m.forest.trees.push_back(tree_from_json(t));
            break;
        case RegressorKind::knn:
            m.knn.x = j.at("x").get<std::vector<std::vector<double>>>();
            m.knn.y = j.at("y").get<std::vector<double>>();
            m.knn.k = j.at("k").get<int>();
            m.knn.p = j.at("p").get<int>();
            break;
    }
    return m;
}

}  // namespace rstune::oracle
