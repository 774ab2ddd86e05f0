// Independent reference implementations used to cross-check the library.
// These are deliberately naive (dense matrices, repeat-until-stable loops,
// textbook formulas) so that agreement with the optimized code is meaningful.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmrec/dataset.hpp"
#include "mmrec/features.hpp"
#include "mmrec/graph.hpp"
#include "mmrec/linalg.hpp"

namespace oracles {

// Dense n_nodes x n_nodes symmetric normalized adjacency for a bipartite
// edge list, applied `layers` times to X.  Mirrors D^(-1/2) A D^(-1/2)
// with 0 replacing 1/sqrt(0) for isolated nodes.
inline mmrec::DenseMatrix dense_propagate(std::int64_t n_users, std::int64_t n_items,
                                          const std::vector<std::pair<std::int32_t, std::int32_t>>& edges,
                                          const mmrec::DenseMatrix& x, int layers) {
    const std::int64_t n = n_users + n_items;
    std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
    mmrec::DenseMatrix a(n, n);
    for (const auto& [u, i] : edges) {
        const std::int64_t iu = u;
        const std::int64_t ii = n_users + i;
        a.at(iu, ii) = 1.0;
        a.at(ii, iu) = 1.0;
    }
    for (std::int64_t r = 0; r < n; ++r) {
        double d = 0.0;
        for (std::int64_t c = 0; c < n; ++c) d += a.at(r, c);
        deg[static_cast<std::size_t>(r)] = d;
    }
    mmrec::DenseMatrix norm(n, n);
    for (std::int64_t r = 0; r < n; ++r) {
        for (std::int64_t c = 0; c < n; ++c) {
            const double dr = deg[static_cast<std::size_t>(r)];
            const double dc = deg[static_cast<std::size_t>(c)];
            if (a.at(r, c) != 0.0 && dr > 0.0 && dc > 0.0) {
                norm.at(r, c) = 1.0 / std::sqrt(dr * dc);
            }
        }
    }
    mmrec::DenseMatrix cur = x;
    for (int l = 0; l < layers; ++l) {
        mmrec::DenseMatrix next(cur.rows, cur.cols);
        for (std::int64_t r = 0; r < n; ++r) {
            for (std::int64_t c = 0; c < n; ++c) {
                const double w = norm.at(r, c);
                if (w == 0.0) continue;
                for (std::int64_t k = 0; k < cur.cols; ++k) {
                    next.at(r, k) += w * cur.at(c, k);
                }
            }
        }
        cur = std::move(next);
    }
    return cur;
}

// Repeat-until-stable k-core filter over token pairs.  Degree counts
// distinct partners, mirroring the contract of the fast filter.
inline std::vector<std::pair<std::string, std::string>> naive_k_core(
    std::vector<std::pair<std::string, std::string>> records, int k) {
    for (;;) {
        std::map<std::string, std::set<std::string>> user_items;
        std::map<std::string, std::set<std::string>> item_users;
        for (const auto& [u, i] : records) {
            user_items[u].insert(i);
            item_users[i].insert(u);
        }
        std::vector<std::pair<std::string, std::string>> kept;
        for (const auto& [u, i] : records) {
            if (static_cast<int>(user_items[u].size()) >= k &&
                static_cast<int>(item_users[i].size()) >= k) {
                kept.push_back({u, i});
            }
        }
        if (kept.size() == records.size()) return records;
        records = std::move(kept);
    }
}

// Scalar Adam reference: one parameter, textbook update.
struct ScalarAdam {
    double m = 0.0;
    double v = 0.0;
    double t = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    double step(double theta, double grad, double lr) {
        t += 1.0;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad * grad;
        const double mh = m / (1.0 - std::pow(beta1, t));
        const double vh = v / (1.0 - std::pow(beta2, t));
        return theta - lr * mh / (std::sqrt(vh) + eps);
    }
};

// Random bipartite edge list with no duplicate pairs.  Degrees are
// uncontrolled; used where only structural agreement matters.
inline std::vector<std::pair<std::int32_t, std::int32_t>> random_edges(
    std::mt19937& gen, std::int32_t n_users, std::int32_t n_items, std::int32_t n_edges) {
    std::set<std::pair<std::int32_t, std::int32_t>> seen;
    std::uniform_int_distribution<std::int32_t> du(0, n_users - 1);
    std::uniform_int_distribution<std::int32_t> di(0, n_items - 1);
    const std::int64_t cap = static_cast<std::int64_t>(n_users) * n_items;
    std::int32_t want = static_cast<std::int32_t>(std::min<std::int64_t>(n_edges, cap));
    int attempts = 0;
    while (static_cast<std::int32_t>(seen.size()) < want && attempts < 100000) {
        seen.insert({du(gen), di(gen)});
        ++attempts;
    }
    return {seen.begin(), seen.end()};
}

// Hand-built split with every field populated directly, bypassing the
// encode/split pipeline.  Each user gets `train_per_user` train items and
// one distinct test item, all chosen without replacement.
inline mmrec::SplitDataset make_split(std::mt19937& gen, std::int32_t n_users,
                                      std::int32_t n_items, std::int32_t train_per_user,
                                      bool with_validation = false) {
    mmrec::SplitDataset split;
    split.n_users = n_users;
    split.n_items = n_items;
    split.train_pos.resize(static_cast<std::size_t>(n_users));
    split.test_item.assign(static_cast<std::size_t>(n_users), -1);
    split.validation_item.assign(static_cast<std::size_t>(n_users), -1);
    std::vector<std::int32_t> items(static_cast<std::size_t>(n_items));
    for (std::int32_t i = 0; i < n_items; ++i) items[static_cast<std::size_t>(i)] = i;
    const std::int32_t extra = with_validation ? 2 : 1;
    for (std::int32_t u = 0; u < n_users; ++u) {
        std::shuffle(items.begin(), items.end(), gen);
        for (std::int32_t j = 0; j < train_per_user; ++j) {
            const std::int32_t it = items[static_cast<std::size_t>(j)];
            split.train.push_back({u, it, static_cast<std::uint64_t>(j)});
            split.train_pos[static_cast<std::size_t>(u)].push_back(it);
        }
        std::sort(split.train_pos[static_cast<std::size_t>(u)].begin(),
                  split.train_pos[static_cast<std::size_t>(u)].end());
        split.test_item[static_cast<std::size_t>(u)] = items[static_cast<std::size_t>(train_per_user)];
        split.test.push_back({u, items[static_cast<std::size_t>(train_per_user)]});
        if (with_validation && extra == 2) {
            const std::int32_t v = items[static_cast<std::size_t>(train_per_user) + 1];
            split.validation_item[static_cast<std::size_t>(u)] = v;
            split.validation.push_back({u, v});
        }
    }
    return split;
}

// Random item feature matrix with IID standard normal entries.
inline mmrec::FeatureMatrix random_features(std::mt19937& gen, std::int64_t rows, std::int64_t cols) {
    mmrec::FeatureMatrix f(rows, cols);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double& v : f.data) v = nd(gen);
    return f;
}

}  // namespace oracles
