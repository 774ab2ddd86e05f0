#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrec/dataset.hpp"
#include "mmrec/error.hpp"
#include "mmrec/graph.hpp"
#include "mmrec/model.hpp"
#include "mmrec/parallel.hpp"
#include "mmrec/rng.hpp"

namespace mmrec {

/// The held-out item plus sampled negatives one user is ranked against.
struct CandidateSet {
    std::int32_t user = 0;
    std::int32_t target = 0;
    std::vector<std::int32_t> negatives;  // no duplicates, never the target
};

enum class TargetSet { Test, Validation };

struct EvalProtocol {
    std::vector<std::int32_t> ks = {10, 20};
    std::int32_t n_negatives = 100;
    std::uint64_t seed = 0;
    ScoringMode mode = ScoringMode::DotProduct;
    bool fixed_gate = false;
    std::int32_t n_layers = 2;
    TargetSet target_set = TargetSet::Test;
    int threads = 1;
};

struct EvalReport {
    std::vector<std::int32_t> ks;
    std::vector<double> recall;  // parallel to ks
    std::vector<double> ndcg;    // parallel to ks
    std::int64_t users = 0;
    std::int32_t n_negatives = 0;
    std::uint64_t seed = 0;

    double recall_at(std::int32_t k) const {
        for (std::size_t j = 0; j < ks.size(); ++j)
            if (ks[j] == k) return recall[j];
        throw ConfigError("no recall recorded for k=" + std::to_string(k));
    }
    double ndcg_at(std::int32_t k) const {
        for (std::size_t j = 0; j < ks.size(); ++j)
            if (ks[j] == k) return ndcg[j];
        throw ConfigError("no ndcg recorded for k=" + std::to_string(k));
    }
};

namespace detail {

inline CandidateSet build_candidates_for_target(const SplitDataset& split, std::int32_t user,
                                                std::int32_t target, std::int32_t n_neg,
                                                std::uint64_t seed, rng::Stream stream) {
    const auto& trained = split.train_pos[static_cast<std::size_t>(user)];
    std::vector<std::int32_t> eligible;
    eligible.reserve(static_cast<std::size_t>(split.n_items));
    for (std::int32_t i = 0; i < split.n_items; ++i) {
        if (i == target) continue;
        if (std::binary_search(trained.begin(), trained.end(), i)) continue;
        eligible.push_back(i);
    }
    if (eligible.empty()) {
        throw ProtocolError("user " + std::to_string(user) + " has no eligible negative items");
    }
    CandidateSet set;
    set.user = user;
    set.target = target;
    const auto m = static_cast<std::uint64_t>(eligible.size());
    const auto want = std::min<std::uint64_t>(static_cast<std::uint64_t>(n_neg), m);
    rng::Sequence seq(seed, stream, static_cast<std::uint64_t>(user));
    for (std::uint64_t j = 0; j < want; ++j) {
        const std::uint64_t pick = j + seq.next_bounded(m - j);
        std::swap(eligible[j], eligible[pick]);
    }
    set.negatives.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(want));
    return set;
}

}  // namespace detail

inline CandidateSet build_candidate_set(const SplitDataset& split, std::int32_t user,
                                        std::int32_t n_neg, std::uint64_t seed) {
    if (user < 0 || user >= split.n_users) {
        throw ShapeError("build_candidate_set: user " + std::to_string(user) + " out of range");
    }
    const std::int32_t target = split.test_item[static_cast<std::size_t>(user)];
    if (target < 0) {
        throw ProtocolError("user " + std::to_string(user) + " has no held-out test item");
    }
    return detail::build_candidates_for_target(split, user, target, n_neg, seed,
                                               rng::Stream::eval_candidates);
}

/// Rank under descending score with ties broken by ascending candidate
/// position. PRE: candidates are ordered by ascending item id, so position
/// order is the tie order.
inline std::int64_t rank_of_target(std::span<const double> scores, std::size_t target_pos) {
    if (target_pos >= scores.size()) {
        throw ShapeError("rank_of_target: target position out of range");
    }
    const double t = scores[target_pos];
    if (!std::isfinite(t)) throw NumericError("rank_of_target: non-finite target score");
    std::int64_t rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (!std::isfinite(scores[j])) throw NumericError("rank_of_target: non-finite score");
        if (scores[j] > t || (scores[j] == t && j < target_pos)) ++rank;
    }
    return rank;
}

struct MetricPair {
    double recall = 0.0;
    double ndcg = 0.0;
};

/// Single relevant item: recall is the hit indicator, ndcg its discounted
/// gain with ideal value 1.
inline MetricPair metrics_at_k(std::int64_t rank, std::int32_t k) {
    if (rank < 1 || k < 1) throw ConfigError("metrics_at_k: rank and k must be at least 1");
    if (rank > k) return {0.0, 0.0};
    return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

inline EvalReport evaluate(const ModelParams& params, const BipartiteGraph& graph,
                           const SplitDataset& split, const DenseMatrix& img_feats,
                           const DenseMatrix& txt_feats, const EvalProtocol& protocol) {
    const auto& targets =
        protocol.target_set == TargetSet::Test ? split.test_item : split.validation_item;
    const rng::Stream stream = protocol.target_set == TargetSet::Test
                                   ? rng::Stream::eval_candidates
                                   : rng::Stream::validation_candidates;

    const DenseMatrix fused =
        fuse_all_items(params, img_feats, txt_feats, protocol.fixed_gate, protocol.threads);
    const LayerEmbeddings layers =
        compute_node_embeddings(params, graph, protocol.n_layers, protocol.threads);
    const DenseMatrix& final_layer = layers.final_layer();

    // Per-user ranks are computed in parallel into disjoint slots, then
    // aggregated in fixed user order so thread count cannot change the means.
    std::vector<std::int64_t> rank_of_user(static_cast<std::size_t>(split.n_users), -1);
    parallel_for_each(split.n_users, protocol.threads, [&](std::int64_t u) {
        const std::int32_t target = targets[static_cast<std::size_t>(u)];
        if (target < 0) return;
        CandidateSet set = detail::build_candidates_for_target(
            split, static_cast<std::int32_t>(u), target, protocol.n_negatives, protocol.seed,
            stream);
        std::vector<std::int32_t> candidates = std::move(set.negatives);
        candidates.push_back(set.target);
        std::sort(candidates.begin(), candidates.end());
        const std::size_t target_pos = static_cast<std::size_t>(
            std::lower_bound(candidates.begin(), candidates.end(), set.target) -
            candidates.begin());

        DenseVector user_repr(final_layer.row(u).begin(), final_layer.row(u).end());
        if (protocol.mode == ScoringMode::PolicyTransform) {
            user_repr = policy_transform(params, user_repr);
        }
        std::vector<double> scores(candidates.size());
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            scores[c] = dot(user_repr, fused.row(candidates[c]));
        }
        rank_of_user[static_cast<std::size_t>(u)] = rank_of_target(scores, target_pos);
    });

    EvalReport report;
    report.ks = protocol.ks;
    report.recall.assign(protocol.ks.size(), 0.0);
    report.ndcg.assign(protocol.ks.size(), 0.0);
    report.n_negatives = protocol.n_negatives;
    report.seed = protocol.seed;
    for (std::int32_t u = 0; u < split.n_users; ++u) {
        const std::int64_t rank = rank_of_user[static_cast<std::size_t>(u)];
        if (rank < 0) continue;
        ++report.users;
        for (std::size_t j = 0; j < protocol.ks.size(); ++j) {
            const MetricPair m = metrics_at_k(rank, protocol.ks[j]);
            report.recall[j] += m.recall;
            report.ndcg[j] += m.ndcg;
        }
    }
    if (report.users == 0) {
        throw ProtocolError("evaluation target set is empty");
    }
    for (std::size_t j = 0; j < protocol.ks.size(); ++j) {
        report.recall[j] /= static_cast<double>(report.users);
        report.ndcg[j] /= static_cast<double>(report.users);
    }
    return report;
}

/// One-line machine-readable form, key order fixed.
inline std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        j["recall@" + std::to_string(report.ks[i])] = report.recall[i];
        j["ndcg@" + std::to_string(report.ks[i])] = report.ndcg[i];
    }
    j["users"] = report.users;
    j["negatives"] = report.n_negatives;
    j["seed"] = report.seed;
    return j.dump();
}

}  // namespace mmrec
