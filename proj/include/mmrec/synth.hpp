#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "mmrec/dataset.hpp"
#include "mmrec/error.hpp"
#include "mmrec/features.hpp"
#include "mmrec/rng.hpp"

namespace mmrec {

/// Synthetic corpus generator. Users and items are assigned to latent
/// clusters; each user's interactions concentrate on a "core" subset of the
/// cluster's items so the corpus both survives k-core filtering and carries
/// a signal a model can learn. Item features are the cluster centroid plus
/// noise per modality; a modality can be switched to pure noise to exercise
/// fusion-gate behavior.
struct SynthOptions {
    std::int32_t n_users = 50;
    std::int32_t n_items = 100;
    std::int32_t per_user = 8;
    std::int32_t img_dim = 32;
    std::int32_t txt_dim = 16;
    std::int32_t n_clusters = 5;
    bool img_signal = true;
    bool txt_signal = true;
    double noise_scale = 0.25;
    std::uint64_t seed = 0;
};

struct SynthResult {
    RawInteractions interactions;             // tokens only; timestamps assigned downstream
    FeatureMatrix img_features;               // n_items x img_dim, row r = item r
    FeatureMatrix txt_features;               // n_items x txt_dim
    std::vector<std::string> user_tokens;     // index -> token
    std::vector<std::string> item_tokens;
};

namespace detail {

inline std::string synth_token(char prefix, std::int32_t index, std::size_t width) {
    std::string digits = std::to_string(index);
    std::string out(1, prefix);
    out.append(width > digits.size() ? width - digits.size() : 0, '0');
    out.append(digits);
    return out;
}

inline std::size_t token_width(std::int32_t n) {
    const std::size_t digits = std::to_string(n > 0 ? n - 1 : 0).size();
    return std::max<std::size_t>(4, digits);
}

inline FeatureMatrix synth_modality(const SynthOptions& opt, std::int32_t dim, bool signal,
                                    std::uint64_t modality_key,
                                    const std::vector<std::int32_t>& item_cluster) {
    // Cluster centroids first, then per-item noise around them.
    DenseMatrix centroids(opt.n_clusters, dim);
    for (std::int32_t c = 0; c < opt.n_clusters; ++c) {
        for (std::int32_t k = 0; k < dim; ++k) {
            const std::uint64_t a = rng::draw(opt.seed, rng::Stream::synth_features, modality_key,
                                              static_cast<std::uint64_t>(c),
                                              static_cast<std::uint64_t>(k), 0ULL);
            const std::uint64_t b = rng::draw(opt.seed, rng::Stream::synth_features, modality_key,
                                              static_cast<std::uint64_t>(c),
                                              static_cast<std::uint64_t>(k), 1ULL);
            centroids.at(c, k) = rng::to_normal(a, b);
        }
    }
    FeatureMatrix m(opt.n_items, dim);
    for (std::int32_t i = 0; i < opt.n_items; ++i) {
        for (std::int32_t k = 0; k < dim; ++k) {
            const std::uint64_t a = rng::draw(opt.seed, rng::Stream::synth_features, modality_key,
                                              1000ULL + static_cast<std::uint64_t>(i),
                                              static_cast<std::uint64_t>(k), 0ULL);
            const std::uint64_t b = rng::draw(opt.seed, rng::Stream::synth_features, modality_key,
                                              1000ULL + static_cast<std::uint64_t>(i),
                                              static_cast<std::uint64_t>(k), 1ULL);
            const double noise = rng::to_normal(a, b);
            m.at(i, k) = signal
                             ? centroids.at(item_cluster[static_cast<std::size_t>(i)], k) +
                                   opt.noise_scale * noise
                             : noise;
        }
    }
    return m;
}

}  // namespace detail

inline SynthResult synth_generate(const SynthOptions& opt) {
    if (opt.n_users < 1 || opt.n_items < 1) throw ConfigError("synth: need at least one user and item");
    if (opt.per_user > opt.n_items) {
        throw ConfigError("synth: per_user (" + std::to_string(opt.per_user) +
                          ") exceeds n_items (" + std::to_string(opt.n_items) + ")");
    }
    if (opt.n_clusters < 1) throw ConfigError("synth: need at least one cluster");

    const std::int32_t n_clusters = std::min({opt.n_clusters, opt.n_users, opt.n_items});

    SynthResult result;
    const std::size_t uw = detail::token_width(opt.n_users);
    const std::size_t iw = detail::token_width(opt.n_items);
    result.user_tokens.reserve(static_cast<std::size_t>(opt.n_users));
    result.item_tokens.reserve(static_cast<std::size_t>(opt.n_items));
    for (std::int32_t u = 0; u < opt.n_users; ++u)
        result.user_tokens.push_back(detail::synth_token('u', u, uw));
    for (std::int32_t i = 0; i < opt.n_items; ++i)
        result.item_tokens.push_back(detail::synth_token('i', i, iw));

    std::vector<std::int32_t> item_cluster(static_cast<std::size_t>(opt.n_items));
    std::vector<std::vector<std::int32_t>> cluster_items(static_cast<std::size_t>(n_clusters));
    for (std::int32_t i = 0; i < opt.n_items; ++i) {
        const std::int32_t c = i % n_clusters;
        item_cluster[static_cast<std::size_t>(i)] = c;
        cluster_items[static_cast<std::size_t>(c)].push_back(i);
    }

    // Interactions: per user, a rotated window over the cluster's core items
    // plus a few exploratory picks. The rotation spreads core-item degrees
    // evenly so the corpus holds up under k-core filtering.
    for (std::int32_t u = 0; u < opt.n_users; ++u) {
        const std::int32_t c = u % n_clusters;
        const std::int32_t rank = u / n_clusters;
        const auto& members = cluster_items[static_cast<std::size_t>(c)];
        const auto m_core = static_cast<std::int32_t>((members.size() + 1) / 2);

        const std::int32_t n_explore = std::min(opt.per_user, std::max(1, opt.per_user / 8));
        const std::int32_t n_core_picks = opt.per_user - n_explore;

        std::vector<std::int32_t> picks;
        std::unordered_set<std::int32_t> picked;
        auto take = [&](std::int32_t item) {
            if (picked.insert(item).second) picks.push_back(item);
        };
        // core window, then the cluster tail, both rotated by cluster rank
        for (std::int32_t k = 0; k < m_core && static_cast<std::int32_t>(picks.size()) < n_core_picks; ++k) {
            take(members[static_cast<std::size_t>((rank + k) % m_core)]);
        }
        for (std::size_t k = static_cast<std::size_t>(m_core);
             k < members.size() && static_cast<std::int32_t>(picks.size()) < n_core_picks; ++k) {
            take(members[(static_cast<std::size_t>(rank) + k) % members.size()]);
        }
        // spill into the global catalog if the cluster is too small
        for (std::uint64_t attempt = 0;
             static_cast<std::int32_t>(picks.size()) < n_core_picks; ++attempt) {
            const std::uint64_t word = rng::draw(opt.seed, rng::Stream::synth_interactions,
                                                 static_cast<std::uint64_t>(u), 0ULL, attempt);
            take(static_cast<std::int32_t>(rng::to_bounded(word, static_cast<std::uint64_t>(opt.n_items))));
        }
        for (std::uint64_t attempt = 0;
             static_cast<std::int32_t>(picks.size()) < opt.per_user; ++attempt) {
            const std::uint64_t word = rng::draw(opt.seed, rng::Stream::synth_interactions,
                                                 static_cast<std::uint64_t>(u), 1ULL, attempt);
            take(static_cast<std::int32_t>(rng::to_bounded(word, static_cast<std::uint64_t>(opt.n_items))));
        }

        for (std::int32_t item : picks) {
            result.interactions.records.push_back(
                {result.user_tokens[static_cast<std::size_t>(u)],
                 result.item_tokens[static_cast<std::size_t>(item)], std::nullopt});
        }
    }

    result.img_features = detail::synth_modality(opt, opt.img_dim, opt.img_signal, 1, item_cluster);
    result.txt_features = detail::synth_modality(opt, opt.txt_dim, opt.txt_signal, 2, item_cluster);
    return result;
}

}  // namespace mmrec
