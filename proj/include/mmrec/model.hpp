#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmrec/dataset.hpp"
#include "mmrec/error.hpp"
#include "mmrec/graph.hpp"
#include "mmrec/linalg.hpp"
#include "mmrec/parallel.hpp"
#include "mmrec/rng.hpp"

namespace mmrec {

struct ModelDims {
    std::int32_t n_users = 0;
    std::int32_t n_items = 0;
    std::int32_t embed_dim = 64;
    std::int32_t img_dim = 0;
    std::int32_t txt_dim = 0;
    std::int32_t policy_hidden = 128;
};

/// All trainable tensors. Compute is double precision; files store float32.
struct ModelParams {
    ModelDims dims;
    DenseMatrix user_emb;    // n_users x d, graph layer-0 rows for user nodes
    DenseMatrix item_emb;    // n_items x d, graph layer-0 rows for item nodes
    DenseMatrix img_proj_w;  // d x img_dim
    DenseVector img_proj_b;  // d
    DenseMatrix txt_proj_w;  // d x txt_dim
    DenseVector txt_proj_b;  // d
    DenseMatrix gate_w;      // d x 2d, acts on [img_act; txt_act]
    DenseVector gate_b;      // d
    DenseMatrix policy_w1;   // h x d
    DenseVector policy_b1;   // h
    DenseMatrix policy_w2;   // d x h
    DenseVector policy_b2;   // d
};

enum class ScoringMode { DotProduct, PolicyTransform };

/// Named view over one tensor; the order of tensor_refs() is the canonical
/// tensor order for checkpoints, optimizer state, and gradient checks.
struct TensorRef {
    std::string name;
    double* data;
    std::size_t size;
    std::vector<std::int64_t> shape;
};

inline std::vector<TensorRef> tensor_refs(ModelParams& p) {
    auto mat = [](const char* name, DenseMatrix& m) {
        return TensorRef{name, m.data.data(), m.data.size(), {m.rows, m.cols}};
    };
    auto vec = [](const char* name, DenseVector& v) {
        return TensorRef{name, v.data(), v.size(), {static_cast<std::int64_t>(v.size())}};
    };
    return {
        mat("user_emb", p.user_emb),     mat("item_emb", p.item_emb),
        mat("img_proj_w", p.img_proj_w), vec("img_proj_b", p.img_proj_b),
        mat("txt_proj_w", p.txt_proj_w), vec("txt_proj_b", p.txt_proj_b),
        mat("gate_w", p.gate_w),         vec("gate_b", p.gate_b),
        mat("policy_w1", p.policy_w1),   vec("policy_b1", p.policy_b1),
        mat("policy_w2", p.policy_w2),   vec("policy_b2", p.policy_b2),
    };
}

inline ModelParams make_param_shapes(const ModelDims& dims) {
    if (dims.n_users < 1 || dims.n_items < 1 || dims.embed_dim < 1 || dims.img_dim < 1 ||
        dims.txt_dim < 1 || dims.policy_hidden < 1) {
        throw ConfigError("model dims must all be at least 1");
    }
    ModelParams p;
    p.dims = dims;
    const std::int64_t d = dims.embed_dim;
    p.user_emb = DenseMatrix(dims.n_users, d);
    p.item_emb = DenseMatrix(dims.n_items, d);
    p.img_proj_w = DenseMatrix(d, dims.img_dim);
    p.img_proj_b.assign(static_cast<std::size_t>(d), 0.0);
    p.txt_proj_w = DenseMatrix(d, dims.txt_dim);
    p.txt_proj_b.assign(static_cast<std::size_t>(d), 0.0);
    p.gate_w = DenseMatrix(d, 2 * d);
    p.gate_b.assign(static_cast<std::size_t>(d), 0.0);
    p.policy_w1 = DenseMatrix(dims.policy_hidden, d);
    p.policy_b1.assign(static_cast<std::size_t>(dims.policy_hidden), 0.0);
    p.policy_w2 = DenseMatrix(d, dims.policy_hidden);
    p.policy_b2.assign(static_cast<std::size_t>(d), 0.0);
    return p;
}

inline ModelParams zeros_like(const ModelParams& other) { return make_param_shapes(other.dims); }

/// Weights: uniform with the ±√(6/(fan_in+fan_out)) bound. Embeddings:
/// normal, std 0.1. Biases zero. Every entry is a pure function of
/// (seed, tensor index, entry index), so init order is irrelevant.
inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
    ModelParams p = make_param_shapes(dims);
    auto refs = tensor_refs(p);
    for (std::size_t t = 0; t < refs.size(); ++t) {
        TensorRef& ref = refs[t];
        const bool is_embedding = ref.name == "user_emb" || ref.name == "item_emb";
        const bool is_bias = ref.shape.size() == 1;
        if (is_bias) continue;  // zeros from make_param_shapes
        if (is_embedding) {
            for (std::size_t e = 0; e < ref.size; ++e) {
                const std::uint64_t a = rng::draw(seed, rng::Stream::param_init,
                                                  static_cast<std::uint64_t>(t),
                                                  static_cast<std::uint64_t>(e), 0ULL);
                const std::uint64_t b = rng::draw(seed, rng::Stream::param_init,
                                                  static_cast<std::uint64_t>(t),
                                                  static_cast<std::uint64_t>(e), 1ULL);
                ref.data[e] = 0.1 * rng::to_normal(a, b);
            }
        } else {
            const double fan_in = static_cast<double>(ref.shape[1]);
            const double fan_out = static_cast<double>(ref.shape[0]);
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (std::size_t e = 0; e < ref.size; ++e) {
                const std::uint64_t a = rng::draw(seed, rng::Stream::param_init,
                                                  static_cast<std::uint64_t>(t),
                                                  static_cast<std::uint64_t>(e), 0ULL);
                ref.data[e] = limit * (2.0 * rng::to_unit(a) - 1.0);
            }
        }
    }
    return p;
}

inline std::pair<DenseVector, DenseVector> project_modalities(const ModelParams& p,
                                                              std::span<const double> x_img,
                                                              std::span<const double> x_txt) {
    DenseVector v_img = relu(affine(p.img_proj_w, x_img, p.img_proj_b));
    DenseVector v_txt = relu(affine(p.txt_proj_w, x_txt, p.txt_proj_b));
    return {std::move(v_img), std::move(v_txt)};
}

/// g = sigmoid(gate_w [v_img; v_txt] + gate_b); z[k] interpolates between the
/// modalities and is clamped so betweenness holds exactly despite rounding.
inline std::pair<DenseVector, DenseVector> gated_fusion(const ModelParams& p,
                                                        std::span<const double> v_img,
                                                        std::span<const double> v_txt,
                                                        bool fixed_gate = false) {
    const auto d = static_cast<std::size_t>(p.dims.embed_dim);
    if (v_img.size() != d || v_txt.size() != d) {
        throw ShapeError("gated_fusion: inputs must have length " + std::to_string(d));
    }
    DenseVector g;
    if (fixed_gate) {
        g.assign(d, 0.5);
    } else {
        DenseVector cat(2 * d);
        std::copy(v_img.begin(), v_img.end(), cat.begin());
        std::copy(v_txt.begin(), v_txt.end(), cat.begin() + static_cast<std::ptrdiff_t>(d));
        g = sigmoid_stable(affine(p.gate_w, cat, p.gate_b));
    }
    DenseVector z(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double lo = std::min(v_img[k], v_txt[k]);
        const double hi = std::max(v_img[k], v_txt[k]);
        z[k] = std::clamp(v_txt[k] + g[k] * (v_img[k] - v_txt[k]), lo, hi);
    }
    return {std::move(g), std::move(z)};
}

/// Layer-0 is user_emb stacked over item_emb; callers read the layer-2 rows.
inline LayerEmbeddings compute_node_embeddings(const ModelParams& p, const BipartiteGraph& g,
                                               std::int32_t n_layers = 2, int threads = 1) {
    if (g.n_users != p.dims.n_users || g.n_items != p.dims.n_items) {
        throw ShapeError("graph has " + std::to_string(g.n_users) + "x" +
                         std::to_string(g.n_items) + " nodes but params expect " +
                         std::to_string(p.dims.n_users) + "x" + std::to_string(p.dims.n_items));
    }
    DenseMatrix layer0(g.n_nodes(), p.dims.embed_dim);
    std::copy(p.user_emb.data.begin(), p.user_emb.data.end(), layer0.data.begin());
    std::copy(p.item_emb.data.begin(), p.item_emb.data.end(),
              layer0.data.begin() + p.user_emb.data.size());
    return propagate(g, layer0, n_layers, threads);
}

inline DenseVector policy_transform(const ModelParams& p, std::span<const double> e_u) {
    const DenseVector hidden = relu(affine(p.policy_w1, e_u, p.policy_b1));
    return affine(p.policy_w2, hidden, p.policy_b2);
}

inline std::vector<double> score_pairs(const ModelParams& p, ScoringMode mode,
                                       const DenseMatrix& e_users, const DenseMatrix& z_items,
                                       std::span<const PairEntry> pairs) {
    std::vector<double> scores(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [u, i] = pairs[k];
        if (u < 0 || u >= e_users.rows || i < 0 || i >= z_items.rows) {
            throw ShapeError("score_pairs: pair (" + std::to_string(u) + "," + std::to_string(i) +
                             ") out of range");
        }
        if (mode == ScoringMode::PolicyTransform) {
            const DenseVector pu = policy_transform(p, e_users.row(u));
            scores[k] = dot(pu, z_items.row(i));
        } else {
            scores[k] = dot(e_users.row(u), z_items.row(i));
        }
    }
    return scores;
}

/// Fused representation for every item; row i belongs to item i.
inline DenseMatrix fuse_all_items(const ModelParams& p, const DenseMatrix& img_feats,
                                  const DenseMatrix& txt_feats, bool fixed_gate = false,
                                  int threads = 1) {
    if (img_feats.rows != p.dims.n_items || txt_feats.rows != p.dims.n_items) {
        throw ShapeError("feature matrices must have one row per item (" +
                         std::to_string(p.dims.n_items) + "), got " +
                         std::to_string(img_feats.rows) + " and " + std::to_string(txt_feats.rows));
    }
    if (img_feats.cols != p.dims.img_dim || txt_feats.cols != p.dims.txt_dim) {
        throw ShapeError("feature dims " + std::to_string(img_feats.cols) + "/" +
                         std::to_string(txt_feats.cols) + " do not match projections " +
                         std::to_string(p.dims.img_dim) + "/" + std::to_string(p.dims.txt_dim));
    }
    DenseMatrix fused(p.dims.n_items, p.dims.embed_dim);
    parallel_for_each(p.dims.n_items, threads, [&](std::int64_t i) {
        auto [v_img, v_txt] = project_modalities(p, img_feats.row(i), txt_feats.row(i));
        auto [g, z] = gated_fusion(p, v_img, v_txt, fixed_gate);
        std::copy(z.begin(), z.end(), fused.row(i).begin());
    });
    return fused;
}

/// Everything the backward pass needs, recorded during one batch forward.
/// Items and users are deduplicated into "slots"; slot matrices are indexed
/// by slot, examples carry their slot index.
struct ForwardCache {
    ScoringMode mode = ScoringMode::DotProduct;
    bool fixed_gate = false;
    std::vector<TrainingExample> batch;
    std::vector<std::int32_t> item_ids;   // distinct batch items, ascending
    std::vector<std::int32_t> item_slot;  // per example
    DenseMatrix img_act, txt_act;         // item slot-major, post-ReLU
    DenseMatrix gate, fused;              // item slot-major
    std::vector<std::int32_t> user_ids;   // distinct batch users, ascending
    std::vector<std::int32_t> user_slot;  // per example
    LayerEmbeddings layers;               // all propagation layers, (U+I) x d
    DenseMatrix user_final;               // user slot-major, layer-2 rows
    DenseMatrix policy_hidden;            // user slot-major, post-ReLU (policy mode)
    DenseMatrix policy_out;               // user slot-major (policy mode)
    std::vector<double> scores;           // per example
};

namespace detail {

// Maps each id to its position in the sorted distinct-id list.
inline void slot_assign(std::span<const std::int32_t> ids, std::vector<std::int32_t>& distinct,
                        std::vector<std::int32_t>& slot) {
    distinct.assign(ids.begin(), ids.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    slot.resize(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto it = std::lower_bound(distinct.begin(), distinct.end(), ids[k]);
        slot[k] = static_cast<std::int32_t>(it - distinct.begin());
    }
}

}  // namespace detail

inline ForwardCache forward_batch(const ModelParams& p, const BipartiteGraph& g,
                                  const DenseMatrix& img_feats, const DenseMatrix& txt_feats,
                                  std::span<const TrainingExample> batch, ScoringMode mode,
                                  bool fixed_gate = false, std::int32_t n_layers = 2,
                                  int threads = 1) {
    ForwardCache cache;
    cache.mode = mode;
    cache.fixed_gate = fixed_gate;
    cache.batch.assign(batch.begin(), batch.end());

    std::vector<std::int32_t> users(batch.size()), items(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
        if (batch[k].user < 0 || batch[k].user >= p.dims.n_users || batch[k].item < 0 ||
            batch[k].item >= p.dims.n_items) {
            throw ShapeError("forward_batch: example (" + std::to_string(batch[k].user) + "," +
                             std::to_string(batch[k].item) + ") out of range");
        }
        users[k] = batch[k].user;
        items[k] = batch[k].item;
    }
    detail::slot_assign(users, cache.user_ids, cache.user_slot);
    detail::slot_assign(items, cache.item_ids, cache.item_slot);

    const std::int64_t d = p.dims.embed_dim;
    const auto n_item_slots = static_cast<std::int64_t>(cache.item_ids.size());
    cache.img_act = DenseMatrix(n_item_slots, d);
    cache.txt_act = DenseMatrix(n_item_slots, d);
    cache.gate = DenseMatrix(n_item_slots, d);
    cache.fused = DenseMatrix(n_item_slots, d);
    parallel_for_each(n_item_slots, threads, [&](std::int64_t s) {
        const std::int32_t i = cache.item_ids[static_cast<std::size_t>(s)];
        auto [v_img, v_txt] = project_modalities(p, img_feats.row(i), txt_feats.row(i));
        auto [gate, z] = gated_fusion(p, v_img, v_txt, fixed_gate);
        std::copy(v_img.begin(), v_img.end(), cache.img_act.row(s).begin());
        std::copy(v_txt.begin(), v_txt.end(), cache.txt_act.row(s).begin());
        std::copy(gate.begin(), gate.end(), cache.gate.row(s).begin());
        std::copy(z.begin(), z.end(), cache.fused.row(s).begin());
    });

    cache.layers = compute_node_embeddings(p, g, n_layers, threads);
    const DenseMatrix& final_layer = cache.layers.final_layer();
    const auto n_user_slots = static_cast<std::int64_t>(cache.user_ids.size());
    cache.user_final = DenseMatrix(n_user_slots, d);
    for (std::int64_t s = 0; s < n_user_slots; ++s) {
        const auto row = final_layer.row(cache.user_ids[static_cast<std::size_t>(s)]);
        std::copy(row.begin(), row.end(), cache.user_final.row(s).begin());
    }

    if (mode == ScoringMode::PolicyTransform) {
        cache.policy_hidden = DenseMatrix(n_user_slots, p.dims.policy_hidden);
        cache.policy_out = DenseMatrix(n_user_slots, d);
        for (std::int64_t s = 0; s < n_user_slots; ++s) {
            const DenseVector hidden = relu(affine(p.policy_w1, cache.user_final.row(s), p.policy_b1));
            const DenseVector out = affine(p.policy_w2, hidden, p.policy_b2);
            std::copy(hidden.begin(), hidden.end(), cache.policy_hidden.row(s).begin());
            std::copy(out.begin(), out.end(), cache.policy_out.row(s).begin());
        }
    }

    cache.scores.resize(batch.size());
    const DenseMatrix& user_repr =
        mode == ScoringMode::PolicyTransform ? cache.policy_out : cache.user_final;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        cache.scores[k] = dot(user_repr.row(cache.user_slot[k]), cache.fused.row(cache.item_slot[k]));
    }
    return cache;
}

}  // namespace mmrec
