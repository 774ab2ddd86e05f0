#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrec/checkpoint.hpp"
#include "mmrec/dataset.hpp"
#include "mmrec/error.hpp"
#include "mmrec/eval.hpp"
#include "mmrec/gradcheck.hpp"
#include "mmrec/graph.hpp"
#include "mmrec/model.hpp"
#include "mmrec/rng.hpp"

namespace mmrec {

using Gradients = ModelParams;  // same tensors, same shapes

struct BceResult {
    double loss = 0.0;
    std::vector<double> dloss_dscore;  // per example, already divided by N
};

/// Mean binary cross-entropy on logits, in the overflow-free form
/// max(s,0) - s*y + log(1+exp(-|s|)).
inline BceResult bce_loss(std::span<const double> scores, std::span<const std::int8_t> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("bce_loss: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) throw ShapeError("bce_loss: empty batch");
    BceResult out;
    out.dloss_dscore.resize(scores.size());
    const double n = static_cast<double>(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k) {
        if (labels[k] != 0 && labels[k] != 1) {
            throw DataError("bce_loss: label " + std::to_string(static_cast<int>(labels[k])) +
                            " is not binary");
        }
        const double s = scores[k];
        const double y = static_cast<double>(labels[k]);
        out.loss += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
        out.dloss_dscore[k] = (sigmoid_scalar(s) - y) / n;
    }
    out.loss /= n;
    return out;
}

/// Analytic gradients for one batch. Walks the forward pass in reverse:
/// scores -> (policy) -> propagation adjoint -> fusion -> projections.
/// Item embeddings receive their propagation gradient even though, with an
/// even layer count, bipartite parity makes that contribution exactly zero.
inline Gradients backward(const ModelParams& p, const ForwardCache& cache,
                          const BipartiteGraph& graph, const DenseMatrix& img_feats,
                          const DenseMatrix& txt_feats, std::span<const double> dloss_dscore,
                          std::int32_t n_layers = 2, int threads = 1) {
    if (dloss_dscore.size() != cache.batch.size()) {
        throw ShapeError("backward: " + std::to_string(dloss_dscore.size()) +
                         " score gradients for a batch of " + std::to_string(cache.batch.size()));
    }
    if (static_cast<std::size_t>(cache.layers.final_layer().rows) !=
        static_cast<std::size_t>(graph.n_nodes())) {
        throw ShapeError("backward: cache was built for a different graph");
    }
    Gradients grads = zeros_like(p);
    const std::int64_t d = p.dims.embed_dim;
    const auto n_item_slots = static_cast<std::int64_t>(cache.item_ids.size());
    const auto n_user_slots = static_cast<std::int64_t>(cache.user_ids.size());

    // Score layer: s = user_repr . fused
    DenseMatrix d_fused(n_item_slots, d);
    DenseMatrix d_user_repr(n_user_slots, d);
    const DenseMatrix& user_repr =
        cache.mode == ScoringMode::PolicyTransform ? cache.policy_out : cache.user_final;
    for (std::size_t k = 0; k < cache.batch.size(); ++k) {
        const double w = dloss_dscore[k];
        const std::int32_t a = cache.user_slot[k];
        const std::int32_t b = cache.item_slot[k];
        axpy(w, user_repr.row(a), d_fused.row(b));
        axpy(w, cache.fused.row(b), d_user_repr.row(a));
    }

    // Policy MLP (user side), or pass-through in dot-product mode.
    DenseMatrix d_user_final(n_user_slots, d);
    if (cache.mode == ScoringMode::PolicyTransform) {
        for (std::int64_t a = 0; a < n_user_slots; ++a) {
            const auto dp = d_user_repr.row(a);
            axpy(1.0, dp, std::span<double>(grads.policy_b2));
            add_outer(grads.policy_w2, dp, cache.policy_hidden.row(a));
            DenseVector d_hidden = matvec_transposed(p.policy_w2, dp);
            const auto hidden = cache.policy_hidden.row(a);
            for (std::int64_t j = 0; j < p.dims.policy_hidden; ++j) {
                if (hidden[static_cast<std::size_t>(j)] <= 0.0) d_hidden[static_cast<std::size_t>(j)] = 0.0;
            }
            axpy(1.0, d_hidden, std::span<double>(grads.policy_b1));
            add_outer(grads.policy_w1, d_hidden, cache.user_final.row(a));
            const DenseVector de = matvec_transposed(p.policy_w1, d_hidden);
            std::copy(de.begin(), de.end(), d_user_final.row(a).begin());
        }
    } else {
        d_user_final = d_user_repr;
    }

    // Propagation adjoint back to the layer-0 embedding tables.
    DenseMatrix d_final(graph.n_nodes(), d);
    for (std::int64_t a = 0; a < n_user_slots; ++a) {
        const auto row = d_user_final.row(a);
        std::copy(row.begin(), row.end(),
                  d_final.row(cache.user_ids[static_cast<std::size_t>(a)]).begin());
    }
    const DenseMatrix d_layer0 = propagate_adjoint(graph, d_final, n_layers, threads);
    for (std::int64_t u = 0; u < p.dims.n_users; ++u) {
        axpy(1.0, d_layer0.row(u), grads.user_emb.row(u));
    }
    for (std::int64_t i = 0; i < p.dims.n_items; ++i) {
        axpy(1.0, d_layer0.row(p.dims.n_users + i), grads.item_emb.row(i));
    }

    // Fusion and modality projections (item side).
    DenseVector cat(static_cast<std::size_t>(2 * d));
    for (std::int64_t b = 0; b < n_item_slots; ++b) {
        const std::int32_t item = cache.item_ids[static_cast<std::size_t>(b)];
        const auto dz = d_fused.row(b);
        const auto v_img = cache.img_act.row(b);
        const auto v_txt = cache.txt_act.row(b);
        const auto g = cache.gate.row(b);

        DenseVector dv_img(static_cast<std::size_t>(d)), dv_txt(static_cast<std::size_t>(d));
        for (std::int64_t k = 0; k < d; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            dv_img[kk] = dz[kk] * g[kk];
            dv_txt[kk] = dz[kk] * (1.0 - g[kk]);
        }
        if (!cache.fixed_gate) {
            DenseVector d_gate_pre(static_cast<std::size_t>(d));
            for (std::int64_t k = 0; k < d; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                const double dg = dz[kk] * (v_img[kk] - v_txt[kk]);
                d_gate_pre[kk] = dg * g[kk] * (1.0 - g[kk]);
            }
            std::copy(v_img.begin(), v_img.end(), cat.begin());
            std::copy(v_txt.begin(), v_txt.end(), cat.begin() + static_cast<std::ptrdiff_t>(d));
            axpy(1.0, d_gate_pre, std::span<double>(grads.gate_b));
            add_outer(grads.gate_w, d_gate_pre, cat);
            const DenseVector d_cat = matvec_transposed(p.gate_w, d_gate_pre);
            for (std::int64_t k = 0; k < d; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                dv_img[kk] += d_cat[kk];
                dv_txt[kk] += d_cat[static_cast<std::size_t>(d + k)];
            }
        }
        for (std::int64_t k = 0; k < d; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            if (v_img[kk] <= 0.0) dv_img[kk] = 0.0;  // ReLU mask
            if (v_txt[kk] <= 0.0) dv_txt[kk] = 0.0;
        }
        axpy(1.0, dv_img, std::span<double>(grads.img_proj_b));
        add_outer(grads.img_proj_w, dv_img, img_feats.row(item));
        axpy(1.0, dv_txt, std::span<double>(grads.txt_proj_b));
        add_outer(grads.txt_proj_w, dv_txt, txt_feats.row(item));
    }
    return grads;
}

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam_state(const ModelParams& params) {
    return {zeros_like(params), zeros_like(params), 0, 0.9, 0.999, 1e-8};
}

/// Bias-corrected Adam. A non-finite gradient aborts the step with params,
/// moments, and step counter untouched.
inline void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr) {
    auto g_refs = tensor_refs(const_cast<Gradients&>(grads));
    for (const TensorRef& ref : g_refs) {
        for (std::size_t e = 0; e < ref.size; ++e) {
            if (!std::isfinite(ref.data[e])) {
                throw NumericError("adam_step: non-finite gradient in " + ref.name);
            }
        }
    }
    auto p_refs = tensor_refs(params);
    auto m_refs = tensor_refs(state.m);
    auto v_refs = tensor_refs(state.v);
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t t = 0; t < p_refs.size(); ++t) {
        double* theta = p_refs[t].data;
        double* m = m_refs[t].data;
        double* v = v_refs[t].data;
        const double* g = g_refs[t].data;
        for (std::size_t e = 0; e < p_refs[t].size; ++e) {
            m[e] = state.beta1 * m[e] + (1.0 - state.beta1) * g[e];
            v[e] = state.beta2 * v[e] + (1.0 - state.beta2) * g[e] * g[e];
            theta[e] -= lr * (m[e] / bc1) / (std::sqrt(v[e] / bc2) + state.eps);
        }
    }
}

struct TrainConfig {
    std::int32_t embed_dim = 64;
    std::int32_t gcn_layers = 2;
    double lr = 0.001;
    std::int32_t batch_size = 256;
    std::int32_t neg_ratio = 1;
    std::int32_t max_epochs = 100;
    std::int32_t patience = 5;
    std::vector<std::int32_t> eval_ks = {10, 20};
    std::int32_t eval_negatives = 100;
    std::int32_t policy_hidden = 128;
    std::uint64_t seed = 0;
    ScoringMode mode = ScoringMode::DotProduct;
    bool fixed_gate = false;
    bool early_stopping = true;
    int threads = 1;
};

inline void validate_train_config(const TrainConfig& cfg) {
    auto positive = [](std::int64_t v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be at least 1");
    };
    positive(cfg.embed_dim, "embed_dim");
    positive(cfg.gcn_layers, "gcn_layers");
    positive(cfg.batch_size, "batch_size");
    positive(cfg.max_epochs, "max_epochs");
    positive(cfg.patience, "patience");
    positive(cfg.eval_negatives, "eval_negatives");
    positive(cfg.policy_hidden, "policy_hidden");
    if (cfg.neg_ratio < 0) throw ConfigError("neg_ratio must be non-negative");
    if (cfg.lr < 0.0 || !std::isfinite(cfg.lr)) throw ConfigError("lr must be finite and non-negative");
    // patience larger than max_epochs is allowed; the epoch cap simply wins.
    if (cfg.eval_ks.empty()) throw ConfigError("eval_ks must not be empty");
    for (std::int32_t k : cfg.eval_ks) positive(k, "eval k");
    if (cfg.threads < 1) throw ConfigError("threads must be at least 1");
}

inline std::string config_echo_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["embed_dim"] = cfg.embed_dim;
    j["gcn_layers"] = cfg.gcn_layers;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["neg_ratio"] = cfg.neg_ratio;
    j["max_epochs"] = cfg.max_epochs;
    j["patience"] = cfg.patience;
    j["eval_negatives"] = cfg.eval_negatives;
    j["policy_hidden"] = cfg.policy_hidden;
    j["seed"] = cfg.seed;
    j["scoring"] = cfg.mode == ScoringMode::PolicyTransform ? "policy" : "dot";
    j["fixed_gate"] = cfg.fixed_gate;
    j["early_stopping"] = cfg.early_stopping;
    return j.dump();
}

/// One pass over the training positives with freshly sampled negatives.
/// Returns the example-weighted mean batch loss.
inline double train_epoch(ModelParams& params, AdamState& state, const SplitDataset& split,
                          const BipartiteGraph& graph, const DenseMatrix& img_feats,
                          const DenseMatrix& txt_feats, const TrainConfig& cfg,
                          std::uint64_t epoch) {
    std::vector<TrainingExample> examples = sample_negatives(split, cfg.neg_ratio, cfg.seed, epoch);
    if (examples.empty()) throw DataError("train_epoch: no training examples");

    // Shuffle draws its own stream so changing the negative sampler cannot
    // silently reorder batches.
    rng::Sequence seq(cfg.seed, rng::Stream::shuffle, epoch);
    for (std::size_t j = examples.size(); j > 1; --j) {
        std::swap(examples[j - 1], examples[static_cast<std::size_t>(seq.next_bounded(j))]);
    }

    double loss_sum = 0.0;
    std::vector<std::int8_t> labels;
    for (std::size_t start = 0; start < examples.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t count =
            std::min(static_cast<std::size_t>(cfg.batch_size), examples.size() - start);
        const std::span<const TrainingExample> batch(examples.data() + start, count);
        labels.resize(count);
        for (std::size_t k = 0; k < count; ++k) labels[k] = batch[k].label;

        const ForwardCache cache = forward_batch(params, graph, img_feats, txt_feats, batch,
                                                 cfg.mode, cfg.fixed_gate, cfg.gcn_layers,
                                                 cfg.threads);
        const BceResult bce = bce_loss(cache.scores, labels);
        const Gradients grads = backward(params, cache, graph, img_feats, txt_feats,
                                         bce.dloss_dscore, cfg.gcn_layers, cfg.threads);
        adam_step(params, grads, state, cfg.lr);
        loss_sum += bce.loss * static_cast<double>(count);
    }
    return loss_sum / static_cast<double>(examples.size());
}

struct EpochRecord {
    std::int32_t epoch = 0;  // 1-based
    double loss = 0.0;
    double val_recall10 = 0.0;
    double val_ndcg10 = 0.0;
    double seconds = 0.0;
};

struct FitResult {
    Checkpoint best;
    std::vector<EpochRecord> log;
    std::int32_t epochs_run = 0;
};

/// Full training loop: per-epoch negative resampling, validation Recall@10
/// after every epoch, snapshot of the best epoch, patience-based stop.
inline FitResult fit(const SplitDataset& split, const DenseMatrix& img_feats,
                     const DenseMatrix& txt_feats, const TrainConfig& cfg) {
    validate_train_config(cfg);
    const bool has_validation = !split.validation.empty();
    if (cfg.early_stopping && !has_validation) {
        throw ConfigError("early stopping needs a validation split (none present)");
    }
    if (split.train.empty()) throw DataError("fit: empty training split");

    const BipartiteGraph graph = build_graph(split.train, split.n_users, split.n_items);
    ModelDims dims;
    dims.n_users = split.n_users;
    dims.n_items = split.n_items;
    dims.embed_dim = cfg.embed_dim;
    dims.img_dim = static_cast<std::int32_t>(img_feats.cols);
    dims.txt_dim = static_cast<std::int32_t>(txt_feats.cols);
    dims.policy_hidden = cfg.policy_hidden;
    ModelParams params = init_params(dims, cfg.seed);
    AdamState state = make_adam_state(params);

    EvalProtocol val_protocol;
    val_protocol.ks = cfg.eval_ks;
    if (std::find(val_protocol.ks.begin(), val_protocol.ks.end(), 10) == val_protocol.ks.end()) {
        val_protocol.ks.push_back(10);  // the stopping metric is always computed
    }
    val_protocol.n_negatives = cfg.eval_negatives;
    val_protocol.seed = cfg.seed;
    val_protocol.mode = cfg.mode;
    val_protocol.fixed_gate = cfg.fixed_gate;
    val_protocol.n_layers = cfg.gcn_layers;
    val_protocol.target_set = TargetSet::Validation;
    val_protocol.threads = cfg.threads;

    FitResult result;
    double best_recall = -1.0;
    std::int32_t bad_epochs = 0;
    for (std::int32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double loss = train_epoch(params, state, split, graph, img_feats, txt_feats, cfg,
                                        static_cast<std::uint64_t>(epoch));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss;
        if (has_validation) {
            const EvalReport report =
                evaluate(params, graph, split, img_feats, txt_feats, val_protocol);
            rec.val_recall10 = report.recall_at(10);
            rec.val_ndcg10 = report.ndcg_at(10);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(rec);
        result.epochs_run = epoch;

        const bool improved = !has_validation || rec.val_recall10 > best_recall;
        if (improved) {
            best_recall = rec.val_recall10;
            bad_epochs = 0;
            result.best.params = params;
            result.best.epoch = static_cast<std::uint32_t>(epoch);
            result.best.best_val_recall10 = has_validation ? rec.val_recall10 : 0.0;
            result.best.config_echo = config_echo_json(cfg);
        } else {
            ++bad_epochs;
        }
        if (cfg.early_stopping && bad_epochs >= cfg.patience) break;
    }
    return result;
}

/// Central-difference check of backward() across every parameter tensor.
/// Perturbs params in place through the entry registry, so the cache must be
/// rebuilt inside the loss closure.
inline GradCheckReport check_model_gradients(ModelParams& params, const BipartiteGraph& graph,
                                             const DenseMatrix& img_feats,
                                             const DenseMatrix& txt_feats,
                                             std::span<const TrainingExample> batch,
                                             ScoringMode mode, bool fixed_gate = false,
                                             std::int32_t n_layers = 2, double eps = 1e-5) {
    std::vector<std::int8_t> labels(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) labels[k] = batch[k].label;

    const ForwardCache cache =
        forward_batch(params, graph, img_feats, txt_feats, batch, mode, fixed_gate, n_layers);
    const BceResult bce = bce_loss(cache.scores, labels);
    Gradients grads =
        backward(params, cache, graph, img_feats, txt_feats, bce.dloss_dscore, n_layers);

    std::vector<GradCheckEntry> entries;
    auto p_refs = tensor_refs(params);
    auto g_refs = tensor_refs(grads);
    for (std::size_t t = 0; t < p_refs.size(); ++t) {
        for (std::size_t e = 0; e < p_refs[t].size; ++e) {
            entries.push_back({p_refs[t].data + e, g_refs[t].data[e]});
        }
    }
    const auto loss_fn = [&]() {
        const ForwardCache c =
            forward_batch(params, graph, img_feats, txt_feats, batch, mode, fixed_gate, n_layers);
        return bce_loss(c.scores, labels).loss;
    };
    return finite_diff_check(loss_fn, entries, eps);
}

}  // namespace mmrec
