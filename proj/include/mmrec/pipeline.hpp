#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrec/checkpoint.hpp"
#include "mmrec/dataset.hpp"
#include "mmrec/error.hpp"
#include "mmrec/eval.hpp"
#include "mmrec/features.hpp"
#include "mmrec/graph.hpp"
#include "mmrec/model.hpp"
#include "mmrec/synth.hpp"
#include "mmrec/train.hpp"

namespace mmrec::pipeline {

namespace fs = std::filesystem;

/// Deletes everything this run created if it throws partway, so failed runs
/// leave no half-written outputs behind.
class OutputTracker {
public:
    std::string claim(const fs::path& path) {
        paths_.push_back(path);
        return path.string();
    }
    void commit() { paths_.clear(); }
    ~OutputTracker() {
        for (const fs::path& p : paths_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }

private:
    std::vector<fs::path> paths_;
};

struct SynthCmd {
    std::int32_t users = 50;
    std::int32_t items = 100;
    std::int32_t per_user = 8;
    std::int32_t img_dim = 32;
    std::int32_t txt_dim = 16;
    std::int32_t clusters = 5;
    bool img_noise = false;  // replace the image modality with pure noise
    bool txt_noise = false;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

inline void run_synth(const SynthCmd& cmd, std::ostream& log) {
    SynthOptions opt;
    opt.n_users = cmd.users;
    opt.n_items = cmd.items;
    opt.per_user = cmd.per_user;
    opt.img_dim = cmd.img_dim;
    opt.txt_dim = cmd.txt_dim;
    opt.n_clusters = cmd.clusters;
    opt.img_signal = !cmd.img_noise;
    opt.txt_signal = !cmd.txt_noise;
    opt.seed = cmd.seed;
    const SynthResult synth = synth_generate(opt);

    fs::create_directories(cmd.out_dir);
    OutputTracker tracker;
    const std::string interactions_path = tracker.claim(fs::path(cmd.out_dir) / "interactions.tsv");
    {
        std::ofstream out(interactions_path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + interactions_path + " for writing");
        out << "user\titem\n";
        for (const RawRecord& rec : synth.interactions.records) {
            out << rec.user << '\t' << rec.item << '\n';
        }
        if (!out) throw IoError("write failed for " + interactions_path);
    }
    const std::string img_path = tracker.claim(fs::path(cmd.out_dir) / "img_features.mmf1");
    save_feature_matrix(img_path, synth.img_features);
    const std::string txt_path = tracker.claim(fs::path(cmd.out_dir) / "txt_features.mmf1");
    save_feature_matrix(txt_path, synth.txt_features);

    // The manifest records generation parameters and, crucially, the
    // feature-row order: row r of both feature files belongs to item_tokens[r].
    const std::string manifest_path = tracker.claim(fs::path(cmd.out_dir) / "manifest.json");
    {
        nlohmann::ordered_json j;
        j["params"] = {{"users", cmd.users},       {"items", cmd.items},
                       {"per_user", cmd.per_user}, {"img_dim", cmd.img_dim},
                       {"txt_dim", cmd.txt_dim},   {"clusters", cmd.clusters},
                       {"img_noise", cmd.img_noise}, {"txt_noise", cmd.txt_noise},
                       {"seed", cmd.seed}};
        j["files"] = {{"interactions", "interactions.tsv"},
                      {"img_features", "img_features.mmf1"},
                      {"txt_features", "txt_features.mmf1"}};
        j["item_tokens"] = synth.item_tokens;
        std::ofstream out(manifest_path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + manifest_path + " for writing");
        out << j.dump(2) << '\n';
        if (!out) throw IoError("write failed for " + manifest_path);
    }
    tracker.commit();
    log << "synth: wrote " << synth.interactions.records.size() << " interactions for "
        << cmd.users << " users x " << cmd.items << " items under " << cmd.out_dir << "\n";
}

/// Shared ingest path: raw file -> canonical records -> k-core -> encoded
/// split, with feature rows aligned to the encoded item order. Every
/// subcommand that reads a corpus goes through here, so they cannot disagree
/// about the split.
struct LoadedCorpus {
    SplitDataset split;
    IdMaps ids;
    DenseMatrix img;
    DenseMatrix txt;
};

struct CorpusArgs {
    std::string interactions;
    std::string img_features;
    std::string txt_features;
    std::string manifest;  // empty = sibling manifest.json if present, else identity rows
    std::uint64_t seed = 0;
    std::int32_t k_core = 5;
    bool with_validation = true;
    bool normalize_features = false;
};

namespace detail {

inline std::optional<std::vector<std::string>> manifest_tokens(const CorpusArgs& args) {
    std::string path = args.manifest;
    if (path.empty()) {
        const fs::path sibling = fs::path(args.interactions).parent_path() / "manifest.json";
        std::error_code ec;
        if (!fs::exists(sibling, ec)) return std::nullopt;
        path = sibling.string();
    }
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": invalid manifest: " + e.what());
    }
    if (!j.contains("item_tokens") || !j["item_tokens"].is_array()) {
        throw ParseError(path + ": manifest has no item_tokens array");
    }
    std::vector<std::string> tokens;
    for (const auto& t : j["item_tokens"]) {
        if (!t.is_string()) throw ParseError(path + ": item_tokens entries must be strings");
        tokens.push_back(t.get<std::string>());
    }
    return tokens;
}

inline DenseMatrix align_features(const std::string& path,
                                  const std::optional<std::vector<std::string>>& tokens,
                                  const IdMaps& ids, bool normalize) {
    if (!tokens) {
        // No manifest: the file must already have exactly one row per encoded
        // item, in encoded (lexicographic token) order.
        return load_feature_matrix(path, ids.n_items(), normalize);
    }
    DenseMatrix raw =
        load_feature_matrix(path, static_cast<std::int64_t>(tokens->size()), normalize);
    std::unordered_map<std::string, std::int64_t> row_of;
    row_of.reserve(tokens->size());
    for (std::size_t r = 0; r < tokens->size(); ++r) row_of[(*tokens)[r]] = static_cast<std::int64_t>(r);
    DenseMatrix aligned(ids.n_items(), raw.cols);
    for (std::int32_t i = 0; i < ids.n_items(); ++i) {
        const std::string& token = ids.item_tokens[static_cast<std::size_t>(i)];
        const auto it = row_of.find(token);
        if (it == row_of.end()) {
            throw DataError(path + ": no feature row for item '" + token + "'");
        }
        const auto src = raw.row(it->second);
        std::copy(src.begin(), src.end(), aligned.row(i).begin());
    }
    return aligned;
}

}  // namespace detail

inline LoadedCorpus load_corpus(const CorpusArgs& args) {
    const RawInteractions raw = load_interactions(args.interactions);
    const RawInteractions canonical = canonicalize(raw, args.seed);
    const KCoreResult cored = k_core_filter(canonical, args.k_core);
    if (cored.emptied) {
        throw DataError(args.interactions + ": " + std::to_string(args.k_core) +
                        "-core filtering removed every interaction");
    }
    LoadedCorpus corpus;
    auto [split, ids] = encode_and_split(cored.interactions, args.with_validation);
    corpus.split = std::move(split);
    corpus.ids = std::move(ids);
    const auto tokens = detail::manifest_tokens(args);
    corpus.img = detail::align_features(args.img_features, tokens, corpus.ids, args.normalize_features);
    corpus.txt = detail::align_features(args.txt_features, tokens, corpus.ids, args.normalize_features);
    return corpus;
}

struct PrepCmd {
    CorpusArgs corpus;
    std::string out_dir = ".";
};

/// Materializes the preprocessing stage: id maps, split files, and corpus
/// statistics, for inspection or downstream tooling.
inline void run_prep(const PrepCmd& cmd, std::ostream& log) {
    const RawInteractions raw = load_interactions(cmd.corpus.interactions);
    const RawInteractions canonical = canonicalize(raw, cmd.corpus.seed);
    const KCoreResult cored = k_core_filter(canonical, cmd.corpus.k_core);
    if (cored.emptied) {
        throw DataError(cmd.corpus.interactions + ": " + std::to_string(cmd.corpus.k_core) +
                        "-core filtering removed every interaction");
    }
    auto [split, ids] = encode_and_split(cored.interactions, cmd.corpus.with_validation);

    fs::create_directories(cmd.out_dir);
    OutputTracker tracker;
    auto write_tokens = [&](const char* name, const std::vector<std::string>& tokens) {
        const std::string path = tracker.claim(fs::path(cmd.out_dir) / name);
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + path + " for writing");
        for (std::size_t i = 0; i < tokens.size(); ++i) out << tokens[i] << '\t' << i << '\n';
        if (!out) throw IoError("write failed for " + path);
    };
    write_tokens("user_index.tsv", ids.user_tokens);
    write_tokens("item_index.tsv", ids.item_tokens);
    {
        const std::string path = tracker.claim(fs::path(cmd.out_dir) / "train.tsv");
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + path + " for writing");
        for (const TrainEntry& e : split.train) {
            out << e.user << '\t' << e.item << '\t' << e.timestamp << '\n';
        }
        if (!out) throw IoError("write failed for " + path);
    }
    auto write_pairs = [&](const char* name, const std::vector<PairEntry>& pairs) {
        const std::string path = tracker.claim(fs::path(cmd.out_dir) / name);
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + path + " for writing");
        for (const PairEntry& e : pairs) out << e.user << '\t' << e.item << '\n';
        if (!out) throw IoError("write failed for " + path);
    };
    write_pairs("validation.tsv", split.validation);
    write_pairs("test.tsv", split.test);
    {
        nlohmann::ordered_json j;
        j["records_in"] = raw.records.size();
        j["records_canonical"] = canonical.records.size();
        j["records_after_kcore"] = cored.interactions.records.size();
        j["users"] = split.n_users;
        j["items"] = split.n_items;
        j["train"] = split.train.size();
        j["validation"] = split.validation.size();
        j["test"] = split.test.size();
        const std::string path = tracker.claim(fs::path(cmd.out_dir) / "stats.json");
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + path + " for writing");
        out << j.dump(2) << '\n';
        if (!out) throw IoError("write failed for " + path);
    }
    tracker.commit();
    log << "prep: " << split.n_users << " users, " << split.n_items << " items, "
        << split.train.size() << " train / " << split.validation.size() << " validation / "
        << split.test.size() << " test interactions written under " << cmd.out_dir << "\n";
}

struct TrainCmd {
    CorpusArgs corpus;
    TrainConfig config;
    std::string out_dir = ".";
};

inline std::string epoch_record_json(const EpochRecord& rec) {
    nlohmann::ordered_json j;
    j["epoch"] = rec.epoch;
    j["loss"] = rec.loss;
    j["val_recall@10"] = rec.val_recall10;
    j["val_ndcg@10"] = rec.val_ndcg10;
    j["seconds"] = rec.seconds;
    return j.dump();
}

inline void run_train(const TrainCmd& cmd, std::ostream& log) {
    TrainConfig cfg = cmd.config;
    cfg.seed = cmd.corpus.seed;
    validate_train_config(cfg);
    const LoadedCorpus corpus = load_corpus(cmd.corpus);

    const FitResult result = fit(corpus.split, corpus.img, corpus.txt, cfg);
    for (const EpochRecord& rec : result.log) log << epoch_record_json(rec) << "\n";

    fs::create_directories(cmd.out_dir);
    OutputTracker tracker;
    const std::string ckpt_path = tracker.claim(fs::path(cmd.out_dir) / "checkpoint.mmck");
    save_checkpoint(ckpt_path, result.best);
    {
        const std::string path = tracker.claim(fs::path(cmd.out_dir) / "train_log.jsonl");
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + path + " for writing");
        for (const EpochRecord& rec : result.log) out << epoch_record_json(rec) << '\n';
        if (!out) throw IoError("write failed for " + path);
    }
    {
        // Validation-set report for the checkpointed (best) params.
        EvalProtocol protocol;
        protocol.ks = cfg.eval_ks;
        protocol.n_negatives = cfg.eval_negatives;
        protocol.seed = cfg.seed;
        protocol.mode = cfg.mode;
        protocol.fixed_gate = cfg.fixed_gate;
        protocol.n_layers = cfg.gcn_layers;
        protocol.target_set = TargetSet::Validation;
        protocol.threads = cfg.threads;
        const BipartiteGraph graph =
            build_graph(corpus.split.train, corpus.split.n_users, corpus.split.n_items);
        const EvalReport report =
            evaluate(result.best.params, graph, corpus.split, corpus.img, corpus.txt, protocol);
        const std::string path = tracker.claim(fs::path(cmd.out_dir) / "val_report.json");
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open " + path + " for writing");
        out << report_to_json(report) << '\n';
        if (!out) throw IoError("write failed for " + path);
        log << report_to_json(report) << "\n";
    }
    tracker.commit();
    log << "train: stopped after epoch " << result.epochs_run << ", best epoch "
        << result.best.epoch << " (validation recall@10 " << result.best.best_val_recall10
        << "), checkpoint at " << ckpt_path << "\n";
}

/// Settings stored in the checkpoint's config echo that evaluation must
/// reproduce; flags can override them explicitly at the CLI layer.
struct EchoedSettings {
    ScoringMode mode = ScoringMode::DotProduct;
    bool fixed_gate = false;
    std::int32_t gcn_layers = 2;
};

inline EchoedSettings parse_config_echo(const std::string& echo) {
    EchoedSettings s;
    if (echo.empty()) return s;
    const auto j = nlohmann::json::parse(echo, nullptr, false);
    if (j.is_discarded()) return s;
    if (j.contains("scoring") && j["scoring"].is_string() && j["scoring"] == "policy") {
        s.mode = ScoringMode::PolicyTransform;
    }
    if (j.contains("fixed_gate") && j["fixed_gate"].is_boolean()) s.fixed_gate = j["fixed_gate"];
    if (j.contains("gcn_layers") && j["gcn_layers"].is_number_integer()) {
        s.gcn_layers = j["gcn_layers"];
    }
    return s;
}

/// Dimension agreement between a checkpoint and a freshly loaded corpus.
/// Mismatches are usage errors: the caller pointed the tools at the wrong
/// files, nothing failed at runtime.
inline void require_checkpoint_matches(const Checkpoint& ckpt, const LoadedCorpus& corpus) {
    const ModelDims& d = ckpt.params.dims;
    auto fail = [](const std::string& what, std::int64_t ckpt_side, std::int64_t data_side) {
        throw UsageError("checkpoint/data mismatch: checkpoint has " + std::to_string(ckpt_side) +
                         " " + what + " but the data has " + std::to_string(data_side));
    };
    if (d.n_users != corpus.split.n_users) fail("users", d.n_users, corpus.split.n_users);
    if (d.n_items != corpus.split.n_items) fail("items", d.n_items, corpus.split.n_items);
    if (d.img_dim != corpus.img.cols) fail("image feature columns", d.img_dim, corpus.img.cols);
    if (d.txt_dim != corpus.txt.cols) fail("text feature columns", d.txt_dim, corpus.txt.cols);
}

struct EvalCmd {
    CorpusArgs corpus;
    std::string checkpoint;
    std::vector<std::int32_t> ks = {10, 20};
    std::int32_t n_negatives = 100;
    int threads = 1;
    std::string out_dir = ".";
};

inline void run_eval(const EvalCmd& cmd, std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(cmd.checkpoint);
    const LoadedCorpus corpus = load_corpus(cmd.corpus);
    require_checkpoint_matches(ckpt, corpus);
    const EchoedSettings echoed = parse_config_echo(ckpt.config_echo);

    EvalProtocol protocol;
    protocol.ks = cmd.ks;
    protocol.n_negatives = cmd.n_negatives;
    protocol.seed = cmd.corpus.seed;
    protocol.mode = echoed.mode;
    protocol.fixed_gate = echoed.fixed_gate;
    protocol.n_layers = echoed.gcn_layers;
    protocol.target_set = TargetSet::Test;
    protocol.threads = cmd.threads;

    const BipartiteGraph graph =
        build_graph(corpus.split.train, corpus.split.n_users, corpus.split.n_items);
    const EvalReport report =
        evaluate(ckpt.params, graph, corpus.split, corpus.img, corpus.txt, protocol);
    log << report_to_json(report) << "\n";

    fs::create_directories(cmd.out_dir);
    OutputTracker tracker;
    const std::string path = tracker.claim(fs::path(cmd.out_dir) / "eval_report.json");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << report_to_json(report) << '\n';
    if (!out) throw IoError("write failed for " + path);
    tracker.commit();
}

struct RecommendCmd {
    CorpusArgs corpus;
    std::string checkpoint;
    std::string user;
    std::int32_t top_k = 20;
    int threads = 1;
};

/// Full-catalog scoring for one user, excluding their training items.
inline void run_recommend(const RecommendCmd& cmd, std::ostream& out) {
    if (cmd.top_k < 1) throw UsageError("top-k must be at least 1");
    const Checkpoint ckpt = load_checkpoint(cmd.checkpoint);
    const LoadedCorpus corpus = load_corpus(cmd.corpus);
    require_checkpoint_matches(ckpt, corpus);
    const EchoedSettings echoed = parse_config_echo(ckpt.config_echo);

    const auto it = corpus.ids.user_index.find(cmd.user);
    if (it == corpus.ids.user_index.end()) {
        throw UsageError("unknown user token '" + cmd.user + "'");
    }
    const std::int32_t user = it->second;

    const BipartiteGraph graph =
        build_graph(corpus.split.train, corpus.split.n_users, corpus.split.n_items);
    const DenseMatrix fused =
        fuse_all_items(ckpt.params, corpus.img, corpus.txt, echoed.fixed_gate, cmd.threads);
    const LayerEmbeddings layers =
        compute_node_embeddings(ckpt.params, graph, echoed.gcn_layers, cmd.threads);
    DenseVector user_repr(layers.final_layer().row(user).begin(),
                          layers.final_layer().row(user).end());
    if (echoed.mode == ScoringMode::PolicyTransform) {
        user_repr = policy_transform(ckpt.params, user_repr);
    }

    const auto& trained = corpus.split.train_pos[static_cast<std::size_t>(user)];
    std::vector<std::pair<double, std::int32_t>> scored;
    for (std::int32_t i = 0; i < corpus.split.n_items; ++i) {
        if (std::binary_search(trained.begin(), trained.end(), i)) continue;
        scored.emplace_back(dot(user_repr, fused.row(i)), i);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cmd.top_k), scored.size());
    char buf[64];
    for (std::size_t r = 0; r < n; ++r) {
        std::snprintf(buf, sizeof(buf), "%.6f", scored[r].first);
        out << corpus.ids.item_tokens[static_cast<std::size_t>(scored[r].second)] << '\t' << buf
            << '\n';
    }
}

}  // namespace mmrec::pipeline
