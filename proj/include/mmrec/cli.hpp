#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmrec/error.hpp"
#include "mmrec/pipeline.hpp"

namespace mmrec::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

// Flags shared by every subcommand that reads a corpus.
inline void add_corpus_flags(CLI::App& sub, pipeline::CorpusArgs& args) {
    sub.add_option("--interactions", args.interactions, "user/item interaction file (TSV or CSV)")
        ->required();
    sub.add_option("--img-features", args.img_features, "image feature file (MMF1 or text)")
        ->required();
    sub.add_option("--txt-features", args.txt_features, "text feature file (MMF1 or text)")
        ->required();
    sub.add_option("--manifest", args.manifest,
                   "manifest mapping feature rows to item tokens (default: manifest.json "
                   "next to the interactions file, if present)");
    sub.add_option("--k-core", args.k_core, "minimum user/item degree kept by filtering")
        ->capture_default_str();
    sub.add_flag("--normalize-features", args.normalize_features,
                 "L2-normalize feature rows after loading");
}

}  // namespace detail

/// Builds the argument parser and runs one subcommand. `out` receives
/// recommendation rows and report lines; `log` receives progress output.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Multimodal graph recommender: synthesize, preprocess, train, evaluate"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read defaults from a TOML/INI file (flags override)");

    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = true;
    app.add_option("--seed", seed, "root seed; every random stream derives from it")
        ->capture_default_str();
    app.add_option("--threads", threads, "worker thread cap for parallel sections")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_flag("--deterministic,!--no-deterministic", deterministic,
                 "keep bit-reproducible execution paths (on by default)");

    pipeline::SynthCmd synth_cmd;
    CLI::App* synth = app.add_subcommand("synth", "generate a clustered synthetic corpus");
    synth->fallthrough();
    synth->add_option("--users", synth_cmd.users)->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--items", synth_cmd.items)->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--per-user", synth_cmd.per_user, "interactions per user")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--img-dim", synth_cmd.img_dim)->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--txt-dim", synth_cmd.txt_dim)->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--clusters", synth_cmd.clusters)->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_flag("--img-noise", synth_cmd.img_noise, "make image features pure noise");
    synth->add_flag("--txt-noise", synth_cmd.txt_noise, "make text features pure noise");
    synth->add_option("--out", synth_cmd.out_dir, "output directory")->capture_default_str();

    pipeline::PrepCmd prep_cmd;
    CLI::App* prep = app.add_subcommand("prep", "preprocess a corpus and write the split");
    prep->fallthrough();
    detail::add_corpus_flags(*prep, prep_cmd.corpus);
    // prep inspects the split only; feature files are not needed to split
    prep->get_option("--img-features")->required(false);
    prep->get_option("--txt-features")->required(false);
    prep->add_option("--out", prep_cmd.out_dir, "output directory")->capture_default_str();

    pipeline::TrainCmd train_cmd;
    CLI::App* train = app.add_subcommand("train", "train a model and save the best checkpoint");
    train->fallthrough();
    detail::add_corpus_flags(*train, train_cmd.corpus);
    train->add_option("--out", train_cmd.out_dir, "output directory")->capture_default_str();
    TrainConfig& cfg = train_cmd.config;
    train->add_option("--embed-dim", cfg.embed_dim)->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--gcn-layers", cfg.gcn_layers)->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
    train->add_option("--batch", cfg.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--neg-ratio", cfg.neg_ratio, "negatives per positive, each epoch")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    train->add_option("--epochs", cfg.max_epochs)->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--patience", cfg.patience, "epochs without validation improvement before stopping")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--eval-negatives", cfg.eval_negatives)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--policy-hidden", cfg.policy_hidden)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    std::string scoring = "dot";
    train->add_option("--scoring", scoring, "pair scoring: dot or policy")
        ->check(CLI::IsMember({"dot", "policy"}))
        ->capture_default_str();
    train->add_flag("--fixed-gate", cfg.fixed_gate, "freeze the fusion gate at 0.5");
    train->add_flag("--early-stop,!--no-early-stop", cfg.early_stopping,
                    "stop after `patience` epochs without improvement (on by default)");

    pipeline::EvalCmd eval_cmd;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out items");
    eval->fallthrough();
    detail::add_corpus_flags(*eval, eval_cmd.corpus);
    eval->add_option("--checkpoint", eval_cmd.checkpoint)->required();
    eval->add_option("--top-k", eval_cmd.ks, "cutoffs to report")->capture_default_str();
    eval->add_option("--eval-negatives", eval_cmd.n_negatives)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    eval->add_option("--out", eval_cmd.out_dir, "output directory")->capture_default_str();

    pipeline::RecommendCmd rec_cmd;
    CLI::App* rec = app.add_subcommand("recommend", "print top-K items for one user");
    rec->fallthrough();
    detail::add_corpus_flags(*rec, rec_cmd.corpus);
    rec->add_option("--checkpoint", rec_cmd.checkpoint)->required();
    rec->add_option("--user", rec_cmd.user, "user token to recommend for")->required();
    rec->add_option("--top-k", rec_cmd.top_k)->check(CLI::PositiveNumber)->capture_default_str();

    try {
        // CLI11 parses argv-style (reversed) vectors; run_cli takes them in order.
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, log, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) {
            synth_cmd.seed = seed;
            pipeline::run_synth(synth_cmd, log);
        } else if (prep->parsed()) {
            prep_cmd.corpus.seed = seed;
            pipeline::run_prep(prep_cmd, log);
        } else if (train->parsed()) {
            train_cmd.corpus.seed = seed;
            cfg.mode = scoring == "policy" ? ScoringMode::PolicyTransform : ScoringMode::DotProduct;
            cfg.threads = threads;
            pipeline::run_train(train_cmd, log);
        } else if (eval->parsed()) {
            eval_cmd.corpus.seed = seed;
            eval_cmd.threads = threads;
            pipeline::run_eval(eval_cmd, out);
        } else if (rec->parsed()) {
            rec_cmd.corpus.seed = seed;
            rec_cmd.threads = threads;
            pipeline::run_recommend(rec_cmd, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace mmrec::cli
