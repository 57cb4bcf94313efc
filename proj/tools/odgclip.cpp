// Command-line front end: generate-open, train, evaluate, lodo, diagnose.
// Reads a JSON config, applies flag overrides (flags win), dispatches.

#include <CLI11.hpp>
#include <iostream>

#include "odg/commands.hpp"
#include "odg/common.hpp"

namespace {

struct Overrides {
    std::string out_dir;
    std::string cache_dir;
    int64_t seed = -1;
    int seeds = 0;
    int count = 0;
    double entropy_threshold = -1.0;
    bool pp_only = false;
    bool closed_set = false;
    int workers = 0;
    std::vector<std::string> ablations;
};

void apply_overrides(odg::RunConfig& cfg, const Overrides& ov) {
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    if (!ov.cache_dir.empty()) cfg.cache_dir = ov.cache_dir;
    if (ov.seed >= 0) cfg.train.seed = static_cast<uint64_t>(ov.seed);
    if (ov.seeds > 0) cfg.eval_seeds = ov.seeds;
    if (ov.count > 0) cfg.pool_count = ov.count;
    if (ov.entropy_threshold >= 0.0) cfg.entropy_threshold = ov.entropy_threshold;
    if (ov.pp_only) cfg.train.pp_only = true;
    if (ov.closed_set) cfg.closed_set = true;
    if (ov.workers > 0) cfg.workers = ov.workers;
    for (const auto& arm : ov.ablations) {
        if (arm == "no-sem")
            cfg.train.use_sem = false;
        else if (arm == "no-xhat")
            cfg.train.use_xhat = false;
        else if (arm == "manual-xhat")
            cfg.train.manual_xhat = true;
        else if (arm == "pp-only")
            cfg.train.pp_only = true;
        else if (arm == "gaussian-init")
            cfg.train.init_mode = "gaussian";
        else if (arm == "dom-front")
            cfg.train.dom_token_position = "front";
        else if (arm == "dom-middle")
            cfg.train.dom_token_position = "middle";
        else if (arm == "dom-end")
            cfg.train.dom_token_position = "end";
        else
            throw odg::ConfigError(
                "unknown ablation '" + arm +
                "' (expected no-sem|no-xhat|manual-xhat|pp-only|gaussian-init|dom-front|"
                "dom-middle|dom-end)");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-domain-generalization prompt-learning harness"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path;
    Overrides ov;
    app.add_option("-c,--config", config_path, "JSON config file")->required();
    app.add_option("--out", ov.out_dir, "output directory (overrides eval.out_dir)");
    app.add_option("--cache-dir", ov.cache_dir, "open-pool cache root");
    app.add_option("--seed", ov.seed, "training seed override");
    app.add_flag("--pp-only", ov.pp_only, "positive prompts only (no negatives)");
    app.add_option("--ablate", ov.ablations, "ablation arm(s) to enable")->delimiter(',');

    auto* gen = app.add_subcommand("generate-open", "synthesize + filter the pseudo-open pools");
    gen->add_option("--count", ov.count, "images per source domain before filtering");
    gen->add_option("--entropy-threshold", ov.entropy_threshold, "normalized entropy cutoff");

    std::string target, resume, checkpoint, baseline_ckpt;
    auto* tr = app.add_subcommand("train", "train one leave-one-domain-out split");
    tr->add_option("--target", target, "held-out domain (default: first)");
    tr->add_option("--resume", resume, "checkpoint to continue from");

    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on its held-out domain");
    ev->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    ev->add_option("--target", target, "held-out domain (default: from checkpoint)");

    auto* lodo = app.add_subcommand("lodo", "full leave-one-domain-out campaign");
    lodo->add_option("--seeds", ov.seeds, "seeded runs per split");
    lodo->add_flag("--closed-set", ov.closed_set, "closed-set DG reporting (Acc only)");
    lodo->add_option("--workers", ov.workers, "parallel split workers");

    auto* diag = app.add_subcommand("diagnose", "cosine table, Frechet matrix, openness sweep");
    diag->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    diag->add_option("--baseline-checkpoint", baseline_ckpt,
                     "second checkpoint for a paired comparison");

    CLI11_PARSE(app, argc, argv);

    try {
        odg::RunConfig cfg = odg::load_run_config(config_path);
        apply_overrides(cfg, ov);
        if (gen->parsed()) odg::cmd_generate_open(cfg);
        if (tr->parsed()) odg::cmd_train(cfg, target, resume);
        if (ev->parsed()) odg::cmd_evaluate(cfg, checkpoint, target);
        if (lodo->parsed()) odg::cmd_lodo(cfg);
        if (diag->parsed()) odg::cmd_diagnose(cfg, checkpoint, baseline_ckpt);
        return 0;
    } catch (const odg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
