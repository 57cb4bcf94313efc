#include "odg/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "odg/common.hpp"
#include "odg/evalkit.hpp"
#include "odg/plot.hpp"

namespace fs = std::filesystem;

namespace odg {

namespace {

void echo_config(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "effective_config.json");
    out << cfg.effective_json().dump(2) << "\n";
}

std::unique_ptr<GeneratorBackend> make_generator(const RunConfig& cfg) {
    if (cfg.generator == "stub") {
        const int size = cfg.dataset_type == "toy" ? cfg.toy_image_size : cfg.image_size;
        return make_stub_generator(cfg.pool_seed, size);
    }
    return make_diffusion_client(cfg.diffusion);
}

const SplitSpec& select_split(const std::vector<SplitSpec>& splits, const std::string& target) {
    if (target.empty()) return splits.front();
    for (const auto& s : splits)
        if (s.target == target) return s;
    throw ConfigError("no split with target domain '" + target + "'");
}

PoolBuildConfig pool_config_for(const RunConfig& cfg, const SplitSpec& split) {
    PoolBuildConfig pc;
    pc.domains = split.sources;
    pc.known_classes = split.known_labels;
    pc.count_per_domain = cfg.effective_pool_count();
    pc.threshold = cfg.entropy_threshold;
    pc.pp_only = cfg.train.pp_only;
    pc.seed = cfg.pool_seed;
    pc.cache_dir = cfg.effective_cache_dir();
    return pc;
}

// Subsample per (domain, class) cell so diagnostics stay desk-sized.
std::vector<LabeledImage> diagnostic_items(const DomainSuite& suite, int max_per_cell) {
    std::map<std::pair<std::string, std::string>, int> counts;
    std::vector<LabeledImage> items;
    for (const auto& s : suite.samples) {
        auto& c = counts[{s.domain, s.label}];
        if (c >= max_per_cell) continue;
        ++c;
        items.push_back({s.image, s.label, s.domain});
    }
    return items;
}

}  // namespace

std::string cmd_generate_open(const RunConfig& cfg) {
    const fs::path out_dir = cfg.out_dir;
    echo_config(cfg, out_dir);
    const DomainSuite suite = cfg.load_dataset();
    const auto splits = make_lodo_splits(suite, cfg.class_split);
    auto gen = make_generator(cfg);
    size_t total = 0, accepted = 0;
    std::string last_manifest;
    for (const auto& split : splits) {
        const PoolBuildConfig pc = pool_config_for(cfg, split);
        const OpenPool pool = build_open_pool(*gen, pc);
        total += pool.meta.size();
        accepted += pool.accepted_count();
        last_manifest = (fs::path(pc.cache_dir)).string();
    }
    std::cout << "open pool: " << accepted << "/" << total << " images accepted ("
              << (total ? 100.0 * static_cast<double>(accepted) / static_cast<double>(total) : 0.0)
              << "% at threshold " << cfg.entropy_threshold << ")\n";
    return last_manifest;
}

std::string cmd_train(const RunConfig& cfg, const std::string& target,
                      const std::string& resume_path) {
    const fs::path out_dir = cfg.out_dir;
    echo_config(cfg, out_dir);
    const DomainSuite suite = cfg.load_dataset();
    const auto splits = make_lodo_splits(suite, cfg.class_split);
    const SplitSpec& split = select_split(splits, target);

    OpenPool pool;
    if (cfg.train.open_fraction > 0.0) pool = load_open_pool(pool_config_for(cfg, split));

    auto backend = make_backend(cfg.backend);
    const uint64_t pre_hash = backend->param_hash();

    fs::create_directories(out_dir / "logs");
    const std::string log_path =
        (out_dir / "logs" / ("train_" + split.target + "_seed" + std::to_string(cfg.train.seed) +
                             ".jsonl"))
            .string();

    TrainResult result;
    if (!resume_path.empty()) {
        const Checkpoint prev = load_checkpoint(resume_path);
        result = train_resume(split, suite, pool, backend, cfg.train, cfg.shape, prev, log_path);
    } else {
        result = train(split, suite, pool, backend, cfg.train, cfg.shape, log_path);
    }
    if (backend->param_hash() != pre_hash)
        throw RuntimeFailure("frozen-encoder contract violated during training");

    fs::create_directories(out_dir / "checkpoints");
    const std::string ckpt_path =
        (out_dir / "checkpoints" /
         (split.target + "_seed" + std::to_string(cfg.train.seed) + ".ckpt"))
            .string();
    save_checkpoint(result.checkpoint, ckpt_path);
    std::cout << "trained split target=" << split.target << " steps=" << result.log.size()
              << " final l_con=" << (result.log.empty() ? 0.0 : result.log.back().l_con)
              << "\ncheckpoint: " << ckpt_path << "\n";
    return ckpt_path;
}

std::string cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& target) {
    const fs::path out_dir = fs::path(cfg.out_dir) / "reports";
    echo_config(cfg, out_dir);
    const DomainSuite suite = cfg.load_dataset();
    const auto splits = make_lodo_splits(suite, cfg.class_split);

    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const std::string ck_target = ck.meta.value("target", std::string{});
    const SplitSpec& split = select_split(splits, target.empty() ? ck_target : target);

    auto backend = make_backend(cfg.backend);
    const Model model = model_from_checkpoint(ck, backend);
    if (model.prompts.class_order != split.augmented_labels)
        throw ConfigError("checkpoint label ordering does not match the selected split");

    const SplitEval ev = evaluate_split(model, suite, split);
    EvalReport report;
    report.per_target.push_back(ev);
    report.mean_acc = ev.acc_closed;
    report.mean_h = ev.h;
    report.metadata["checkpoint"] = checkpoint_path;
    if (!cfg.reference.is_null()) report.metadata["reference"] = cfg.reference;

    const std::string json_path = (out_dir / ("eval_" + split.target + ".json")).string();
    std::ofstream(json_path) << report.to_json().dump(2) << "\n";
    std::ofstream((out_dir / ("eval_" + split.target + ".csv")).string()) << report.to_csv();
    std::cout << "target=" << split.target << " acc=" << ev.acc_closed;
    if (ev.h) std::cout << " h=" << *ev.h;
    std::cout << "\nreport: " << json_path << "\n";
    return json_path;
}

std::string cmd_lodo(const RunConfig& cfg) {
    const fs::path out_dir = fs::path(cfg.out_dir) / "reports";
    echo_config(cfg, fs::path(cfg.out_dir));
    const DomainSuite suite = cfg.load_dataset();
    auto backend = make_backend(cfg.backend);
    auto gen = make_generator(cfg);

    LodoConfig lc;
    lc.train = cfg.train;
    lc.shape = cfg.shape;
    lc.eval_seeds = cfg.eval_seeds;
    lc.closed_set = cfg.closed_set;
    lc.workers = cfg.workers;
    lc.pool_count_per_domain = cfg.effective_pool_count();
    lc.pool_threshold = cfg.entropy_threshold;
    lc.pool_seed = cfg.pool_seed;
    lc.pool_cache_dir = cfg.effective_cache_dir();

    EvalReport report = run_lodo(suite, cfg.class_split, lc, backend, *gen, out_dir.string());
    report.metadata["config"] = cfg.effective_json();
    if (!cfg.reference.is_null()) report.metadata["reference"] = cfg.reference;

    const std::string json_path = (out_dir / "lodo_report.json").string();
    std::ofstream(json_path) << report.to_json().dump(2) << "\n";
    std::ofstream((out_dir / "lodo_report.csv").string()) << report.to_csv();

    std::vector<std::pair<std::string, double>> bars;
    for (const auto& row : report.per_target)
        bars.emplace_back(row.target, row.h ? *row.h : row.acc_closed);
    plot_bars(bars, 100.0, (out_dir / "lodo_scores.png").string());

    std::cout << "mean acc=" << report.mean_acc;
    if (report.mean_h) std::cout << " mean h=" << *report.mean_h;
    std::cout << "\nreport: " << json_path << "\n";
    return json_path;
}

std::string cmd_diagnose(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& baseline_checkpoint_path) {
    const fs::path out_dir = fs::path(cfg.out_dir) / "diagnostics";
    echo_config(cfg, out_dir);
    const DomainSuite suite = cfg.load_dataset();
    const auto splits = make_lodo_splits(suite, cfg.class_split);

    auto backend = make_backend(cfg.backend);
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Model model = model_from_checkpoint(ck, backend);
    const SplitSpec& split = select_split(splits, ck.meta.value("target", std::string{}));

    std::vector<LabeledImage> items = diagnostic_items(suite, cfg.diagnostic_max_per_cell);
    // pseudo-open items participate with their pseudo-domain tags
    if (cfg.train.open_fraction > 0.0) {
        try {
            const OpenPool pool = load_open_pool(pool_config_for(cfg, split));
            std::map<std::string, int> per_domain;
            for (const auto& o : pool.images) {
                if (per_domain[o.pseudo_domain]++ >= cfg.diagnostic_max_per_cell) continue;
                items.push_back({o.image, kUnknownLabel, o.pseudo_domain});
            }
        } catch (const ConfigError&) {
            std::cerr << "warning: no open pool cached; unknown-class diagnostic skipped\n";
        }
    }

    // x_hat cosine table (optionally paired against a second checkpoint)
    const auto cosines = xhat_cosine_diagnostic(model, items);
    std::map<std::string, double> baseline_cosines;
    if (!baseline_checkpoint_path.empty()) {
        const Model baseline =
            model_from_checkpoint(load_checkpoint(baseline_checkpoint_path), backend);
        baseline_cosines = xhat_cosine_diagnostic(baseline, items);
    }
    {
        std::ofstream csv(out_dir / "xhat_cosine.csv");
        csv << "class,mean_cosine" << (baseline_cosines.empty() ? "" : ",baseline_mean_cosine")
            << "\n";
        std::vector<std::string> labels;
        std::vector<std::vector<double>> series(baseline_cosines.empty() ? 1 : 2);
        for (const auto& [cls, v] : cosines) {
            csv << cls << "," << v;
            labels.push_back(cls);
            series[0].push_back(v);
            if (!baseline_cosines.empty()) {
                const double b = baseline_cosines.count(cls) ? baseline_cosines.at(cls) : 0.0;
                csv << "," << b;
                series[1].push_back(b);
            }
            csv << "\n";
        }
        if (!labels.empty())
            plot_grouped_bars(labels, series, 1.0, (out_dir / "xhat_cosine.png").string());
    }

    // Frechet matrix over domain feature sets
    const auto feats = domain_features(model, items);
    {
        std::vector<std::string> domains;
        for (const auto& [d, _] : feats) domains.push_back(d);
        nlohmann::json matrix = nlohmann::json::object();
        std::ofstream csv(out_dir / "frechet.csv");
        csv << "domain";
        for (const auto& d : domains) csv << "," << d;
        csv << "\n";
        std::map<std::pair<std::string, std::string>, double> cache;
        for (const auto& a : domains) {
            csv << a;
            for (const auto& b : domains) {
                double v = 0.0;
                if (a != b) {
                    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
                    auto it = cache.find(key);
                    if (it == cache.end())
                        it = cache.emplace(key, frechet_distance(feats.at(key.first),
                                                                 feats.at(key.second)))
                                 .first;
                    v = it->second;
                }
                csv << "," << v;
                matrix[a][b] = v;
            }
            csv << "\n";
        }
        std::ofstream(out_dir / "frechet.json") << matrix.dump(2) << "\n";
    }

    // openness sweep
    std::vector<std::vector<std::string>> partitions = cfg.openness_partitions;
    if (partitions.empty() && split.num_known() >= 2) {
        // default: shrink the known side one class at a time
        for (int keep = split.num_known(); keep >= std::max(1, split.num_known() - 2); --keep) {
            if (keep == split.num_known() && split.target_open_labels.empty()) continue;
            partitions.push_back({split.known_labels.begin(), split.known_labels.begin() + keep});
        }
    }
    if (!partitions.empty()) {
        const auto curve = openness_sweep(model, suite, split, partitions);
        nlohmann::json jcurve = nlohmann::json::array();
        std::vector<std::pair<double, double>> pts;
        for (const auto& pt : curve) {
            jcurve.push_back({{"known", pt.known},
                              {"n_unknown", pt.n_unknown},
                              {"acc_closed", pt.acc_closed},
                              {"acc_open", pt.acc_open},
                              {"h_score", pt.h}});
            pts.emplace_back(static_cast<double>(pt.known.size()), pt.h);
        }
        std::ofstream(out_dir / "openness.json") << jcurve.dump(2) << "\n";
        std::sort(pts.begin(), pts.end());
        plot_curve(pts, (out_dir / "openness_curve.png").string());
    }

    std::cout << "diagnostics written to " << out_dir.string() << "\n";
    return out_dir.string();
}

}  // namespace odg
