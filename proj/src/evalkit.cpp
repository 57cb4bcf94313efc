#include "odg/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <sstream>

#include "odg/common.hpp"

namespace fs = std::filesystem;

namespace odg {

double accuracy(const std::vector<int>& preds, const std::vector<int>& gts,
                const std::vector<bool>& mask) {
    if (preds.size() != gts.size() || preds.size() != mask.size())
        throw ConfigError("accuracy: length mismatch");
    size_t total = 0, correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (!mask[i]) continue;
        ++total;
        if (preds[i] == gts[i]) ++correct;
    }
    if (total == 0) throw ConfigError("accuracy: empty masked subset");
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double h_score(double acc_closed, double acc_open) {
    if (acc_closed < 0 || acc_closed > 100 || acc_open < 0 || acc_open > 100)
        throw ConfigError("h_score: inputs must lie in [0,100]");
    if (acc_closed + acc_open == 0.0) return 0.0;
    return 2.0 * acc_closed * acc_open / (acc_closed + acc_open);
}

namespace {

// Cyclic Jacobi eigendecomposition for symmetric matrices; A is row-major
// d*d and gets destroyed. Ample for the feature dims used here.
void jacobi_eigen_sym(std::vector<double> A, int d, std::vector<double>& eigvals) {
    auto at = [&](int r, int c) -> double& { return A[static_cast<size_t>(r) * d + c]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                const double apq = at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < d; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
    }
    eigvals.resize(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) eigvals[static_cast<size_t>(i)] = at(i, i);
}

struct Gaussian {
    std::vector<double> mu;
    std::vector<double> cov;  // d*d row-major, shrinkage applied
};

Gaussian fit_gaussian(const std::vector<std::vector<double>>& feats, int d) {
    Gaussian g;
    g.mu.assign(static_cast<size_t>(d), 0.0);
    const double n = static_cast<double>(feats.size());
    for (const auto& f : feats)
        for (int i = 0; i < d; ++i) g.mu[static_cast<size_t>(i)] += f[static_cast<size_t>(i)] / n;
    g.cov.assign(static_cast<size_t>(d) * d, 0.0);
    for (const auto& f : feats)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                g.cov[static_cast<size_t>(i) * d + j] += (f[static_cast<size_t>(i)] - g.mu[static_cast<size_t>(i)]) *
                                                         (f[static_cast<size_t>(j)] - g.mu[static_cast<size_t>(j)]) / n;
    double trace = 0.0;
    for (int i = 0; i < d; ++i) trace += g.cov[static_cast<size_t>(i) * d + i];
    const double eps = std::max(1e-6 * trace / d, 1e-12);
    for (int i = 0; i < d; ++i) g.cov[static_cast<size_t>(i) * d + i] += eps;
    return g;
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int d) {
    std::vector<double> c(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            const double aik = a[static_cast<size_t>(i) * d + k];
            if (aik == 0.0) continue;
            for (int j = 0; j < d; ++j)
                c[static_cast<size_t>(i) * d + j] += aik * b[static_cast<size_t>(k) * d + j];
        }
    return c;
}

// Symmetric PSD square root via eigendecomposition.
std::vector<double> sqrtm_psd(const std::vector<double>& A, int d) {
    // need eigenvectors here, so run Jacobi with accumulation
    std::vector<double> M = A;
    std::vector<double> V(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) V[static_cast<size_t>(i) * d + i] = 1.0;
    auto at = [&](std::vector<double>& X, int r, int c) -> double& {
        return X[static_cast<size_t>(r) * d + c];
    };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += at(M, p, q) * at(M, p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                const double apq = at(M, p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (at(M, q, q) - at(M, p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < d; ++k) {
                    const double mkp = at(M, k, p), mkq = at(M, k, q);
                    at(M, k, p) = c * mkp - s * mkq;
                    at(M, k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < d; ++k) {
                    const double mpk = at(M, p, k), mqk = at(M, q, k);
                    at(M, p, k) = c * mpk - s * mqk;
                    at(M, q, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < d; ++k) {
                    const double vkp = at(V, k, p), vkq = at(V, k, q);
                    at(V, k, p) = c * vkp - s * vkq;
                    at(V, k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<double> out(static_cast<size_t>(d) * d, 0.0);
    for (int k = 0; k < d; ++k) {
        const double lam = std::sqrt(std::max(M[static_cast<size_t>(k) * d + k], 0.0));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                out[static_cast<size_t>(i) * d + j] +=
                    lam * V[static_cast<size_t>(i) * d + k] * V[static_cast<size_t>(j) * d + k];
    }
    return out;
}

}  // namespace

double frechet_distance(const std::vector<std::vector<double>>& feats_a,
                        const std::vector<std::vector<double>>& feats_b) {
    if (feats_a.empty() || feats_b.empty()) throw ConfigError("frechet_distance: empty feature set");
    const int d = static_cast<int>(feats_a[0].size());
    for (const auto* set : {&feats_a, &feats_b})
        for (const auto& f : *set) {
            if (static_cast<int>(f.size()) != d)
                throw ConfigError("frechet_distance: inconsistent feature dims");
            for (double v : f)
                if (!std::isfinite(v)) throw ConfigError("frechet_distance: non-finite feature");
        }
    const Gaussian ga = fit_gaussian(feats_a, d);
    const Gaussian gb = fit_gaussian(feats_b, d);

    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = ga.mu[static_cast<size_t>(i)] - gb.mu[static_cast<size_t>(i)];
        mean_term += diff * diff;
    }
    double tr_a = 0.0, tr_b = 0.0;
    for (int i = 0; i < d; ++i) {
        tr_a += ga.cov[static_cast<size_t>(i) * d + i];
        tr_b += gb.cov[static_cast<size_t>(i) * d + i];
    }
    const std::vector<double> sa = sqrtm_psd(ga.cov, d);
    std::vector<double> m = matmul_sq(matmul_sq(sa, gb.cov, d), sa, d);
    for (int i = 0; i < d; ++i)  // symmetrize against round-off
        for (int j = i + 1; j < d; ++j) {
            const double avg = 0.5 * (m[static_cast<size_t>(i) * d + j] + m[static_cast<size_t>(j) * d + i]);
            m[static_cast<size_t>(i) * d + j] = avg;
            m[static_cast<size_t>(j) * d + i] = avg;
        }
    std::vector<double> eig;
    jacobi_eigen_sym(std::move(m), d, eig);
    double tr_sqrt = 0.0;
    for (double lam : eig) tr_sqrt += std::sqrt(std::max(lam, 0.0));
    return std::max(mean_term + tr_a + tr_b - 2.0 * tr_sqrt, 0.0);
}

SplitEval evaluate_split(const Model& model, const DomainSuite& suite, const SplitSpec& split) {
    SplitEval ev;
    ev.target = split.target;
    size_t closed_total = 0, closed_correct = 0, open_total = 0, open_correct = 0;
    for (const auto& s : suite.samples) {
        if (s.domain != split.target) continue;
        const auto [label, post] = predict(model, s.image);
        const int gt = split.label_index(s.label);
        if (gt >= 0 && gt < split.num_known()) {
            ++closed_total;
            if (label == s.label) ++closed_correct;
        } else {
            ++open_total;
            if (label == kUnknownLabel) ++open_correct;
        }
    }
    if (closed_total == 0) throw RuntimeFailure("evaluate_split: target has no known-class samples");
    ev.n_closed = static_cast<int>(closed_total);
    ev.n_open = static_cast<int>(open_total);
    ev.acc_closed = 100.0 * static_cast<double>(closed_correct) / static_cast<double>(closed_total);
    if (open_total > 0) {
        ev.acc_open = 100.0 * static_cast<double>(open_correct) / static_cast<double>(open_total);
        ev.h = h_score(ev.acc_closed, *ev.acc_open);
    }
    return ev;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : per_target) {
        nlohmann::json row{{"target", t.target},
                           {"acc_closed", t.acc_closed},
                           {"n_closed", t.n_closed},
                           {"n_open", t.n_open}};
        if (t.acc_open) row["acc_open"] = *t.acc_open;
        if (t.h) row["h_score"] = *t.h;
        targets.push_back(std::move(row));
    }
    nlohmann::json j{{"per_target", targets}, {"mean_acc", mean_acc}, {"metadata", metadata}};
    if (mean_h) j["mean_h"] = *mean_h;
    return j;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "target,acc_closed,acc_open,h_score,n_closed,n_open\n";
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string{};
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", *v);
        return std::string(buf);
    };
    for (const auto& t : per_target) {
        char acc[32];
        std::snprintf(acc, sizeof(acc), "%.4f", t.acc_closed);
        os << t.target << "," << acc << "," << cell(t.acc_open) << "," << cell(t.h) << ","
           << t.n_closed << "," << t.n_open << "\n";
    }
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.4f", mean_acc);
    os << "mean," << acc << ",," << cell(mean_h) << ",,\n";
    return os.str();
}

EvalReport run_lodo(const DomainSuite& suite, const std::optional<ClassSplit>& class_split,
                    const LodoConfig& cfg, std::shared_ptr<EncoderBackend> backend,
                    GeneratorBackend& generator, const std::string& out_dir) {
    const auto splits = make_lodo_splits(suite, class_split);
    if (!out_dir.empty()) fs::create_directories(out_dir);

    // Pools are built up front (sequentially) so parallel split workers only
    // ever read the cache.
    std::vector<OpenPool> pools(splits.size());
    for (size_t i = 0; i < splits.size(); ++i) {
        if (cfg.train.open_fraction <= 0.0) continue;
        PoolBuildConfig pc;
        pc.domains = splits[i].sources;
        pc.known_classes = splits[i].known_labels;
        pc.count_per_domain = cfg.pool_count_per_domain;
        pc.threshold = cfg.pool_threshold;
        pc.pp_only = cfg.train.pp_only;
        pc.seed = cfg.pool_seed;
        pc.cache_dir = cfg.pool_cache_dir;
        pools[i] = build_open_pool(generator, pc);
    }

    struct PerSplitResult {
        SplitEval averaged;
        nlohmann::json seed_rows;
    };
    auto run_split = [&](size_t idx) -> PerSplitResult {
        const auto& split = splits[idx];
        PerSplitResult out;
        out.averaged.target = split.target;
        out.seed_rows = nlohmann::json::array();
        double sum_closed = 0.0, sum_open = 0.0, sum_h = 0.0;
        int with_open = 0;
        for (int k = 0; k < cfg.eval_seeds; ++k) {
            TrainConfig tc = cfg.train;
            tc.seed = cfg.train.seed + static_cast<uint64_t>(k);
            const TrainResult tr = train(split, suite, pools[idx], backend, tc, cfg.shape);
            const Model model = model_from_checkpoint(tr.checkpoint, backend);
            const SplitEval ev = evaluate_split(model, suite, split);
            sum_closed += ev.acc_closed;
            if (ev.acc_open) {
                sum_open += *ev.acc_open;
                sum_h += *ev.h;
                ++with_open;
            }
            out.averaged.n_closed = ev.n_closed;
            out.averaged.n_open = ev.n_open;
            nlohmann::json row{{"seed", tc.seed}, {"acc_closed", ev.acc_closed}};
            if (ev.acc_open) {
                row["acc_open"] = *ev.acc_open;
                row["h_score"] = *ev.h;
            }
            out.seed_rows.push_back(std::move(row));
        }
        out.averaged.acc_closed = sum_closed / cfg.eval_seeds;
        if (with_open == cfg.eval_seeds && !cfg.closed_set) {
            out.averaged.acc_open = sum_open / cfg.eval_seeds;
            out.averaged.h = sum_h / cfg.eval_seeds;
        }
        return out;
    };

    std::vector<PerSplitResult> results(splits.size());
    if (cfg.workers > 1) {
        std::vector<std::future<PerSplitResult>> futures;
        for (size_t i = 0; i < splits.size(); ++i)
            futures.push_back(std::async(std::launch::async, run_split, i));
        for (size_t i = 0; i < splits.size(); ++i) results[i] = futures[i].get();
    } else {
        for (size_t i = 0; i < splits.size(); ++i) {
            results[i] = run_split(i);
            if (!out_dir.empty()) {  // partial persistence as splits finish
                nlohmann::json partial{{"target", splits[i].target},
                                       {"acc_closed", results[i].averaged.acc_closed},
                                       {"seeds", results[i].seed_rows}};
                if (results[i].averaged.h) partial["h_score"] = *results[i].averaged.h;
                std::ofstream out(fs::path(out_dir) / ("split_" + splits[i].target + ".json"));
                out << partial.dump(2) << "\n";
            }
        }
    }

    EvalReport report;
    nlohmann::json seeds_meta = nlohmann::json::array();
    double sum_acc = 0.0, sum_h = 0.0;
    int with_h = 0;
    for (size_t i = 0; i < results.size(); ++i) {
        report.per_target.push_back(results[i].averaged);
        sum_acc += results[i].averaged.acc_closed;
        if (results[i].averaged.h) {
            sum_h += *results[i].averaged.h;
            ++with_h;
        }
        seeds_meta.push_back({{"target", splits[i].target}, {"seeds", results[i].seed_rows}});
    }
    report.mean_acc = sum_acc / static_cast<double>(results.size());
    if (with_h == static_cast<int>(results.size()) && with_h > 0) report.mean_h = sum_h / with_h;
    report.metadata["per_seed"] = seeds_meta;
    report.metadata["eval_seeds"] = cfg.eval_seeds;
    report.metadata["closed_set"] = cfg.closed_set;
    return report;
}

std::vector<OpennessPoint> openness_sweep(const Model& model, const DomainSuite& suite,
                                          const SplitSpec& split,
                                          const std::vector<std::vector<std::string>>& partitions) {
    std::vector<OpennessPoint> curve;
    const auto& order = model.prompts.class_order;
    std::set<std::string> target_labels = suite.label_sets.at(split.target);
    for (const auto& known : partitions) {
        if (known.empty()) throw ConfigError("openness_sweep: empty known side");
        std::vector<int> known_idx;
        for (const auto& k : known) {
            const int idx = split.label_index(k);
            if (idx < 0 || idx >= split.num_known())
                throw ConfigError("openness_sweep: partition label '" + k + "' is not a known class");
            known_idx.push_back(idx);
        }
        std::set<std::string> known_set(known.begin(), known.end());
        int n_unknown = 0;
        for (const auto& t : target_labels)
            if (!known_set.count(t)) ++n_unknown;
        if (n_unknown == 0) throw ConfigError("openness_sweep: partition leaves no open labels");

        size_t closed_total = 0, closed_correct = 0, open_total = 0, open_correct = 0;
        for (const auto& s : suite.samples) {
            if (s.domain != split.target) continue;
            NoGradGuard eval;
            const auto fwd = model.forward_image(s.image);
            // classifier restricted to the partition's classes + unknown
            std::vector<double> logits;
            std::vector<int> candidates = known_idx;
            candidates.push_back(split.unknown_index());
            for (int c : candidates) logits.push_back(fwd.logits.values()[static_cast<size_t>(c)]);
            const auto probs = softmax_from_logits(logits);
            int best = 0;
            for (size_t i = 1; i < probs.size(); ++i)
                if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
            const std::string pred = order[static_cast<size_t>(candidates[static_cast<size_t>(best)])];
            if (known_set.count(s.label)) {
                ++closed_total;
                if (pred == s.label) ++closed_correct;
            } else {
                ++open_total;
                if (pred == kUnknownLabel) ++open_correct;
            }
        }
        OpennessPoint pt;
        pt.known = known;
        pt.n_unknown = n_unknown;
        pt.acc_closed = closed_total ? 100.0 * static_cast<double>(closed_correct) / closed_total : 0.0;
        pt.acc_open = open_total ? 100.0 * static_cast<double>(open_correct) / open_total : 0.0;
        pt.h = h_score(pt.acc_closed, pt.acc_open);
        curve.push_back(std::move(pt));
    }
    return curve;
}

std::map<std::string, double> xhat_cosine_diagnostic(const Model& model,
                                                     const std::vector<LabeledImage>& items) {
    NoGradGuard eval;
    // class -> domain -> |x_hat| vectors
    std::map<std::string, std::map<std::string, std::vector<std::vector<double>>>> groups;
    for (const auto& item : items) {
        const auto it = std::find(model.prompts.class_order.begin(), model.prompts.class_order.end(),
                                  item.label);
        if (it == model.prompts.class_order.end()) continue;
        const auto fwd = model.forward_image(item.image);
        if (fwd.differentials.empty())
            throw ConfigError("xhat_cosine_diagnostic: model runs without differentials");
        const size_t idx = static_cast<size_t>(it - model.prompts.class_order.begin());
        std::vector<double> a = fwd.differentials[idx].values();
        for (auto& v : a) v = std::fabs(v);
        groups[item.label][item.domain].push_back(std::move(a));
    }
    std::map<std::string, double> out;
    for (const auto& [cls, by_domain] : groups) {
        if (by_domain.size() < 2) {
            std::cerr << "warning: class '" << cls << "' present in fewer than 2 domains; skipped\n";
            continue;
        }
        double sum = 0.0;
        size_t pairs = 0;
        std::vector<std::pair<std::string, const std::vector<std::vector<double>>*>> doms;
        for (const auto& [d, vecs] : by_domain) doms.emplace_back(d, &vecs);
        for (size_t a = 0; a < doms.size(); ++a)
            for (size_t b = a + 1; b < doms.size(); ++b)
                for (const auto& va : *doms[a].second)
                    for (const auto& vb : *doms[b].second) {
                        double dot = 0.0, na = 0.0, nb = 0.0;
                        for (size_t i = 0; i < va.size(); ++i) {
                            dot += va[i] * vb[i];
                            na += va[i] * va[i];
                            nb += vb[i] * vb[i];
                        }
                        sum += dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
                        ++pairs;
                    }
        out[cls] = sum / static_cast<double>(pairs);
    }
    return out;
}

std::map<std::string, std::vector<std::vector<double>>> domain_features(
    const Model& model, const std::vector<LabeledImage>& items) {
    NoGradGuard eval;
    std::map<std::string, std::vector<std::vector<double>>> out;
    for (const auto& item : items) {
        if (!model.cfg.use_xhat) {
            out[item.domain].push_back(model.backend->visual_encode(item.image).embedding.values());
            continue;
        }
        const auto fwd = model.forward_image(item.image);
        const auto probs = softmax_from_logits(fwd.logits.values());
        int best = 0;
        for (size_t i = 1; i < probs.size(); ++i)
            if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
        // embed the latent image under the predicted class
        const std::string cls = model.prompts.class_order[static_cast<size_t>(best)];
        Tensor emb = latent_embed(*model.backend, model.prompts, model.upsampler, model.fuser,
                                  item.image, cls);
        out[item.domain].push_back(emb.values());
    }
    return out;
}

}  // namespace odg
