#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "odg/engine.hpp"

namespace odg {

// Top-1 accuracy (percent) on the masked subset.
double accuracy(const std::vector<int>& preds, const std::vector<int>& gts,
                const std::vector<bool>& mask);

// Harmonic mean of two percentages; 0 when both are 0.
double h_score(double acc_closed, double acc_open);

// 2-Wasserstein distance between Gaussians fit to two feature sets:
// ||mu_A - mu_B||^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}). Covariances get
// shrinkage eps*I with eps = 1e-6 * trace/d before the matrix square root.
double frechet_distance(const std::vector<std::vector<double>>& feats_a,
                        const std::vector<std::vector<double>>& feats_b);

struct SplitEval {
    std::string target;
    double acc_closed = 0.0;               // percent, known classes
    std::optional<double> acc_open;        // percent, unknown recall on true-open
    std::optional<double> h;               // harmonic mean of the two
    int n_closed = 0;
    int n_open = 0;
};

// Scores one trained model on the held-out target domain of its split.
SplitEval evaluate_split(const Model& model, const DomainSuite& suite, const SplitSpec& split);

struct EvalReport {
    std::vector<SplitEval> per_target;  // seed-averaged
    double mean_acc = 0.0;
    std::optional<double> mean_h;
    nlohmann::json metadata;  // config echo, per-seed rows, references

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

struct LodoConfig {
    TrainConfig train;
    ModelShape shape;
    int eval_seeds = 3;       // seeds {s, s+1, s+2}
    bool closed_set = false;  // Acc-only reporting
    int workers = 1;
    int pool_count_per_domain = 16;
    double pool_threshold = 0.2;
    uint64_t pool_seed = 0;
    std::string pool_cache_dir;
};

// Leave-one-domain-out campaign: one pool + model per (split, seed),
// evaluation on the held-out domain, averages over seeds then over targets.
// When out_dir is set, each completed split is persisted immediately.
EvalReport run_lodo(const DomainSuite& suite, const std::optional<ClassSplit>& class_split,
                    const LodoConfig& cfg, std::shared_ptr<EncoderBackend> backend,
                    GeneratorBackend& generator, const std::string& out_dir = "");

struct OpennessPoint {
    std::vector<std::string> known;  // candidate classes offered to the model
    int n_unknown = 0;               // target labels scored as open
    double acc_closed = 0.0;
    double acc_open = 0.0;
    double h = 0.0;
};

// H-score under re-partitions of the target label set. Each partition lists
// the labels treated as known; every other target label counts as open and
// the classifier is restricted to the partition plus the unknown prompt.
std::vector<OpennessPoint> openness_sweep(const Model& model, const DomainSuite& suite,
                                          const SplitSpec& split,
                                          const std::vector<std::vector<std::string>>& partitions);

struct LabeledImage {
    Image image;
    std::string label;
    std::string domain;
};

// Per-class mean cross-domain pairwise cosine of |x_hat|. Classes present in
// fewer than two domains are skipped (with a warning on stderr).
std::map<std::string, double> xhat_cosine_diagnostic(const Model& model,
                                                     const std::vector<LabeledImage>& items);

// Latent visual embeddings under the model's predicted class, grouped by
// domain; the feature sets fed to frechet_distance.
std::map<std::string, std::vector<std::vector<double>>> domain_features(
    const Model& model, const std::vector<LabeledImage>& items);

}  // namespace odg
