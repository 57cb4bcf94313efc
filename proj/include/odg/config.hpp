#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "odg/datasets.hpp"
#include "odg/engine.hpp"
#include "odg/opengen.hpp"

namespace odg {

// Schema-validated run configuration. Unknown keys anywhere are rejected;
// every field has a documented default. The effective (default-expanded)
// form is echoed into every output directory.
struct RunConfig {
    // dataset
    std::string dataset_type = "toy";  // toy | directory
    std::string dataset_root;
    int image_size = 224;
    uint64_t toy_seed = 7;
    int toy_domains = 3;
    int toy_classes = 6;
    int toy_per_cell = 8;
    int toy_image_size = 32;
    std::optional<ClassSplit> class_split;

    // backend descriptor (passed to make_backend verbatim)
    nlohmann::json backend = {{"backend", "mock"}, {"seed", 1},       {"d_v", 64},
                              {"d_tok", 32},       {"d_t", 64},       {"n_patch_tokens", 16}};

    ModelShape shape;

    // opengen
    std::string generator = "stub";  // stub | diffusion
    double entropy_threshold = 0.2;
    int pool_count = 0;  // 0: open quota * steps_per_epoch_cap
    int steps_per_epoch_cap = 20;
    uint64_t pool_seed = 11;
    std::string cache_dir;  // default: {out_dir}/pool_cache or $ODG_CACHE_ROOT
    DiffusionClientConfig diffusion;

    TrainConfig train;

    // eval
    int eval_seeds = 3;
    std::string out_dir = "out";
    int workers = 1;
    bool closed_set = false;
    int diagnostic_max_per_cell = 4;
    std::vector<std::vector<std::string>> openness_partitions;
    nlohmann::json reference;  // free-form scores echoed into report metadata

    DomainSuite load_dataset() const;
    std::string effective_cache_dir() const;
    int effective_pool_count() const;
    nlohmann::json effective_json() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace odg
