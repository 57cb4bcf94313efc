#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "odg/losses.hpp"
#include "odg/model.hpp"
#include "odg/opengen.hpp"

namespace odg {

struct TrainConfig {
    int epochs = 10;
    double base_lr = 0.01;  // warm-up target
    int batch_size = 32;
    double open_fraction = 0.25;
    double tau = 0.01;
    uint64_t seed = 0;
    int steps_per_epoch = 0;  // 0: ceil(|real pool| / (batch_size - open quota))
    double warmup_frac = 0.1;

    // ablation switches
    bool use_sem = true;
    bool use_xhat = true;
    bool manual_xhat = false;
    bool pp_only = false;  // recorded here, applied by the pool builder
    std::string init_mode = "phrase";  // phrase | gaussian
    std::string dom_token_position = "front";

    nlohmann::json to_json() const;
};

struct ModelShape {
    int context_len_cls = 4;
    int context_len_dom = 4;
    std::array<int, 3> upsampler_widths = {16, 16, 8};
    int fuse_kernel = 1;

    nlohmann::json to_json() const;
};

// Linear warm-up to base_lr over the first warmup_frac of steps, then cosine
// decay to zero.
double lr_at(int step, int total_steps, double base_lr, double warmup_frac);

class AdamOptimizer {
public:
    explicit AdamOptimizer(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8);
    void step(double lr);
    void zero_grad();

private:
    struct Slot {
        Tensor p;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_;
    int t_ = 0;
};

struct StepLog {
    int step;
    double l_con;
    double l_sem;
    int n_sem_pairs;
    double lr;
};

struct Checkpoint {
    nlohmann::json meta;  // version, config echo, label ordering, log digest
    struct NamedTensor {
        std::vector<int> shape;
        std::vector<double> values;
    };
    std::map<std::string, NamedTensor> tensors;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepLog> log;
};

// Trains prompts + projectors on one split. The backend is never touched:
// its parameter hash is the caller's frozenness witness. Deterministic for a
// fixed seed. When `log_path` is set, one JSON line per step is appended.
TrainResult train(const SplitSpec& split, const DomainSuite& suite, const OpenPool& open_pool,
                  std::shared_ptr<EncoderBackend> backend, const TrainConfig& cfg,
                  const ModelShape& shape, const std::string& log_path = "");

// Continues a previous run towards cfg.epochs * steps_per_epoch total steps.
// Optimizer moments restart; the step counter and schedule do not.
TrainResult train_resume(const SplitSpec& split, const DomainSuite& suite,
                         const OpenPool& open_pool, std::shared_ptr<EncoderBackend> backend,
                         const TrainConfig& cfg, const ModelShape& shape, const Checkpoint& prev,
                         const std::string& log_path = "");

std::pair<std::string, Posterior> predict(const Model& model, const Image& image);

Checkpoint checkpoint_from_model(const Model& model, nlohmann::json extra_meta);
Model model_from_checkpoint(const Checkpoint& ck, std::shared_ptr<EncoderBackend> backend);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace odg
