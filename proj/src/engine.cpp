#include "odg/engine.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "odg/common.hpp"

namespace odg {

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"base_lr", base_lr},
            {"batch_size", batch_size},
            {"open_fraction", open_fraction},
            {"tau", tau},
            {"seed", seed},
            {"steps_per_epoch", steps_per_epoch},
            {"warmup_frac", warmup_frac},
            {"use_sem", use_sem},
            {"use_xhat", use_xhat},
            {"manual_xhat", manual_xhat},
            {"pp_only", pp_only},
            {"init_mode", init_mode},
            {"dom_token_position", dom_token_position}};
}

nlohmann::json ModelShape::to_json() const {
    return {{"context_len_cls", context_len_cls},
            {"context_len_dom", context_len_dom},
            {"upsampler_widths", upsampler_widths},
            {"fuse_kernel", fuse_kernel}};
}

double lr_at(int step, int total_steps, double base_lr, double warmup_frac) {
    const int warmup = std::max(1, static_cast<int>(warmup_frac * total_steps));
    if (step < warmup) return base_lr * static_cast<double>(step + 1) / warmup;
    const int tail = std::max(1, total_steps - warmup);
    const double progress = static_cast<double>(step - warmup) / tail;
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params) {
        Slot s;
        s.p = p;
        s.m.assign(p.size(), 0.0);
        s.v.assign(p.size(), 0.0);
        slots_.push_back(std::move(s));
    }
}

void AdamOptimizer::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& s : slots_) {
        if (s.p.grad().size() != s.p.size()) continue;  // untouched this step
        auto& vals = s.p.values();
        const auto& g = s.p.grad();
        for (size_t i = 0; i < vals.size(); ++i) {
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
            vals[i] -= lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& s : slots_) s.p.zero_grad();
}

namespace {

uint64_t log_digest(const std::vector<StepLog>& log) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& l : log) {
        h = fnv1a(&l.step, sizeof(l.step), h);
        h = fnv1a(&l.l_con, sizeof(l.l_con), h);
        h = fnv1a(&l.l_sem, sizeof(l.l_sem), h);
    }
    return h;
}

constexpr char kCkptMagic[8] = {'O', 'D', 'G', 'C', 'K', 'P', 'T', '\x01'};
constexpr int kCkptVersion = 1;

}  // namespace

namespace {

void validate_train_config(const TrainConfig& cfg, const OpenPool& open_pool) {
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (cfg.base_lr <= 0.0) throw ConfigError("train: base_lr must be > 0");
    if (cfg.batch_size < 4) throw ConfigError("train: batch_size must be >= 4");
    if (cfg.open_fraction > 0.0 && open_pool.images.empty())
        throw ConfigError("train: open_fraction > 0 but the open pool is empty");
}

TrainResult train_loop(Model model, const SplitSpec& split, const DomainSuite& suite,
                       const OpenPool& open_pool, const TrainConfig& cfg, const ModelShape& shape,
                       int start_step, const std::string& log_path) {
    const auto real_pool = real_pool_for(suite, split);
    if (real_pool.empty()) throw ConfigError("train: no source samples for split " + split.target);
    const int open_quota = static_cast<int>(std::lround(cfg.open_fraction * cfg.batch_size));
    const int real_per_batch = std::max(1, cfg.batch_size - open_quota);
    const int steps_per_epoch =
        cfg.steps_per_epoch > 0
            ? cfg.steps_per_epoch
            : static_cast<int>((real_pool.size() + real_per_batch - 1) / real_per_batch);
    const int total_steps = steps_per_epoch * cfg.epochs;

    AdamOptimizer opt(model.trainables());
    Rng batch_rng(Rng::seed_mix(cfg.seed, 0xBA7C4 + static_cast<uint64_t>(start_step)));
    std::ofstream log_out;
    if (!log_path.empty()) {
        log_out.open(log_path);
        if (!log_out) throw RuntimeFailure("train: cannot open log file " + log_path);
    }

    TrainResult result;
    for (int step = start_step; step < total_steps; ++step) {
        const TrainBatch batch = sample_batch(split, real_pool, open_pool.images, cfg.batch_size,
                                              cfg.open_fraction, batch_rng);
        const double lr = lr_at(step, total_steps, cfg.base_lr, cfg.warmup_frac);
        TotalLoss tl = total_loss(model, batch);
        if (!std::isfinite(tl.report.total))
            throw RuntimeFailure("train: diverged (non-finite loss) at step " +
                                 std::to_string(step));
        tl.root.backward();
        opt.step(lr);
        opt.zero_grad();
        result.log.push_back({step, tl.report.l_con, tl.report.l_sem, tl.report.n_sem_pairs, lr});
        if (log_out)
            log_out << nlohmann::json{{"step", step},
                                      {"l_con", tl.report.l_con},
                                      {"l_sem", tl.report.l_sem},
                                      {"n_sem_pairs", tl.report.n_sem_pairs},
                                      {"lr", lr}}
                           .dump()
                    << "\n";
    }

    nlohmann::json meta;
    meta["train_config"] = cfg.to_json();
    meta["model_shape"] = shape.to_json();
    meta["target"] = split.target;
    meta["sources"] = split.sources;
    meta["log_digest"] = to_hex(log_digest(result.log));
    meta["total_steps"] = total_steps;
    result.checkpoint = checkpoint_from_model(model, std::move(meta));
    return result;
}

}  // namespace

TrainResult train(const SplitSpec& split, const DomainSuite& suite, const OpenPool& open_pool,
                  std::shared_ptr<EncoderBackend> backend, const TrainConfig& cfg,
                  const ModelShape& shape, const std::string& log_path) {
    validate_train_config(cfg, open_pool);
    ModelConfig mc;
    mc.tau = cfg.tau;
    mc.use_sem = cfg.use_sem;
    mc.use_xhat = cfg.use_xhat;
    mc.manual_xhat = cfg.manual_xhat;
    const PromptInit init =
        cfg.init_mode == "gaussian" ? PromptInit::kGaussian : PromptInit::kPhrase;
    Model model = build_model(backend, split, mc, init, cfg.seed, shape.context_len_cls,
                              shape.context_len_dom, dom_token_position_from(cfg.dom_token_position),
                              shape.upsampler_widths, shape.fuse_kernel);
    return train_loop(std::move(model), split, suite, open_pool, cfg, shape, 0, log_path);
}

TrainResult train_resume(const SplitSpec& split, const DomainSuite& suite,
                         const OpenPool& open_pool, std::shared_ptr<EncoderBackend> backend,
                         const TrainConfig& cfg, const ModelShape& shape, const Checkpoint& prev,
                         const std::string& log_path) {
    validate_train_config(cfg, open_pool);
    Model model = model_from_checkpoint(prev, std::move(backend));
    const int done = prev.meta.value("total_steps", 0);
    return train_loop(std::move(model), split, suite, open_pool, cfg, shape, done, log_path);
}

std::pair<std::string, Posterior> predict(const Model& model, const Image& image) {
    Posterior post = class_posterior(model, image);
    const int idx = post.argmax();
    return {model.prompts.class_order[static_cast<size_t>(idx)], std::move(post)};
}

Checkpoint checkpoint_from_model(const Model& model, nlohmann::json extra_meta) {
    Checkpoint ck;
    ck.meta = std::move(extra_meta);
    ck.meta["version"] = kCkptVersion;
    ck.meta["labels"] = model.prompts.class_order;
    ck.meta["dom_token_position"] = to_string(model.prompts.position);
    ck.meta["backend"] = {{"name", model.backend->name()},
                          {"d_v", model.backend->d_v()},
                          {"d_tok", model.backend->d_tok()},
                          {"d_t", model.backend->d_t()}};
    ck.meta["tau"] = model.cfg.tau;
    ck.meta["use_sem"] = model.cfg.use_sem;
    ck.meta["use_xhat"] = model.cfg.use_xhat;
    ck.meta["manual_xhat"] = model.cfg.manual_xhat;
    ck.meta["fuse_kernel"] = model.fuser.kernel;

    auto put = [&](const std::string& name, const Tensor& t) {
        ck.tensors[name] = {t.shape(), t.values()};
    };
    put("prompt_state/nu", model.prompts.nu);
    put("prompt_state/omega", model.prompts.omega);
    put("prompt_state/dom_w", model.prompts.dom_w);
    put("prompt_state/dom_b", model.prompts.dom_b);
    for (const auto& [name, vec] : model.prompts.class_table)
        ck.tensors["class_table/" + name] = {{static_cast<int>(vec.size())}, vec};
    for (int l = 0; l < 4; ++l) {
        put("upsampler/w" + std::to_string(l), model.upsampler.weights[static_cast<size_t>(l)]);
        put("upsampler/b" + std::to_string(l), model.upsampler.biases[static_cast<size_t>(l)]);
    }
    put("fuse_projector/w", model.fuser.weight);
    put("fuse_projector/b", model.fuser.bias);
    return ck;
}

Model model_from_checkpoint(const Checkpoint& ck, std::shared_ptr<EncoderBackend> backend) {
    if (ck.meta.value("version", -1) != kCkptVersion)
        throw RuntimeFailure("checkpoint version mismatch");
    const auto& b = ck.meta.at("backend");
    if (b.at("d_v") != backend->d_v() || b.at("d_tok") != backend->d_tok() ||
        b.at("d_t") != backend->d_t())
        throw ConfigError("checkpoint was produced with different backend dimensions");

    Model model;
    model.backend = std::move(backend);
    model.cfg.tau = ck.meta.value("tau", 0.01);
    model.cfg.use_sem = ck.meta.value("use_sem", true);
    model.cfg.use_xhat = ck.meta.value("use_xhat", true);
    model.cfg.manual_xhat = ck.meta.value("manual_xhat", false);

    auto get = [&](const std::string& name) -> const Checkpoint::NamedTensor& {
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw RuntimeFailure("checkpoint missing tensor " + name);
        return it->second;
    };
    auto as_param = [&](const std::string& name) {
        const auto& nt = get(name);
        return Tensor::param(nt.shape, nt.values);
    };

    model.prompts.nu = as_param("prompt_state/nu");
    model.prompts.omega = as_param("prompt_state/omega");
    model.prompts.dom_w = as_param("prompt_state/dom_w");
    model.prompts.dom_b = as_param("prompt_state/dom_b");
    model.prompts.class_order = ck.meta.at("labels").get<std::vector<std::string>>();
    model.prompts.position =
        dom_token_position_from(ck.meta.value("dom_token_position", std::string("front")));
    for (const auto& name : model.prompts.class_order)
        model.prompts.class_table[name] = get("class_table/" + name).values;

    model.upsampler.seed_grid =
        static_cast<int>(std::ceil(std::sqrt(static_cast<double>(model.backend->d_t()))));
    for (int l = 0; l < 4; ++l) {
        model.upsampler.weights[static_cast<size_t>(l)] = as_param("upsampler/w" + std::to_string(l));
        model.upsampler.biases[static_cast<size_t>(l)] = as_param("upsampler/b" + std::to_string(l));
    }
    model.fuser.weight = as_param("fuse_projector/w");
    model.fuser.bias = as_param("fuse_projector/b");
    model.fuser.kernel = ck.meta.value("fuse_kernel", 1);
    return model;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("save_checkpoint: cannot write " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    const std::string meta = ck.meta.dump();
    const uint64_t meta_len = meta.size();
    out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    const uint32_t count = static_cast<uint32_t>(ck.tensors.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, nt] : ck.tensors) {  // std::map: stable order
        const uint32_t name_len = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
        out.write(name.data(), name_len);
        const uint32_t ndim = static_cast<uint32_t>(nt.shape.size());
        out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
        for (int d : nt.shape) {
            const int32_t dd = d;
            out.write(reinterpret_cast<const char*>(&dd), sizeof(dd));
        }
        out.write(reinterpret_cast<const char*>(nt.values.data()),
                  static_cast<std::streamsize>(nt.values.size() * sizeof(double)));
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw RuntimeFailure("load_checkpoint: not a checkpoint file (bad magic)");
    uint64_t meta_len = 0;
    in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
    std::string meta(meta_len, '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw RuntimeFailure("load_checkpoint: truncated metadata");
    Checkpoint ck;
    ck.meta = nlohmann::json::parse(meta, nullptr, false);
    if (ck.meta.is_discarded()) throw RuntimeFailure("load_checkpoint: corrupt metadata");
    if (ck.meta.value("version", -1) != kCkptVersion)
        throw RuntimeFailure("load_checkpoint: version mismatch");
    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
        Checkpoint::NamedTensor nt;
        size_t n = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            int32_t dd = 0;
            in.read(reinterpret_cast<char*>(&dd), sizeof(dd));
            nt.shape.push_back(dd);
            n *= static_cast<size_t>(dd);
        }
        nt.values.resize(n);
        in.read(reinterpret_cast<char*>(nt.values.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw RuntimeFailure("load_checkpoint: truncated tensor data");
        ck.tensors[name] = std::move(nt);
    }
    return ck;
}

}  // namespace odg
