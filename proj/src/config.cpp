#include "odg/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "odg/common.hpp"

namespace odg {

namespace {

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
T take(const nlohmann::json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config: bad value for '" + key + "'");
    }
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    check_keys(j, {"dataset", "backend", "model", "opengen", "train", "eval"}, "top level");
    RunConfig cfg;

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, {"type", "root", "image_size", "toy", "class_split", "class_split_file"},
                   "dataset");
        cfg.dataset_type = take<std::string>(d, "type", cfg.dataset_type);
        if (cfg.dataset_type != "toy" && cfg.dataset_type != "directory")
            throw ConfigError("config: dataset.type must be toy|directory");
        cfg.dataset_root = take<std::string>(d, "root", cfg.dataset_root);
        cfg.image_size = take<int>(d, "image_size", cfg.image_size);
        if (d.contains("toy")) {
            const auto& t = d.at("toy");
            check_keys(t, {"seed", "n_domains", "n_classes", "n_per_cell", "image_size"},
                       "dataset.toy");
            cfg.toy_seed = take<uint64_t>(t, "seed", cfg.toy_seed);
            cfg.toy_domains = take<int>(t, "n_domains", cfg.toy_domains);
            cfg.toy_classes = take<int>(t, "n_classes", cfg.toy_classes);
            cfg.toy_per_cell = take<int>(t, "n_per_cell", cfg.toy_per_cell);
            cfg.toy_image_size = take<int>(t, "image_size", cfg.toy_image_size);
        }
        if (d.contains("class_split") && d.contains("class_split_file"))
            throw ConfigError("config: give class_split or class_split_file, not both");
        if (d.contains("class_split")) cfg.class_split = parse_class_split(d.at("class_split"));
        if (d.contains("class_split_file")) {
            const std::string path = d.at("class_split_file").get<std::string>();
            std::ifstream in(path);
            if (!in) throw ConfigError("config: cannot open class_split_file " + path);
            cfg.class_split = parse_class_split(nlohmann::json::parse(in));
        }
    }

    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        check_keys(b, {"backend", "seed", "d_v", "d_tok", "d_t", "n_patch_tokens", "weights"},
                   "backend");
        for (const auto& [key, val] : b.items()) cfg.backend[key] = val;
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"context_len_cls", "context_len_dom", "upsampler_widths", "fuse_kernel"},
                   "model");
        cfg.shape.context_len_cls = take<int>(m, "context_len_cls", cfg.shape.context_len_cls);
        cfg.shape.context_len_dom = take<int>(m, "context_len_dom", cfg.shape.context_len_dom);
        if (m.contains("upsampler_widths")) {
            const auto widths = m.at("upsampler_widths").get<std::vector<int>>();
            if (widths.size() != 3)
                throw ConfigError("config: model.upsampler_widths needs exactly 3 entries");
            for (size_t i = 0; i < 3; ++i) cfg.shape.upsampler_widths[i] = widths[i];
        }
        cfg.shape.fuse_kernel = take<int>(m, "fuse_kernel", cfg.shape.fuse_kernel);
    }

    if (j.contains("opengen")) {
        const auto& o = j.at("opengen");
        check_keys(o,
                   {"generator", "threshold", "count", "steps_per_epoch_cap", "seed", "cache_dir",
                    "pp_only", "http"},
                   "opengen");
        cfg.generator = take<std::string>(o, "generator", cfg.generator);
        if (cfg.generator != "stub" && cfg.generator != "diffusion")
            throw ConfigError("config: opengen.generator must be stub|diffusion");
        cfg.entropy_threshold = take<double>(o, "threshold", cfg.entropy_threshold);
        cfg.pool_count = take<int>(o, "count", cfg.pool_count);
        cfg.steps_per_epoch_cap = take<int>(o, "steps_per_epoch_cap", cfg.steps_per_epoch_cap);
        cfg.pool_seed = take<uint64_t>(o, "seed", cfg.pool_seed);
        cfg.cache_dir = take<std::string>(o, "cache_dir", cfg.cache_dir);
        cfg.train.pp_only = take<bool>(o, "pp_only", cfg.train.pp_only);
        if (o.contains("http")) {
            const auto& h = o.at("http");
            check_keys(h,
                       {"endpoint", "path", "model_id", "field_positive", "field_negative",
                        "field_seed", "field_count", "response_field", "timeout_s", "retries",
                        "backoff_s", "extra"},
                       "opengen.http");
            cfg.diffusion.endpoint = take<std::string>(h, "endpoint", cfg.diffusion.endpoint);
            cfg.diffusion.path = take<std::string>(h, "path", cfg.diffusion.path);
            cfg.diffusion.model_id = take<std::string>(h, "model_id", cfg.diffusion.model_id);
            cfg.diffusion.field_positive =
                take<std::string>(h, "field_positive", cfg.diffusion.field_positive);
            cfg.diffusion.field_negative =
                take<std::string>(h, "field_negative", cfg.diffusion.field_negative);
            cfg.diffusion.field_seed = take<std::string>(h, "field_seed", cfg.diffusion.field_seed);
            cfg.diffusion.field_count = take<std::string>(h, "field_count", cfg.diffusion.field_count);
            cfg.diffusion.response_field =
                take<std::string>(h, "response_field", cfg.diffusion.response_field);
            cfg.diffusion.timeout_s = take<int>(h, "timeout_s", cfg.diffusion.timeout_s);
            cfg.diffusion.retries = take<int>(h, "retries", cfg.diffusion.retries);
            cfg.diffusion.backoff_s = take<double>(h, "backoff_s", cfg.diffusion.backoff_s);
            if (h.contains("extra")) cfg.diffusion.extra = h.at("extra");
        }
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t,
                   {"epochs", "base_lr", "batch_size", "open_fraction", "tau", "seed",
                    "steps_per_epoch", "warmup_frac", "use_sem", "use_xhat", "manual_xhat",
                    "pp_only", "init_mode", "dom_token_position"},
                   "train");
        cfg.train.epochs = take<int>(t, "epochs", cfg.train.epochs);
        cfg.train.base_lr = take<double>(t, "base_lr", cfg.train.base_lr);
        cfg.train.batch_size = take<int>(t, "batch_size", cfg.train.batch_size);
        cfg.train.open_fraction = take<double>(t, "open_fraction", cfg.train.open_fraction);
        cfg.train.tau = take<double>(t, "tau", cfg.train.tau);
        cfg.train.seed = take<uint64_t>(t, "seed", cfg.train.seed);
        cfg.train.steps_per_epoch = take<int>(t, "steps_per_epoch", cfg.train.steps_per_epoch);
        cfg.train.warmup_frac = take<double>(t, "warmup_frac", cfg.train.warmup_frac);
        cfg.train.use_sem = take<bool>(t, "use_sem", cfg.train.use_sem);
        cfg.train.use_xhat = take<bool>(t, "use_xhat", cfg.train.use_xhat);
        cfg.train.manual_xhat = take<bool>(t, "manual_xhat", cfg.train.manual_xhat);
        cfg.train.pp_only = take<bool>(t, "pp_only", cfg.train.pp_only);
        cfg.train.init_mode = take<std::string>(t, "init_mode", cfg.train.init_mode);
        if (cfg.train.init_mode != "phrase" && cfg.train.init_mode != "gaussian")
            throw ConfigError("config: train.init_mode must be phrase|gaussian");
        cfg.train.dom_token_position =
            take<std::string>(t, "dom_token_position", cfg.train.dom_token_position);
        dom_token_position_from(cfg.train.dom_token_position);  // validate
    }

    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_keys(e,
                   {"seeds", "out_dir", "workers", "closed_set", "diagnostic_max_per_cell",
                    "openness_partitions", "reference"},
                   "eval");
        cfg.eval_seeds = take<int>(e, "seeds", cfg.eval_seeds);
        cfg.out_dir = take<std::string>(e, "out_dir", cfg.out_dir);
        cfg.workers = take<int>(e, "workers", cfg.workers);
        cfg.closed_set = take<bool>(e, "closed_set", cfg.closed_set);
        cfg.diagnostic_max_per_cell =
            take<int>(e, "diagnostic_max_per_cell", cfg.diagnostic_max_per_cell);
        if (e.contains("openness_partitions"))
            cfg.openness_partitions =
                e.at("openness_partitions").get<std::vector<std::vector<std::string>>>();
        if (e.contains("reference")) cfg.reference = e.at("reference");
    }

    if (cfg.eval_seeds < 1) throw ConfigError("config: eval.seeds must be >= 1");
    if (cfg.workers < 1) throw ConfigError("config: eval.workers must be >= 1");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: " + path + " is not valid JSON");
    return parse_run_config(j);
}

DomainSuite RunConfig::load_dataset() const {
    if (dataset_type == "toy")
        return synth_toy_suite(toy_seed, toy_domains, toy_classes, toy_per_cell, toy_image_size);
    if (dataset_root.empty()) throw ConfigError("config: dataset.root required for type=directory");
    return load_suite(dataset_root, image_size);
}

std::string RunConfig::effective_cache_dir() const {
    if (!cache_dir.empty()) return cache_dir;
    if (const char* env = std::getenv("ODG_CACHE_ROOT")) return env;
    return (std::filesystem::path(out_dir) / "pool_cache").string();
}

int RunConfig::effective_pool_count() const {
    if (pool_count > 0) return pool_count;
    const int quota =
        static_cast<int>(std::lround(train.open_fraction * train.batch_size));
    return std::max(1, quota * steps_per_epoch_cap);
}

nlohmann::json RunConfig::effective_json() const {
    nlohmann::json ds{{"type", dataset_type},
                      {"root", dataset_root},
                      {"image_size", image_size},
                      {"toy",
                       {{"seed", toy_seed},
                        {"n_domains", toy_domains},
                        {"n_classes", toy_classes},
                        {"n_per_cell", toy_per_cell},
                        {"image_size", toy_image_size}}}};
    if (class_split) {
        nlohmann::json cs = nlohmann::json::object();
        for (const auto& [domain, idx] : *class_split) cs[domain] = idx;
        ds["class_split"] = cs;
    }
    nlohmann::json og{{"generator", generator},
                      {"threshold", entropy_threshold},
                      {"count", effective_pool_count()},
                      {"steps_per_epoch_cap", steps_per_epoch_cap},
                      {"seed", pool_seed},
                      {"cache_dir", effective_cache_dir()},
                      {"pp_only", train.pp_only}};
    if (generator == "diffusion")
        og["http"] = {{"endpoint", diffusion.endpoint},
                      {"path", diffusion.path},
                      {"model_id", diffusion.model_id},
                      {"field_positive", diffusion.field_positive},
                      {"field_negative", diffusion.field_negative},
                      {"field_seed", diffusion.field_seed},
                      {"field_count", diffusion.field_count},
                      {"response_field", diffusion.response_field},
                      {"timeout_s", diffusion.timeout_s},
                      {"retries", diffusion.retries},
                      {"backoff_s", diffusion.backoff_s}};
    nlohmann::json ev{{"seeds", eval_seeds},
                      {"out_dir", out_dir},
                      {"workers", workers},
                      {"closed_set", closed_set},
                      {"diagnostic_max_per_cell", diagnostic_max_per_cell},
                      {"openness_partitions", openness_partitions}};
    if (!reference.is_null()) ev["reference"] = reference;
    return nlohmann::json{{"dataset", ds},     {"backend", backend}, {"model", shape.to_json()},
                          {"opengen", og},     {"train", train.to_json()}, {"eval", ev}};
}

}  // namespace odg
