#include "odg/opengen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "odg/common.hpp"
#include "odg/rng.hpp"

namespace fs = std::filesystem;

namespace odg {

PromptPair build_prompts(const std::string& domain_name,
                         const std::vector<std::string>& known_classes, bool pp_only) {
    if (domain_name.empty()) throw ConfigError("build_prompts: empty domain name");
    if (known_classes.empty()) throw ConfigError("build_prompts: empty known-class set");
    PromptPair p;
    p.positive = "a " + domain_name + " of an unknown class";
    if (!pp_only) p.negatives = known_classes;
    return p;
}

double grayscale_entropy(const Image& image) {
    std::array<size_t, 256> hist{};
    const size_t n = static_cast<size_t>(image.h) * image.w;
    for (size_t i = 0; i < n; ++i) {
        const double y = 0.299 * image.px[i * 3] + 0.587 * image.px[i * 3 + 1] +
                         0.114 * image.px[i * 3 + 2];
        const int level = std::clamp(static_cast<int>(std::lround(y * 255.0)), 0, 255);
        ++hist[static_cast<size_t>(level)];
    }
    double h = 0.0;
    for (size_t c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(n);
        h -= p * std::log2(p);
    }
    return h / 8.0;
}

OpenPool filter_pool(const std::vector<OpenImage>& candidates, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ConfigError("filter_pool: threshold must lie in [0,1]");
    OpenPool pool;
    pool.threshold = threshold;
    for (const auto& cand : candidates) {
        const double e = grayscale_entropy(cand.image);
        const bool keep = e > threshold;
        pool.meta.push_back({e, keep});
        if (keep) pool.images.push_back(cand);
    }
    return pool;
}

namespace {

// Smooth multi-scale value noise in [0,1].
Image value_noise(Rng& rng, int size) {
    Image acc(size, size, 0.0);
    const int grids[3] = {4, 8, 16};
    const double amps[3] = {1.0, 0.6, 0.35};
    for (int g = 0; g < 3; ++g) {
        const int gs = grids[g];
        std::vector<double> lattice(static_cast<size_t>(gs) * gs);
        for (auto& v : lattice) v = rng.uniform();
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double fy = static_cast<double>(y) / size * (gs - 1);
                const double fx = static_cast<double>(x) / size * (gs - 1);
                const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
                const int y1 = std::min(y0 + 1, gs - 1), x1 = std::min(x0 + 1, gs - 1);
                const double ty = fy - y0, tx = fx - x0;
                const double v =
                    (1 - ty) * ((1 - tx) * lattice[static_cast<size_t>(y0) * gs + x0] +
                                tx * lattice[static_cast<size_t>(y0) * gs + x1]) +
                    ty * ((1 - tx) * lattice[static_cast<size_t>(y1) * gs + x0] +
                          tx * lattice[static_cast<size_t>(y1) * gs + x1]);
                for (int c = 0; c < 3; ++c) acc.at(y, x, c) += amps[g] * (v - 0.5);
            }
    }
    for (auto& v : acc.px) v = 0.5 + v / 1.95;
    clamp01(acc);
    return acc;
}

class StubGenerator final : public GeneratorBackend {
public:
    StubGenerator(uint64_t seed, int image_size) : seed_(seed), size_(image_size) {}

    std::string name() const override { return "stub"; }

    std::vector<Image> generate(const GenRequest& req) override {
        if (req.count < 1) throw ConfigError("stub generator: count must be >= 1");
        std::vector<Image> out;
        out.reserve(static_cast<size_t>(req.count));
        for (int i = 0; i < req.count; ++i) {
            Rng rng(Rng::seed_mix(Rng::seed_mix(seed_, req.seed),
                                  fnv1a(req.domain) ^ static_cast<uint64_t>(i)));
            Image img = value_noise(rng, size_);
            // superposed gratings: structured content that is never a single
            // pure pattern, with frequencies above the toy-class band
            // half the pool sits spectrally near the low band, half far, so
            // the unknown prompt sees a spread of granularities
            const bool near_band = (i % 2 == 0);
            const int waves = 3 + static_cast<int>(rng.index(2));
            std::vector<double> wf(static_cast<size_t>(waves)), wa(static_cast<size_t>(waves)),
                wo(static_cast<size_t>(waves)), wp(static_cast<size_t>(waves));
            for (int k = 0; k < waves; ++k) {
                wf[static_cast<size_t>(k)] =
                    near_band ? rng.uniform(3.2, 5.5) : rng.uniform(5.0, 9.5);
                wo[static_cast<size_t>(k)] = rng.uniform(0.0, M_PI);
                wp[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * M_PI);
                wa[static_cast<size_t>(k)] = rng.uniform(0.10, 0.22);
            }
            for (int y = 0; y < size_; ++y)
                for (int x = 0; x < size_; ++x) {
                    double v = 0.0;
                    for (int k = 0; k < waves; ++k) {
                        const double u = std::cos(wo[static_cast<size_t>(k)]) * x +
                                         std::sin(wo[static_cast<size_t>(k)]) * y;
                        v += wa[static_cast<size_t>(k)] *
                             std::sin(2.0 * M_PI * wf[static_cast<size_t>(k)] * u / size_ +
                                      wp[static_cast<size_t>(k)]);
                    }
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) += v;
                }
            const int blobs = 2 + static_cast<int>(rng.index(4));
            for (int bidx = 0; bidx < blobs; ++bidx) {
                const double cy = rng.uniform(0.1, 0.9) * size_;
                const double cx = rng.uniform(0.1, 0.9) * size_;
                const double rad = rng.uniform(0.08, 0.25) * size_;
                const double amp = rng.uniform(-0.45, 0.45);
                for (int y = 0; y < size_; ++y)
                    for (int x = 0; x < size_; ++x) {
                        const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (rad * rad);
                        const double fall = std::exp(-d2);
                        for (int c = 0; c < 3; ++c) img.at(y, x, c) += amp * fall;
                    }
            }
            clamp01(img);
            apply_domain_style(img, req.domain);
            out.push_back(std::move(img));
        }
        return out;
    }

private:
    uint64_t seed_;
    int size_;
};

class DiffusionClient final : public GeneratorBackend {
public:
    explicit DiffusionClient(DiffusionClientConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.endpoint.empty()) throw ConfigError("diffusion client: endpoint is required");
    }

    std::string name() const override { return "diffusion"; }

    std::vector<Image> generate(const GenRequest& req) override {
        nlohmann::json payload = cfg_.extra.is_object() ? cfg_.extra : nlohmann::json::object();
        payload[cfg_.field_positive] = req.positive;
        std::string joined;
        for (size_t i = 0; i < req.negatives.size(); ++i) {
            if (i) joined += ", ";
            joined += req.negatives[i];
        }
        payload[cfg_.field_negative] = joined;
        payload[cfg_.field_seed] = req.seed;
        payload[cfg_.field_count] = req.count;
        if (!cfg_.model_id.empty()) payload["model"] = cfg_.model_id;
        const std::string body = payload.dump();

        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::duration<double>(
                    cfg_.backoff_s * static_cast<double>(1 << (attempt - 1))));
            httplib::Client client(cfg_.endpoint);
            client.set_connection_timeout(cfg_.timeout_s);
            client.set_read_timeout(cfg_.timeout_s);
            auto res = client.Post(cfg_.path, body, "application/json");
            if (!res) {
                last_error = "no response from " + cfg_.endpoint;
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            return decode_response(res->body, req.count);
        }
        throw OpenGenUnavailable("text-to-image service unavailable after " +
                                 std::to_string(cfg_.retries + 1) + " attempts: " + last_error);
    }

private:
    std::vector<Image> decode_response(const std::string& body, int expected) const {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const std::exception&) {
            throw RuntimeFailure("diffusion client: response is not JSON");
        }
        if (!j.contains(cfg_.response_field) || !j[cfg_.response_field].is_array())
            throw RuntimeFailure("diffusion client: response missing field '" +
                                 cfg_.response_field + "'");
        std::vector<Image> out;
        for (const auto& entry : j[cfg_.response_field]) {
            if (!entry.is_string()) throw RuntimeFailure("diffusion client: image entry not a string");
            out.push_back(decode_png(base64_decode(entry.get<std::string>())));
        }
        if (static_cast<int>(out.size()) != expected)
            throw RuntimeFailure("diffusion client: expected " + std::to_string(expected) +
                                 " images, got " + std::to_string(out.size()));
        return out;
    }

    DiffusionClientConfig cfg_;
};

uint64_t prompt_hash(const PromptPair& p) {
    uint64_t h = fnv1a(p.positive);
    for (const auto& n : p.negatives) h = fnv1a(n, h);
    return h;
}

// cache key is (domain, seed, prompt hash): pools for different known-class
// sets never collide
fs::path pool_dir(const PoolBuildConfig& cfg, const std::string& domain) {
    const PromptPair prompts = build_prompts(domain, cfg.known_classes, cfg.pp_only);
    return fs::path(cfg.cache_dir) / domain /
           (std::to_string(cfg.seed) + "-" + to_hex(prompt_hash(prompts)).substr(8));
}

}  // namespace

std::unique_ptr<GeneratorBackend> make_stub_generator(uint64_t seed, int image_size) {
    return std::make_unique<StubGenerator>(seed, image_size);
}

std::unique_ptr<GeneratorBackend> make_diffusion_client(const DiffusionClientConfig& cfg) {
    return std::make_unique<DiffusionClient>(cfg);
}

OpenPool build_open_pool(GeneratorBackend& gen, const PoolBuildConfig& cfg) {
    if (cfg.cache_dir.empty()) throw ConfigError("build_open_pool: cache_dir is required");
    if (cfg.domains.empty()) throw ConfigError("build_open_pool: no domains given");
    std::vector<OpenImage> candidates;
    for (const auto& domain : cfg.domains) {
        const PromptPair prompts = build_prompts(domain, cfg.known_classes, cfg.pp_only);
        const fs::path dir = pool_dir(cfg, domain);
        const fs::path manifest_path = dir / "manifest.json";
        bool cache_hit = false;
        if (fs::exists(manifest_path)) {
            std::ifstream in(manifest_path);
            nlohmann::json m = nlohmann::json::parse(in, nullptr, false);
            cache_hit = m.is_object() && m.value("prompt_hash", std::string{}) ==
                                             to_hex(prompt_hash(prompts)) &&
                        m.value("count", -1) == cfg.count_per_domain;
        }
        std::vector<Image> images;
        if (cache_hit) {
            for (int i = 0; i < cfg.count_per_domain; ++i) {
                char name[32];
                std::snprintf(name, sizeof(name), "%05d.png", i);
                images.push_back(read_image((dir / name).string()));
            }
        } else {
            GenRequest req{prompts.positive, prompts.negatives, cfg.count_per_domain, cfg.seed,
                           domain};
            images = gen.generate(req);
            fs::create_directories(dir);
            for (size_t i = 0; i < images.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof(name), "%05d.png", static_cast<int>(i));
                write_image(images[i], (dir / name).string());
            }
        }
        nlohmann::json entropies = nlohmann::json::array();
        nlohmann::json accepted = nlohmann::json::array();
        for (const auto& img : images) {
            const double e = grayscale_entropy(img);
            entropies.push_back(e);
            accepted.push_back(e > cfg.threshold);
            candidates.push_back({img, domain});
        }
        std::ofstream mf(manifest_path);
        mf << nlohmann::json{{"domain", domain},
                             {"generator", gen.name()},
                             {"positive", prompts.positive},
                             {"negatives", prompts.negatives},
                             {"pp_only", cfg.pp_only},
                             {"prompt_hash", to_hex(prompt_hash(prompts))},
                             {"seed", cfg.seed},
                             {"count", cfg.count_per_domain},
                             {"threshold", cfg.threshold},
                             {"entropy", entropies},
                             {"accepted", accepted},
                             {"cache_hit", cache_hit}}
                  .dump(2)
           << "\n";
    }
    return filter_pool(candidates, cfg.threshold);
}

OpenPool load_open_pool(const PoolBuildConfig& cfg) {
    std::vector<OpenImage> candidates;
    for (const auto& domain : cfg.domains) {
        const fs::path dir = pool_dir(cfg, domain);
        const fs::path manifest_path = dir / "manifest.json";
        if (!fs::exists(manifest_path))
            throw ConfigError("open pool missing for domain '" + domain +
                              "'; run generate-open first (" + manifest_path.string() + ")");
        std::ifstream in(manifest_path);
        nlohmann::json m = nlohmann::json::parse(in);
        const int count = m.at("count").get<int>();
        for (int i = 0; i < count; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "%05d.png", i);
            candidates.push_back({read_image((dir / name).string()), domain});
        }
    }
    return filter_pool(candidates, cfg.threshold);
}

}  // namespace odg
