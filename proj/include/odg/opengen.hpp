#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "odg/datasets.hpp"
#include "odg/image.hpp"

namespace odg {

struct GenRequest {
    std::string positive;
    std::vector<std::string> negatives;  // empty in PP-only mode
    int count = 1;
    uint64_t seed = 0;
    std::string domain;  // pseudo-domain the pool is styled after
};

class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual std::vector<Image> generate(const GenRequest& req) = 0;
    virtual std::string name() const = 0;
};

struct PromptPair {
    std::string positive;
    std::vector<std::string> negatives;
};

// PP: "a {domain} of an unknown class"; NP: the known class names verbatim.
PromptPair build_prompts(const std::string& domain_name,
                         const std::vector<std::string>& known_classes, bool pp_only = false);

// Normalized Shannon entropy of the 8-bit grayscale rendering: 256-bin
// histogram, bits divided by 8 (the 256-level maximum), so the result lies
// in [0,1].
double grayscale_entropy(const Image& image);

struct OpenPool {
    std::vector<OpenImage> images;  // retained entries only
    struct Meta {
        double entropy;
        bool accepted;
    };
    std::vector<Meta> meta;  // one per candidate, in input order
    double threshold = 0.2;

    size_t accepted_count() const { return images.size(); }
};

OpenPool filter_pool(const std::vector<OpenImage>& candidates, double threshold);

// Deterministic procedural stand-in for the diffusion adapter: multi-scale
// value noise plus soft blobs, styled with the per-domain palette.
std::unique_ptr<GeneratorBackend> make_stub_generator(uint64_t seed, int image_size = 32);

struct DiffusionClientConfig {
    std::string endpoint;  // host:port
    std::string path = "/txt2img";
    std::string model_id;
    std::string field_positive = "prompt";
    std::string field_negative = "negative_prompt";
    std::string field_seed = "seed";
    std::string field_count = "n";
    std::string response_field = "images";  // array of base64-encoded PNGs
    int timeout_s = 30;
    int retries = 3;
    double backoff_s = 0.5;
    nlohmann::json extra;  // guidance params merged verbatim into the payload
};

// HTTP text-to-image adapter with negative-prompt support. Negatives are
// joined with ", " for the wire. Retries with backoff; exhausting retries
// raises OpenGenUnavailable.
std::unique_ptr<GeneratorBackend> make_diffusion_client(const DiffusionClientConfig& cfg);

// Generates (or re-reads) one pseudo-open pool per domain under
// `{cache_dir}/{domain}/{seed}/{idx}.png`, entropy-filters it, and writes a
// per-domain manifest. A cache hit with a matching prompt hash skips
// generation entirely.
struct PoolBuildConfig {
    std::vector<std::string> domains;
    std::vector<std::string> known_classes;
    int count_per_domain = 16;
    double threshold = 0.2;
    bool pp_only = false;
    uint64_t seed = 0;
    std::string cache_dir;
};

OpenPool build_open_pool(GeneratorBackend& gen, const PoolBuildConfig& cfg);

// Loads a previously built pool from the cache, re-filtering at `threshold`.
OpenPool load_open_pool(const PoolBuildConfig& cfg);

}  // namespace odg
