#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "odg/image.hpp"
#include "odg/rng.hpp"

namespace odg {

// Sentinel label occupying the final classifier index.
inline constexpr const char* kUnknownLabel = "unknown";

struct DomainSample {
    Image image;
    std::string label;
    std::string domain;
};

struct DomainSuite {
    std::string name;
    std::vector<std::string> domains;                       // ordered
    std::vector<DomainSample> samples;
    std::map<std::string, std::set<std::string>> label_sets;  // per domain

    // Union of all per-domain label sets, lexicographic.
    std::vector<std::string> all_labels() const;
    std::vector<const DomainSample*> samples_of(const std::string& domain) const;
};

struct SplitSpec {
    std::vector<std::string> sources;
    std::string target;
    std::vector<std::string> known_labels;      // Y, lexicographic
    std::vector<std::string> augmented_labels;  // Y + "unknown" at the back
    std::vector<std::string> target_open_labels;
    // Per-source allowed label set (class_split applied); empty set = all.
    std::map<std::string, std::set<std::string>> source_labels;

    int num_known() const { return static_cast<int>(known_labels.size()); }
    int unknown_index() const { return num_known(); }  // 0-based; the C+1-th slot
    // Index into augmented_labels, -1 when absent.
    int label_index(const std::string& label) const;
};

struct OpenImage {
    Image image;
    std::string pseudo_domain;
};

struct TrainBatch {
    struct RealItem {
        DomainSample sample;
        int label_index;
    };
    struct OpenItem {
        Image image;
        int label_index;  // always unknown_index()
        std::string pseudo_domain;
    };
    std::vector<RealItem> real;
    std::vector<OpenItem> open;

    size_t size() const { return real.size() + open.size(); }
};

// Loads `{root}/{domain}/{class}/*.png|ppm`. Images are decoded to [0,1] and
// resized (bilinear) to image_size x image_size. Undecodable files are
// skipped with a warning on stderr; an empty domain is an error.
DomainSuite load_suite(const std::string& root, int image_size = 224);

// Writes `{dir}/{domain}/{class}/{idx}.png` plus manifest.json; the inverse
// of load_suite for round-trip checks and for materializing toy suites.
void write_suite(const DomainSuite& suite, const std::string& dir);

nlohmann::json suite_manifest(const DomainSuite& suite);

// class_split maps domain name -> allowed class indices into the suite's
// global lexicographic class ordering. Domains without an entry keep all
// their classes. Applied to domains only when they act as sources.
using ClassSplit = std::map<std::string, std::vector<int>>;

ClassSplit parse_class_split(const nlohmann::json& j);

std::vector<SplitSpec> make_lodo_splits(const DomainSuite& suite,
                                        const std::optional<ClassSplit>& class_split = std::nullopt);

// Deterministic procedural multi-domain suite: the class decides the spatial
// pattern, the domain decides palette and texture grain.
DomainSuite synth_toy_suite(uint64_t seed, int n_domains, int n_classes, int n_per_cell,
                            int image_size);

// Renders one toy-class pattern (exposed for the open-pool stub, which must
// stay away from these patterns).
Image render_toy_pattern(int class_id, int image_size, Rng& rng);

// Per-domain invertible palette + additive texture, keyed by domain name.
void apply_domain_style(Image& img, const std::string& domain);

// Draws `batch_size` items with round(open_fraction*batch_size) pseudo-open
// images; real draws favor same-class pairs from different domains.
TrainBatch sample_batch(const SplitSpec& split, const std::vector<DomainSample>& real_pool,
                        const std::vector<OpenImage>& open_pool, int batch_size,
                        double open_fraction, Rng& rng);

// Real-pool view of a suite under a split: samples whose domain is a source
// and whose label is allowed for that source.
std::vector<DomainSample> real_pool_for(const DomainSuite& suite, const SplitSpec& split);

}  // namespace odg
