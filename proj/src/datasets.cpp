#include "odg/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "odg/common.hpp"

namespace fs = std::filesystem;

namespace odg {

namespace {

constexpr int kPatternFamilies = 6;
const char* kFamilyNames[kPatternFamilies] = {"burst",     "checker",   "rings",
                                              "stripes_d", "stripes_h", "stripes_v"};
const char* kDomainNames[] = {"amber", "cobalt", "jade", "umber", "orchid", "slate", "coral", "olive"};

std::string toy_class_name(int class_id) {
    const int family = class_id % kPatternFamilies;
    const int tier = class_id / kPatternFamilies;
    std::string name = kFamilyNames[family];
    if (tier > 0) name += std::to_string(tier + 1);
    return name;
}

std::string toy_domain_name(int domain_id) {
    if (domain_id < static_cast<int>(std::size(kDomainNames))) return kDomainNames[domain_id];
    return "style" + std::to_string(domain_id);
}

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".ppm" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

std::vector<std::string> sorted_files(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

}  // namespace

std::vector<std::string> DomainSuite::all_labels() const {
    std::set<std::string> u;
    for (const auto& [d, ls] : label_sets) u.insert(ls.begin(), ls.end());
    return {u.begin(), u.end()};
}

std::vector<const DomainSample*> DomainSuite::samples_of(const std::string& domain) const {
    std::vector<const DomainSample*> out;
    for (const auto& s : samples)
        if (s.domain == domain) out.push_back(&s);
    return out;
}

int SplitSpec::label_index(const std::string& label) const {
    for (size_t i = 0; i < augmented_labels.size(); ++i)
        if (augmented_labels[i] == label) return static_cast<int>(i);
    return -1;
}

DomainSuite load_suite(const std::string& root, int image_size) {
    if (image_size < 32) throw ConfigError("load_suite: image_size must be >= 32");
    if (!fs::exists(root) || !fs::is_directory(root))
        throw ConfigError("load_suite: missing root directory: " + root);
    DomainSuite suite;
    suite.name = fs::path(root).filename().string();
    const auto domains = sorted_subdirs(root);
    if (domains.empty()) throw ConfigError("load_suite: no domains found in " + root);
    for (const auto& domain : domains) {
        const auto classes = sorted_subdirs(fs::path(root) / domain);
        size_t loaded = 0;
        for (const auto& cls : classes) {
            for (const auto& file : sorted_files(fs::path(root) / domain / cls)) {
                const fs::path p = fs::path(root) / domain / cls / file;
                if (!is_image_file(p)) continue;
                Image img;
                try {
                    img = read_image(p.string());
                } catch (const std::exception& e) {
                    std::cerr << "warning: skipping undecodable image " << p << ": " << e.what()
                              << "\n";
                    continue;
                }
                img = resize_bilinear(img, image_size, image_size);
                suite.samples.push_back({std::move(img), cls, domain});
                suite.label_sets[domain].insert(cls);
                ++loaded;
            }
        }
        if (loaded == 0) throw ConfigError("load_suite: empty domain: " + domain);
        suite.domains.push_back(domain);
    }
    return suite;
}

void write_suite(const DomainSuite& suite, const std::string& dir) {
    fs::create_directories(dir);
    std::map<std::string, std::map<std::string, int>> counters;
    for (const auto& s : suite.samples) {
        const fs::path cls_dir = fs::path(dir) / s.domain / s.label;
        fs::create_directories(cls_dir);
        const int idx = counters[s.domain][s.label]++;
        char name[32];
        std::snprintf(name, sizeof(name), "%05d.png", idx);
        write_image(s.image, (cls_dir / name).string());
    }
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << suite_manifest(suite).dump(2) << "\n";
}

nlohmann::json suite_manifest(const DomainSuite& suite) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& d : suite.domains) {
        nlohmann::json per = nlohmann::json::object();
        for (const auto& s : suite.samples)
            if (s.domain == d) per[s.label] = per.value(s.label, 0) + 1;
        counts[d] = per;
    }
    return nlohmann::json{{"name", suite.name},
                          {"domains", suite.domains},
                          {"classes", suite.all_labels()},
                          {"counts", counts}};
}

ClassSplit parse_class_split(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("class split: expected an object {domain: [indices]}");
    ClassSplit split;
    for (const auto& [domain, arr] : j.items()) {
        if (!arr.is_array()) throw ConfigError("class split: entry for '" + domain + "' must be an array");
        for (const auto& v : arr) split[domain].push_back(v.get<int>());
    }
    return split;
}

std::vector<SplitSpec> make_lodo_splits(const DomainSuite& suite,
                                        const std::optional<ClassSplit>& class_split) {
    if (suite.domains.size() < 2) throw ConfigError("make_lodo_splits: need at least 2 domains");
    const auto classes = suite.all_labels();
    for (const auto& c : classes)
        if (c == kUnknownLabel)
            throw ConfigError("make_lodo_splits: a dataset class may not be named 'unknown'");
    if (class_split) {
        for (const auto& [domain, indices] : *class_split) {
            if (std::find(suite.domains.begin(), suite.domains.end(), domain) == suite.domains.end())
                throw ConfigError("class split references unknown domain: " + domain);
            for (int i : indices)
                if (i < 0 || i >= static_cast<int>(classes.size()))
                    throw ConfigError("class split index out of range for domain " + domain);
        }
    }

    std::vector<SplitSpec> splits;
    for (const auto& target : suite.domains) {
        SplitSpec spec;
        spec.target = target;
        std::set<std::string> known;
        for (const auto& d : suite.domains) {
            if (d == target) continue;
            spec.sources.push_back(d);
            std::set<std::string> allowed = suite.label_sets.at(d);
            if (class_split && class_split->count(d)) {
                std::set<std::string> chosen;
                for (int i : class_split->at(d)) {
                    const auto& name = classes[static_cast<size_t>(i)];
                    if (allowed.count(name)) chosen.insert(name);
                }
                allowed = std::move(chosen);
            }
            spec.source_labels[d] = allowed;
            known.insert(allowed.begin(), allowed.end());
        }
        spec.known_labels.assign(known.begin(), known.end());
        spec.augmented_labels = spec.known_labels;
        spec.augmented_labels.push_back(kUnknownLabel);
        for (const auto& c : suite.label_sets.at(target))
            if (!known.count(c)) spec.target_open_labels.push_back(c);
        splits.push_back(std::move(spec));
    }
    return splits;
}

Image render_toy_pattern(int class_id, int image_size, Rng& rng) {
    const int family = class_id % kPatternFamilies;
    const int tier = class_id / kPatternFamilies;
    const double freq = 2.5 * (1 + tier) * rng.uniform(0.92, 1.08);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double cy = image_size * (0.5 + rng.uniform(-0.08, 0.08));
    const double cx = image_size * (0.5 + rng.uniform(-0.08, 0.08));
    Image img(image_size, image_size);
    const double S = image_size;
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            double v = 0.0;
            switch (family) {
                case 0: {  // burst: angular sectors
                    const double th = std::atan2(y - cy, x - cx);
                    v = std::sin(2.0 * freq * th + phase);
                    break;
                }
                case 1:  // checker
                    v = std::sin(2.0 * M_PI * freq * x / S + phase) *
                        std::sin(2.0 * M_PI * freq * y / S + phase * 0.7);
                    break;
                case 2: {  // rings
                    const double r = std::hypot(y - cy, x - cx);
                    v = std::sin(2.0 * M_PI * freq * r / S + phase);
                    break;
                }
                case 3:  // diagonal stripes
                    v = std::sin(2.0 * M_PI * freq * (x + y) / (S * M_SQRT2) + phase);
                    break;
                case 4:  // horizontal stripes
                    v = std::sin(2.0 * M_PI * freq * y / S + phase);
                    break;
                default:  // vertical stripes
                    v = std::sin(2.0 * M_PI * freq * x / S + phase);
                    break;
            }
            const double p = 0.5 + 0.5 * std::tanh(2.5 * v);  // sharpen bands
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = p;
        }
    }
    // low-amplitude pixel grain for intra-class variation
    for (auto& px : img.px) px += rng.uniform(-0.012, 0.012);
    clamp01(img);
    return img;
}

void apply_domain_style(Image& img, const std::string& domain) {
    Rng rng(fnv1a(domain));
    double lo[3], hi[3];
    for (int c = 0; c < 3; ++c) {
        lo[c] = rng.uniform(0.05, 0.2);
        hi[c] = rng.uniform(0.8, 0.95);
    }
    const double tex_amp = rng.uniform(0.02, 0.045);
    const double tex_freq = rng.uniform(4.0, 9.0);
    const double tex_angle = rng.uniform(0.0, 2.0 * M_PI);
    const double tex_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double ux = std::cos(tex_angle), uy = std::sin(tex_angle);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const double t = tex_amp * std::sin(2.0 * M_PI * tex_freq *
                                                    (ux * x / img.w + uy * y / img.h) +
                                                tex_phase);
            for (int c = 0; c < 3; ++c) {
                const double p = img.at(y, x, c);
                img.at(y, x, c) = lo[c] + (hi[c] - lo[c]) * p + t;
            }
        }
    clamp01(img);
}

DomainSuite synth_toy_suite(uint64_t seed, int n_domains, int n_classes, int n_per_cell,
                            int image_size) {
    if (n_domains < 2) throw ConfigError("synth_toy_suite: n_domains must be >= 2");
    if (n_classes < 3) throw ConfigError("synth_toy_suite: n_classes must be >= 3");
    if (image_size < 32) throw ConfigError("synth_toy_suite: image_size must be >= 32");
    DomainSuite suite;
    suite.name = "toy";
    for (int d = 0; d < n_domains; ++d) suite.domains.push_back(toy_domain_name(d));
    for (int d = 0; d < n_domains; ++d) {
        const std::string domain = suite.domains[static_cast<size_t>(d)];
        for (int c = 0; c < n_classes; ++c) {
            const std::string cls = toy_class_name(c);
            for (int i = 0; i < n_per_cell; ++i) {
                // keyed per cell item so generation order never matters
                Rng rng(Rng::seed_mix(seed, (static_cast<uint64_t>(d) << 40) ^
                                                (static_cast<uint64_t>(c) << 20) ^
                                                static_cast<uint64_t>(i)));
                Image img = render_toy_pattern(c, image_size, rng);
                apply_domain_style(img, domain);
                suite.samples.push_back({std::move(img), cls, domain});
            }
            suite.label_sets[domain].insert(cls);
        }
    }
    return suite;
}

std::vector<DomainSample> real_pool_for(const DomainSuite& suite, const SplitSpec& split) {
    std::vector<DomainSample> pool;
    for (const auto& s : suite.samples) {
        auto it = split.source_labels.find(s.domain);
        if (it == split.source_labels.end()) continue;
        if (!it->second.count(s.label)) continue;
        pool.push_back(s);
    }
    return pool;
}

TrainBatch sample_batch(const SplitSpec& split, const std::vector<DomainSample>& real_pool,
                        const std::vector<OpenImage>& open_pool, int batch_size,
                        double open_fraction, Rng& rng) {
    if (batch_size < 4) throw ConfigError("sample_batch: batch_size must be >= 4");
    if (open_fraction < 0.0 || open_fraction > 1.0)
        throw ConfigError("sample_batch: open_fraction must lie in [0,1]");
    const int open_count = static_cast<int>(std::lround(open_fraction * batch_size));
    const int real_count = batch_size - open_count;
    if (real_count > 0 && real_pool.empty()) throw ConfigError("sample_batch: empty real pool");
    if (open_count > 0 && open_pool.empty())
        throw ConfigError("sample_batch: open_fraction > 0 but the open pool is empty");

    // class -> domain -> indices into real_pool
    std::map<std::string, std::map<std::string, std::vector<size_t>>> by_class;
    for (size_t i = 0; i < real_pool.size(); ++i)
        by_class[real_pool[i].label][real_pool[i].domain].push_back(i);
    std::vector<std::string> pair_classes;
    for (const auto& [cls, doms] : by_class)
        if (doms.size() >= 2) pair_classes.push_back(cls);

    TrainBatch batch;
    auto push_real = [&](size_t idx) {
        const auto& s = real_pool[idx];
        const int li = split.label_index(s.label);
        if (li < 0 || li >= split.num_known())
            throw RuntimeFailure("sample_batch: real pool contains label outside Y: " + s.label);
        batch.real.push_back({s, li});
    };

    int remaining = real_count;
    while (remaining >= 2 && !pair_classes.empty()) {
        const auto& cls = pair_classes[rng.index(pair_classes.size())];
        const auto& doms = by_class[cls];
        std::vector<const std::vector<size_t>*> buckets;
        for (const auto& [d, v] : doms) buckets.push_back(&v);
        const size_t a = rng.index(buckets.size());
        size_t b = rng.index(buckets.size() - 1);
        if (b >= a) ++b;
        push_real((*buckets[a])[rng.index(buckets[a]->size())]);
        push_real((*buckets[b])[rng.index(buckets[b]->size())]);
        remaining -= 2;
    }
    while (remaining-- > 0) push_real(rng.index(real_pool.size()));

    for (int i = 0; i < open_count; ++i) {
        const auto& o = open_pool[rng.index(open_pool.size())];
        batch.open.push_back({o.image, split.unknown_index(), o.pseudo_domain});
    }
    return batch;
}

}  // namespace odg
