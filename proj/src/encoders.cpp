#include "odg/encoders.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "odg/common.hpp"
#include "odg/rng.hpp"

namespace odg {

Tensor image_to_tensor(const Image& img) {
    return Tensor::from({img.h, img.w, 3}, img.px);
}

VisualOutput EncoderBackend::visual_encode(const Image& img) const {
    return visual_encode(image_to_tensor(img));
}

namespace {

constexpr int kPatch = 8;

// Tiny fixed-weight dual encoder. Vision: area pool to a patch grid, patch
// projection, one token-mixing layer, stats + positional pooling. Text:
// per-token projection with positional offsets, positional pooling, two
// dense layers. Everything is seeded once and never mutated.
class MockBackend final : public EncoderBackend {
public:
    MockBackend(uint64_t seed, int d_v, int d_tok, int d_t, int n_patch_tokens)
        : seed_(seed), d_v_(d_v), d_tok_(d_tok), d_t_(d_t), n_tok_(n_patch_tokens) {
        if (d_v < 8 || d_tok < 8 || d_t < 8) throw ConfigError("mock backend: dims must be >= 8");
        grid_ = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_patch_tokens))));
        if (grid_ * grid_ != n_patch_tokens)
            throw ConfigError("mock backend: n_patch_tokens must be a perfect square");
        canvas_ = grid_ * kPatch;
        const int pdim = 3 * kPatch * kPatch;

        Rng rng(Rng::seed_mix(seed, 0xE6C0DE));
        Wp_ = rng.normal_vec(static_cast<size_t>(d_v) * pdim, 4.0 / std::sqrt(pdim));
        bp_.assign(static_cast<size_t>(d_v), 0.0);  // equal patches stay equal tokens
        Wm_ = rng.normal_vec(static_cast<size_t>(d_v) * d_v, 0.8 / std::sqrt(d_v));
        bm_ = rng.normal_vec(static_cast<size_t>(d_v), 0.05);
        pool_w_.resize(static_cast<size_t>(n_tok_));
        for (auto& w : pool_w_) w = (1.0 + 0.6 * rng.normal()) / n_tok_;
        We_ = rng.normal_vec(static_cast<size_t>(d_v) * d_v, 1.6 / std::sqrt(d_v));
        be_ = rng.normal_vec(static_cast<size_t>(d_v), 0.05);

        Wt1_ = rng.normal_vec(static_cast<size_t>(d_t) * d_tok, 1.4 / std::sqrt(d_tok));
        bt1_ = rng.normal_vec(static_cast<size_t>(d_t), 0.05);
        pos_ = rng.normal_vec(static_cast<size_t>(kMaxContext) * d_t, 0.35);
        tpool_w_.resize(kMaxContext);
        for (auto& w : tpool_w_) w = 0.6 + 0.8 * rng.uniform();
        Wt2_ = rng.normal_vec(static_cast<size_t>(d_t) * d_t, 1.2 / std::sqrt(d_t));
        bt2_ = rng.normal_vec(static_cast<size_t>(d_t), 0.05);
        Wt3_ = rng.normal_vec(static_cast<size_t>(d_t) * d_t, 1.2 / std::sqrt(d_t));
        bt3_ = rng.normal_vec(static_cast<size_t>(d_t), 0.05);
    }

    int d_v() const override { return d_v_; }
    int d_tok() const override { return d_tok_; }
    int d_t() const override { return d_t_; }
    int max_context() const override { return kMaxContext; }
    std::string name() const override { return "mock"; }

    VisualOutput visual_encode(const Tensor& image_hwc) const override {
        if (image_hwc.shape().size() != 3 || image_hwc.shape()[2] != 3)
            throw std::invalid_argument("visual_encode: expects [H,W,3]");
        for (double v : image_hwc.values())
            if (!std::isfinite(v)) throw std::invalid_argument("visual_encode: non-finite input");
        const int pdim = 3 * kPatch * kPatch;
        Tensor pooled = area_pool(image_hwc, canvas_, canvas_);
        // per-patch mean centering, then squared random projections: an
        // energy signature that responds to structure, not raw phase
        Tensor patches = center_rows(patchify(pooled, kPatch));
        Tensor z = rows_linear_const(Wp_, bp_, d_v_, pdim, patches);
        Tensor t1 = tanh_t(mul(z, z));
        Tensor mixed = tanh_t(rows_add_vec(t1, linear_const(Wm_, bm_, d_v_, d_v_, mean_rows(t1))));
        VisualOutput out;
        out.token_mean = mean_rows(mixed);
        out.token_std = std_rows(mixed);
        // centering the pooled vector strips the shared energy offset, so
        // embedding directions spread instead of crowding one octant
        Tensor pooled_feat = row(center_rows(stack_rows({weighted_row_sum(mixed, pool_w_)})), 0);
        out.embedding = linear_const(We_, be_, d_v_, d_v_, pooled_feat);
        return out;
    }

    Tensor text_encode(const TokenSequence& seq) const override {
        if (seq.empty()) throw std::invalid_argument("text_encode: empty sequence");
        if (static_cast<int>(seq.size()) > kMaxContext)
            throw std::invalid_argument("text_encode: sequence exceeds context limit");
        for (const auto& t : seq)
            if (static_cast<int>(t.size()) != d_tok_)
                throw std::invalid_argument("text_encode: token dim mismatch");
        const int L = static_cast<int>(seq.size());
        Tensor X = stack_rows(seq);
        Tensor u = tanh_t(rows_add_const(rows_linear_const(Wt1_, bt1_, d_t_, d_tok_, X), pos_));
        std::vector<double> w(tpool_w_.begin(), tpool_w_.begin() + L);
        Tensor pooled = weighted_row_sum(u, w);
        Tensor h = tanh_t(linear_const(Wt2_, bt2_, d_t_, d_t_, pooled));
        return linear_const(Wt3_, bt3_, d_t_, d_t_, h);
    }

    std::vector<double> embed_token_text(const std::string& text) const override {
        Rng rng(Rng::seed_mix(seed_, fnv1a("tok:" + text)));
        return rng.normal_vec(static_cast<size_t>(d_tok_), 1.0 / std::sqrt(d_tok_));
    }

    uint64_t param_hash() const override {
        uint64_t h = fnv1a(&seed_, sizeof(seed_));
        for (const auto* v : {&Wp_, &bp_, &Wm_, &bm_, &pool_w_, &We_, &be_, &Wt1_, &bt1_, &pos_,
                              &tpool_w_, &Wt2_, &bt2_, &Wt3_, &bt3_})
            h = fnv1a(*v, h);
        return h;
    }

private:
    static constexpr int kMaxContext = 16;

    uint64_t seed_;
    int d_v_, d_tok_, d_t_, n_tok_, grid_, canvas_;

    std::vector<double> Wp_, bp_, Wm_, bm_, pool_w_, We_, be_;
    std::vector<double> Wt1_, bt1_, pos_, tpool_w_, Wt2_, bt2_, Wt3_, bt3_;
};

std::map<std::string, BackendFactory>& factory_registry() {
    static std::map<std::string, BackendFactory> reg;
    return reg;
}

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

std::shared_ptr<EncoderBackend> make_mock_backend(uint64_t seed, int d_v, int d_tok, int d_t,
                                                  int n_patch_tokens) {
    return std::make_shared<MockBackend>(seed, d_v, d_tok, d_t, n_patch_tokens);
}

void register_backend_factory(const std::string& name, BackendFactory factory) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    factory_registry()[name] = std::move(factory);
}

std::shared_ptr<EncoderBackend> make_backend(const nlohmann::json& descriptor) {
    const std::string kind = descriptor.value("backend", "mock");
    if (kind == "mock") {
        return make_mock_backend(descriptor.value("seed", uint64_t{1}), descriptor.value("d_v", 64),
                                 descriptor.value("d_tok", 32), descriptor.value("d_t", 64),
                                 descriptor.value("n_patch_tokens", 16));
    }
    {
        std::lock_guard<std::mutex> lock(registry_mutex());
        auto it = factory_registry().find(kind);
        if (it != factory_registry().end()) return it->second(descriptor);
    }
    if (kind == "clip")
        throw ConfigError(
            "backend 'clip' needs a pretrained-weights adapter; link a plugin that calls "
            "register_backend_factory(\"clip\", ...) and supply its weight path");
    throw ConfigError("unknown backend '" + kind + "'");
}

}  // namespace odg
