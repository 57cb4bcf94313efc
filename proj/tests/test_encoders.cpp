#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "odg/common.hpp"
#include "odg/datasets.hpp"
#include "odg/encoders.hpp"
#include "support/finite_diff.hpp"

using namespace odg;

namespace {

double vec_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / std::sqrt(na * nb);
}

TokenSequence random_tokens(int n, int d, uint64_t seed) {
    Rng rng(seed);
    TokenSequence seq;
    for (int i = 0; i < n; ++i) seq.push_back(Tensor::param({d}, rng.normal_vec(static_cast<size_t>(d))));
    return seq;
}

}  // namespace

TEST_SUITE("encoders") {

TEST_CASE("visual_encode is deterministic and shape-correct") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    Rng rng(3);
    Image img(40, 40);
    for (auto& v : img.px) v = rng.uniform();
    const auto a = backend->visual_encode(img);
    const auto b = backend->visual_encode(img);
    CHECK(a.embedding.size() == 32);
    CHECK(a.token_mean.size() == 32);
    CHECK(a.token_std.size() == 32);
    for (size_t i = 0; i < 32; ++i) {
        CHECK(a.embedding.values()[i] == b.embedding.values()[i]);
        CHECK(a.token_std.values()[i] >= 0.0);
    }
}

TEST_CASE("constant image yields zero token std") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    Image img(32, 32, 0.6);
    const auto out = backend->visual_encode(img);
    for (double s : out.token_std.values()) CHECK(s == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("token std is non-negative on arbitrary inputs") {
    auto backend = make_mock_backend(2, 32, 16, 32, 16);
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        Image img(33, 47);
        for (auto& v : img.px) v = rng.uniform();
        const VisualOutput vo = backend->visual_encode(img);
        for (double s : vo.token_std.values()) CHECK(s >= 0.0);
    }
}

TEST_CASE("visual gradient w.r.t. the image matches finite differences") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    Rng rng(4);
    Tensor img = Tensor::param({16, 16, 3}, rng.normal_vec(16 * 16 * 3, 0.3));
    auto loss_value = [&] {
        NoGradGuard eval;
        return sum(backend->visual_encode(img).embedding).item();
    };
    auto loss = sum(backend->visual_encode(img).embedding);
    loss.backward();
    const auto res = testing::check_gradient(loss_value, img, img.grad(), 1e-4, 16);
    CAPTURE(res.worst_rel);
    CHECK(res.ok);
}

TEST_CASE("stats gradients flow too (mu and sigma are differentiable)") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    Rng rng(8);
    Tensor img = Tensor::param({16, 16, 3}, rng.normal_vec(16 * 16 * 3, 0.3));
    auto loss_value = [&] {
        NoGradGuard eval;
        const auto vo = backend->visual_encode(img);
        return add(sum(vo.token_mean), sum(vo.token_std)).item();
    };
    auto vo = backend->visual_encode(img);
    auto loss = add(sum(vo.token_mean), sum(vo.token_std));
    loss.backward();
    CHECK(testing::check_gradient(loss_value, img, img.grad(), 1e-4, 12).ok);
}

TEST_CASE("text_encode determinism, order sensitivity and gradient") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    auto seq = random_tokens(5, 16, 7);
    const auto a = backend->text_encode(seq);
    const auto b = backend->text_encode(seq);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);

    // permuting tokens must change the embedding
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        TokenSequence perm = seq;
        rng.shuffle(perm);
        bool same_order = true;
        for (size_t i = 0; i < seq.size(); ++i)
            if (perm[i].raw() != seq[i].raw()) same_order = false;
        if (same_order) continue;
        const auto c = backend->text_encode(perm);
        double dist = 0;
        for (size_t i = 0; i < a.size(); ++i) dist += std::fabs(a.values()[i] - c.values()[i]);
        CHECK(dist > 1e-9);
    }

    auto loss_value = [&] {
        NoGradGuard eval;
        return sum(backend->text_encode(seq)).item();
    };
    auto loss = sum(backend->text_encode(seq));
    loss.backward();
    for (auto& tok : seq) CHECK(testing::check_gradient(loss_value, tok, tok.grad(), 1e-4, 8).ok);
}

TEST_CASE("text_encode rejects bad sequences") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    CHECK_THROWS(backend->text_encode({}));
    CHECK_THROWS(backend->text_encode(random_tokens(17, 16, 1)));  // over context limit
    CHECK_THROWS(backend->text_encode(random_tokens(2, 8, 1)));    // wrong token dim
}

TEST_CASE("visual_encode rejects non-finite input") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    auto img = Tensor::from({8, 8, 3}, std::vector<double>(192, 0.5));
    img.values()[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(backend->visual_encode(img));
}

TEST_CASE("mock construction contracts") {
    auto a = make_mock_backend(42, 32, 16, 32, 16);
    auto b = make_mock_backend(42, 32, 16, 32, 16);
    CHECK(a->param_hash() == b->param_hash());
    auto c = make_mock_backend(43, 32, 16, 32, 16);
    CHECK(a->param_hash() != c->param_hash());
    CHECK_THROWS_AS(make_mock_backend(1, 4, 16, 32, 16), ConfigError);
    CHECK_THROWS_AS(make_mock_backend(1, 32, 16, 32, 15), ConfigError);  // not a square
}

TEST_CASE("embed_token_text is stable per name and distinct across names") {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    const auto a = backend->embed_token_text("dog");
    const auto b = backend->embed_token_text("dog");
    const auto c = backend->embed_token_text("cat");
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a.size() == 16);
}

TEST_CASE("toy classes separate: intra-class cosine exceeds inter-class") {
    const auto suite = synth_toy_suite(7, 3, 6, 4, 32);
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    NoGradGuard eval;
    std::vector<std::vector<double>> embs;
    std::vector<std::string> labels;
    for (const auto& s : suite.samples) {
        embs.push_back(backend->visual_encode(s.image).embedding.values());
        labels.push_back(s.label);
    }
    double intra = 0, inter = 0;
    int n_intra = 0, n_inter = 0;
    for (size_t i = 0; i < embs.size(); ++i)
        for (size_t j = i + 1; j < embs.size(); ++j) {
            const double c = vec_cos(embs[i], embs[j]);
            if (labels[i] == labels[j]) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    CHECK(intra / n_intra > inter / n_inter);
}

TEST_CASE("backend registry: descriptors, plugins and failure modes") {
    auto backend = make_backend({{"backend", "mock"}, {"seed", 5}, {"d_v", 32}, {"d_tok", 16},
                                 {"d_t", 32}, {"n_patch_tokens", 16}});
    CHECK(backend->d_v() == 32);
    CHECK(backend->name() == "mock");

    CHECK_THROWS_AS(make_backend({{"backend", "clip"}}), ConfigError);
    CHECK_THROWS_AS(make_backend({{"backend", "nonsense"}}), ConfigError);

    register_backend_factory("custom_test", [](const nlohmann::json& d) {
        return make_mock_backend(d.value("seed", uint64_t{9}), 32, 16, 32, 16);
    });
    auto custom = make_backend({{"backend", "custom_test"}});
    CHECK(custom->d_v() == 32);
}

}  // TEST_SUITE
