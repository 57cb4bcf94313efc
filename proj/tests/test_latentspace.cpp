#include <doctest.h>

#include <cmath>

#include "odg/common.hpp"
#include "odg/datasets.hpp"
#include "odg/latent.hpp"
#include "support/finite_diff.hpp"

using namespace odg;

namespace {

std::shared_ptr<EncoderBackend> test_backend() { return make_mock_backend(1, 32, 16, 32, 16); }

std::vector<std::string> y_aug() { return {"cat", "dog", "fox", kUnknownLabel}; }

Image random_image(int size, uint64_t seed) {
    Rng rng(seed);
    Image img(size, size);
    for (auto& v : img.px) v = rng.uniform();
    return img;
}

// FuseProjector fixed to pass the RGB channels through and ignore the map.
FuseProjector identity_projector() {
    FuseProjector proj;
    proj.kernel = 1;
    std::vector<double> w(12, 0.0);
    for (int c = 0; c < 3; ++c) w[static_cast<size_t>(c) * 4 + c] = 1.0;
    proj.weight = Tensor::param({3, 4, 1, 1}, std::move(w));
    proj.bias = Tensor::param({3}, {0.0, 0.0, 0.0});
    return proj;
}

}  // namespace

TEST_SUITE("latentspace") {

TEST_CASE("differential has text-space length and is class sensitive") {
    auto backend = test_backend();
    auto state = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kPhrase, 3);
    const Image img = random_image(32, 4);
    const auto dv = differential(*backend, state, img, "cat");
    CHECK(dv.vector.size() == 32);
    CHECK(dv.class_name == "cat");
    CHECK_THROWS(differential(*backend, state, img, "zebra"));

    for (uint64_t trial = 0; trial < 10; ++trial) {
        auto st = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kGaussian, trial);
        const Image im = random_image(32, 100 + trial);
        const auto a = differential(*backend, st, im, "cat");
        const auto b = differential(*backend, st, im, "dog");
        double dist = 0;
        for (size_t i = 0; i < a.vector.size(); ++i) {
            const double d = a.vector.values()[i] - b.vector.values()[i];
            dist += d * d;
        }
        CHECK(dist > 0.0);
    }
}

TEST_CASE("degenerate state where both prompts encode identically gives zero") {
    auto backend = test_backend();
    // omega := rows of nu followed by the class token, so P_dom equals
    // P_dom,cls token for token
    auto state = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kPhrase, 3, 4, 5);
    std::vector<double> omega = state.nu.values();
    const auto& cls = state.class_table.at("cat");
    omega.insert(omega.end(), cls.begin(), cls.end());
    state.omega = Tensor::param({5, 16}, std::move(omega));
    const auto dv = differential(*backend, state, random_image(32, 5), "cat");
    for (double v : dv.vector.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("upsample hits the requested spatial dims") {
    auto ups = Upsampler::init(32, {4, 4, 2}, 9);
    auto v = Tensor::param({32}, std::vector<double>(32, 0.1));
    CHECK(ups.forward(v, 64, 64).shape() == std::vector<int>{1, 64, 64});
    CHECK(ups.forward(v, 96, 96).shape() == std::vector<int>{1, 96, 96});
    CHECK(ups.forward(v, 224, 224).shape() == std::vector<int>{1, 224, 224});
}

TEST_CASE("zero differential with zero biases upsamples to the zero map") {
    auto ups = Upsampler::init(32, {4, 4, 2}, 9);
    for (auto& b : ups.biases) b = Tensor::param(b.shape(), std::vector<double>(b.size(), 0.0));
    auto zero = Tensor::param({32}, std::vector<double>(32, 0.0));
    const auto map = ups.forward(zero, 40, 40);
    for (double v : map.values()) CHECK(v == 0.0);
}

TEST_CASE("upsample gradient w.r.t. the differential matches finite differences") {
    auto ups = Upsampler::init(16, {3, 3, 2}, 9);
    Rng rng(2);
    auto v = Tensor::param({16}, rng.normal_vec(16));
    auto loss_value = [&] {
        NoGradGuard eval;
        return sum(ups.forward(v, 24, 24)).item();
    };
    auto loss = sum(ups.forward(v, 24, 24));
    loss.backward();
    CHECK(testing::check_gradient(loss_value, v, v.grad(), 1e-4, 16).ok);
}

TEST_CASE("fuse concatenates and projects back to three channels") {
    auto proj = FuseProjector::init(4);
    const Image img = random_image(24, 6);
    const Tensor img_t = image_to_tensor(img);
    Rng rng(3);
    auto map = Tensor::from({1, 24, 24}, rng.normal_vec(24 * 24, 0.2));
    const auto out = proj.forward(img_t, map);
    CHECK(out.shape() == std::vector<int>{24, 24, 3});

    auto bad_map = Tensor::zeros({1, 12, 12});
    CHECK_THROWS(proj.forward(img_t, bad_map));
}

TEST_CASE("identity projector reproduces the image exactly") {
    auto proj = identity_projector();
    const Image img = random_image(16, 7);
    auto map = Tensor::from({1, 16, 16}, std::vector<double>(256, 0.77));
    const auto out = proj.forward(image_to_tensor(img), map);
    for (size_t i = 0; i < img.px.size(); ++i)
        CHECK(out.values()[i] == doctest::Approx(img.px[i]).epsilon(1e-15));
}

TEST_CASE("map changes propagate when the 4th-channel weights are nonzero") {
    auto proj = FuseProjector::init(4);  // random init includes 4th-channel weights
    const Image img = random_image(16, 8);
    const Tensor img_t = image_to_tensor(img);
    auto m1 = Tensor::from({1, 16, 16}, std::vector<double>(256, 0.0));
    auto m2 = Tensor::from({1, 16, 16}, std::vector<double>(256, 1.0));
    const auto a = proj.forward(img_t, m1);
    const auto b = proj.forward(img_t, m2);
    double dist = 0;
    for (size_t i = 0; i < a.size(); ++i) dist += std::fabs(a.values()[i] - b.values()[i]);
    CHECK(dist > 1e-6);
}

TEST_CASE("shape pipeline holds across image sizes") {
    auto backend = test_backend();
    auto state = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kPhrase, 3);
    auto ups = Upsampler::init(backend->d_t(), {3, 3, 2}, 9);
    auto proj = FuseProjector::init(4);
    for (int size : {64, 96, 224}) {
        const Image img = random_image(size, 20 + static_cast<uint64_t>(size));
        const auto dv = differential(*backend, state, img, "dog");
        const auto map = upsample(ups, dv, size, size);
        CHECK(map.shape() == std::vector<int>{1, size, size});
        const auto latent = fuse(proj, image_to_tensor(img), map);
        CHECK(latent.shape() == std::vector<int>{size, size, 3});
    }
}

TEST_CASE("latent_embed is deterministic and produces d_v values") {
    auto backend = test_backend();
    auto state = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kPhrase, 3);
    auto ups = Upsampler::init(backend->d_t(), {3, 3, 2}, 9);
    auto proj = FuseProjector::init(4);
    const Image img = random_image(32, 9);
    const auto a = latent_embed(*backend, state, ups, proj, img, "cat");
    const auto b = latent_embed(*backend, state, ups, proj, img, "cat");
    CHECK(a.size() == 32);
    CHECK(a.values() == b.values());
    // one latent embedding per candidate class
    const auto c = latent_embed(*backend, state, ups, proj, img, "dog");
    CHECK(a.values() != c.values());
}

TEST_CASE("zero-map + identity projector reduces latent_embed to visual_encode") {
    auto backend = test_backend();
    auto state = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kPhrase, 3);
    // zero differential via degenerate prompts (see above), identity fuse
    auto degenerate = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kPhrase, 3,
                                        4, 5);
    std::vector<double> omega = degenerate.nu.values();
    const auto& cls = degenerate.class_table.at("cat");
    omega.insert(omega.end(), cls.begin(), cls.end());
    degenerate.omega = Tensor::param({5, 16}, std::move(omega));

    auto ups = Upsampler::init(backend->d_t(), {3, 3, 2}, 9);  // zero biases
    auto proj = identity_projector();
    const Image img = random_image(32, 10);
    const auto latent = latent_embed(*backend, degenerate, ups, proj, img, "cat");
    const auto raw = backend->visual_encode(img).embedding;
    for (size_t i = 0; i < latent.size(); ++i)
        CHECK(latent.values()[i] == doctest::Approx(raw.values()[i]).epsilon(1e-12));
}

TEST_CASE("end-to-end gradients reach every latent-path parameter") {
    auto backend = test_backend();
    auto state = init_prompt_state(*backend, "Image of a", y_aug(), PromptInit::kPhrase, 3);
    auto ups = Upsampler::init(backend->d_t(), {3, 3, 2}, 9);
    auto proj = FuseProjector::init(4);
    const Image img = random_image(16, 11);

    auto loss_value = [&] {
        NoGradGuard eval;
        return sum(latent_embed(*backend, state, ups, proj, img, "dog")).item();
    };
    auto loss = sum(latent_embed(*backend, state, ups, proj, img, "dog"));
    loss.backward();

    CHECK(testing::check_gradient(loss_value, state.nu, state.nu.grad(), 1e-4, 8).ok);
    CHECK(testing::check_gradient(loss_value, state.omega, state.omega.grad(), 1e-4, 8).ok);
    CHECK(testing::check_gradient(loss_value, state.dom_w, state.dom_w.grad(), 1e-4, 8).ok);
    for (auto& w : ups.trainables())
        CHECK(testing::check_gradient(loss_value, w, w.grad(), 1e-4, 6).ok);
    for (auto& w : proj.trainables())
        CHECK(testing::check_gradient(loss_value, w, w.grad(), 1e-4, 6).ok);
}

}  // TEST_SUITE
