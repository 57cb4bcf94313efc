#include <doctest.h>

#include <cmath>

#include "odg/common.hpp"
#include "odg/losses.hpp"
#include "support/finite_diff.hpp"

using namespace odg;

namespace {

SplitSpec tiny_split(int n_known) {
    SplitSpec split;
    split.sources = {"src_a", "src_b"};
    split.target = "tgt";
    for (int i = 0; i < n_known; ++i) split.known_labels.push_back("c" + std::to_string(i));
    split.augmented_labels = split.known_labels;
    split.augmented_labels.push_back(kUnknownLabel);
    for (const auto& s : split.sources)
        split.source_labels[s] = {split.known_labels.begin(), split.known_labels.end()};
    return split;
}

Model tiny_model(const SplitSpec& split, uint64_t seed, ModelConfig cfg = {}) {
    auto backend = make_mock_backend(1, 32, 16, 32, 16);
    if (cfg.tau == 0.01) cfg.tau = 0.5;  // softer logits for unit-scale tests
    return build_model(backend, split, cfg, PromptInit::kPhrase, seed, 4, 4,
                       DomTokenPosition::kFront, {3, 3, 2}, 1);
}

Image random_image(uint64_t seed, int size = 16) {
    Rng rng(seed);
    Image img(size, size);
    for (auto& v : img.px) v = rng.uniform();
    return img;
}

TrainBatch tiny_batch(const SplitSpec& split, int n_real, int n_open, uint64_t seed) {
    TrainBatch batch;
    Rng rng(seed);
    for (int i = 0; i < n_real; ++i) {
        DomainSample s;
        s.image = random_image(seed * 100 + static_cast<uint64_t>(i));
        const int label = static_cast<int>(rng.index(static_cast<size_t>(split.num_known())));
        s.label = split.augmented_labels[static_cast<size_t>(label)];
        s.domain = split.sources[i % 2];
        batch.real.push_back({std::move(s), label});
    }
    for (int i = 0; i < n_open; ++i)
        batch.open.push_back({random_image(seed * 991 + static_cast<uint64_t>(i)),
                              split.unknown_index(), split.sources[i % 2]});
    return batch;
}

// All class tokens identical: every candidate scores the same similarity.
void collapse_class_table(Model& model) {
    const auto first = model.prompts.class_table.begin()->second;
    for (auto& [name, vec] : model.prompts.class_table) vec = first;
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("softmax oracle: logits (1, 0) at tau 1") {
    const auto p = softmax_from_logits({1.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.7310585786300049).epsilon(1e-10));
    CHECK(p[1] == doctest::Approx(0.2689414213699951).epsilon(1e-10));
}

TEST_CASE("posterior normalizes and stays shift invariant") {
    const auto split = tiny_split(3);
    const auto model = tiny_model(split, 5);
    const auto post = class_posterior(model, random_image(1));
    REQUIRE(post.probs.size() == 4);
    double sum = 0;
    for (double p : post.probs) {
        CHECK(p >= 0.0);
        sum += p;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-6);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits;
        for (int i = 0; i < 5; ++i) logits.push_back(rng.normal() * 10);
        auto a = softmax_from_logits(logits);
        for (auto& l : logits) l += 123.456;
        auto b = softmax_from_logits(logits);
        for (size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) < 1e-9);
    }
}

TEST_CASE("equal similarities give the uniform posterior") {
    const auto split = tiny_split(4);
    auto model = tiny_model(split, 6);
    collapse_class_table(model);
    model.cfg.manual_xhat = true;  // same class vector -> same latent per class
    const auto post = class_posterior(model, random_image(2));
    for (double p : post.probs) CHECK(p == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("posterior rejects non-positive tau") {
    const auto split = tiny_split(2);
    auto model = tiny_model(split, 6);
    model.cfg.tau = 0.0;
    CHECK_THROWS_AS(class_posterior(model, random_image(3)), ConfigError);
}

TEST_CASE("uniform posterior cross entropy equals ln 7") {
    const auto split = tiny_split(6);  // |Y_aug| = 7
    auto model = tiny_model(split, 6);
    collapse_class_table(model);
    model.cfg.manual_xhat = true;
    const auto batch = tiny_batch(split, 3, 1, 4);
    CHECK(loss_con(model, batch) == doctest::Approx(std::log(7.0)).epsilon(1e-9));
}

TEST_CASE("loss_con rejects an empty batch") {
    const auto split = tiny_split(2);
    const auto model = tiny_model(split, 6);
    CHECK_THROWS(loss_con(model, TrainBatch{}));
}

TEST_CASE("loss_sem oracle values through hand-built differentials") {
    std::vector<ItemForward> items(2);
    items[0].label = items[1].label = 0;
    items[0].domain = "a";
    items[1].domain = "b";

    // identical |x_hat| -> cosine 1 -> zero loss
    items[0].true_diff = Tensor::from({3}, {0.5, -0.5, 1.0});
    items[1].true_diff = Tensor::from({3}, {-0.5, 0.5, 1.0});  // same after |.|
    int pairs = 0;
    CHECK(loss_sem_from(items, &pairs).item() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pairs == 1);

    // orthogonal |x_hat| -> cosine 0 -> unit loss
    items[0].true_diff = Tensor::from({2}, {1.0, 0.0});
    items[1].true_diff = Tensor::from({2}, {0.0, -1.0});
    CHECK(loss_sem_from(items, &pairs).item() == doctest::Approx(1.0).epsilon(1e-12));

    // same domain -> no eligible pair
    items[1].domain = "a";
    CHECK(loss_sem_from(items, &pairs).item() == 0.0);
    CHECK(pairs == 0);

    // different labels -> no eligible pair
    items[1].domain = "b";
    items[1].label = 1;
    loss_sem_from(items, &pairs);
    CHECK(pairs == 0);
}

TEST_CASE("loss_sem stays within [0,1] for folded differentials") {
    const auto split = tiny_split(3);
    const auto model = tiny_model(split, 8);
    for (uint64_t seed = 0; seed < 4; ++seed) {
        const auto batch = tiny_batch(split, 4, 2, seed + 10);
        const double v = loss_sem(model, batch);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("pseudo-open samples pair across pseudo-domains") {
    const auto split = tiny_split(2);
    const auto model = tiny_model(split, 9);
    TrainBatch batch;
    batch.open.push_back({random_image(40), split.unknown_index(), "src_a"});
    batch.open.push_back({random_image(41), split.unknown_index(), "src_b"});
    const auto items = forward_batch(model, batch);
    int pairs = 0;
    loss_sem_from(items, &pairs);
    CHECK(pairs == 1);
}

TEST_CASE("total loss is the exact unit-weight sum") {
    const auto split = tiny_split(3);
    const auto model = tiny_model(split, 11);
    const auto batch = tiny_batch(split, 4, 2, 12);
    const auto tl = total_loss(model, batch);
    CHECK(tl.report.total == tl.report.l_con + tl.report.l_sem);
    CHECK(tl.report.l_con == doctest::Approx(loss_con(model, batch)).epsilon(1e-12));
    CHECK(tl.report.l_sem == doctest::Approx(loss_sem(model, batch)).epsilon(1e-12));
    CHECK(tl.root.item() == doctest::Approx(tl.report.total).epsilon(1e-12));
}

TEST_CASE("ablation switches reshape the objective") {
    const auto split = tiny_split(3);
    const auto batch = tiny_batch(split, 4, 2, 13);

    ModelConfig no_sem;
    no_sem.use_sem = false;
    const auto m1 = tiny_model(split, 11, no_sem);
    const auto t1 = total_loss(m1, batch);
    CHECK(t1.report.l_sem == 0.0);
    CHECK(t1.report.total == t1.report.l_con);

    ModelConfig no_xhat;
    no_xhat.use_xhat = false;
    const auto m2 = tiny_model(split, 11, no_xhat);
    const auto fwd = m2.forward_image(batch.real[0].sample.image);
    CHECK(fwd.differentials.empty());
    const auto t2 = total_loss(m2, batch);
    CHECK(t2.report.l_sem == 0.0);
    CHECK(std::isfinite(t2.report.l_con));

    ModelConfig manual;
    manual.manual_xhat = true;
    const auto m3 = tiny_model(split, 11, manual);
    // manual differentials are domain independent: same class pairs are
    // identical, so the consistency term vanishes
    CHECK(loss_sem(m3, batch) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("argmax is tau invariant") {
    const auto split = tiny_split(4);
    auto model = tiny_model(split, 14);
    const Image img = random_image(15);
    const auto base = class_posterior(model, img);
    for (double tau : {0.05, 0.2, 2.0}) {
        model.cfg.tau = tau;
        const auto post = class_posterior(model, img);
        CHECK(post.argmax() == base.argmax());
    }
}

TEST_CASE("gradients of both losses match finite differences on every trainable") {
    const auto split = tiny_split(2);
    auto model = tiny_model(split, 15);
    const auto batch = tiny_batch(split, 2, 2, 16);

    auto con_value = [&] {
        NoGradGuard eval;
        return loss_con_from(forward_batch(model, batch)).item();
    };
    auto sem_value = [&] {
        NoGradGuard eval;
        return loss_sem_from(forward_batch(model, batch)).item();
    };

    auto items = forward_batch(model, batch);
    auto con = loss_con_from(items);
    con.backward();
    std::vector<std::vector<double>> con_grads;
    for (auto& t : model.trainables()) {
        con_grads.push_back(t.grad().empty() ? std::vector<double>(t.size(), 0.0) : t.grad());
        t.zero_grad();
    }
    auto items2 = forward_batch(model, batch);
    auto sem = loss_sem_from(items2);
    sem.backward();
    std::vector<std::vector<double>> sem_grads;
    for (auto& t : model.trainables()) {
        sem_grads.push_back(t.grad().empty() ? std::vector<double>(t.size(), 0.0) : t.grad());
        t.zero_grad();
    }

    auto trainables = model.trainables();
    for (size_t i = 0; i < trainables.size(); ++i) {
        const auto rc = testing::check_gradient(con_value, trainables[i], con_grads[i], 1e-4, 6,
                                                1234 + i);
        CAPTURE(i);
        CAPTURE(rc.worst_rel);
        CHECK(rc.ok);
        const auto rs = testing::check_gradient(sem_value, trainables[i], sem_grads[i], 1e-4, 6,
                                                4321 + i);
        CAPTURE(rs.worst_rel);
        CHECK(rs.ok);
    }
}

}  // TEST_SUITE
