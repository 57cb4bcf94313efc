#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "odg/common.hpp"
#include "odg/engine.hpp"
#include "odg/opengen.hpp"
#include "support/tmpdir.hpp"

using namespace odg;

namespace {

struct Fixture {
    DomainSuite suite;
    std::vector<SplitSpec> splits;
    std::shared_ptr<EncoderBackend> backend;
    OpenPool pool;

    Fixture() {
        suite = synth_toy_suite(7, 2, 3, 3, 32);
        splits = make_lodo_splits(suite);
        backend = make_mock_backend(1, 32, 16, 32, 16);
        auto gen = make_stub_generator(11, 32);
        std::vector<OpenImage> imgs;
        for (const auto& d : splits[0].sources) {
            GenRequest req{"pp", {}, 8, 3, d};
            for (auto& im : gen->generate(req)) imgs.push_back({im, d});
        }
        pool = filter_pool(imgs, 0.2);
    }

    TrainConfig quick_config(uint64_t seed = 0) const {
        TrainConfig tc;
        tc.epochs = 1;
        tc.steps_per_epoch = 6;
        tc.batch_size = 4;
        tc.open_fraction = 0.25;
        tc.base_lr = 0.02;
        tc.tau = 0.1;
        tc.seed = seed;
        return tc;
    }

    ModelShape quick_shape() const {
        ModelShape s;
        s.upsampler_widths = {3, 3, 2};
        return s;
    }
};

uint64_t checkpoint_digest(const Checkpoint& ck) {
    uint64_t h = fnv1a(ck.meta.dump());
    for (const auto& [name, nt] : ck.tensors) {
        h = fnv1a(name, h);
        h = fnv1a(nt.values, h);
    }
    return h;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("lr schedule: warm-up then non-increasing decay") {
    const int total = 100;
    double prev = 0.0;
    const int warmup = 10;
    for (int step = 0; step < total; ++step) {
        const double lr = lr_at(step, total, 0.01, 0.1);
        CHECK(lr >= 0.0);
        CHECK(lr <= 0.01 + 1e-12);
        if (step < warmup) CHECK(lr >= prev);   // ramp
        if (step > warmup) CHECK(lr <= prev + 1e-15);  // decay
        prev = lr;
    }
    CHECK(lr_at(warmup - 1, total, 0.01, 0.1) == doctest::Approx(0.01));
}

TEST_CASE("adam minimizes a quadratic") {
    auto x = Tensor::param({3}, {5.0, -4.0, 2.5});
    AdamOptimizer opt({x});
    for (int i = 0; i < 400; ++i) {
        auto diff = add_const(x, -1.0);  // minimum at 1
        auto loss = dot(diff, diff);
        loss.backward();
        opt.step(0.05);
        opt.zero_grad();
    }
    for (double v : x.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("descent: final contrastive loss beats the initial one") {
    Fixture fx;
    TrainConfig tc = fx.quick_config();
    tc.epochs = 1;
    tc.steps_per_epoch = 50;
    const auto result = train(fx.splits[0], fx.suite, fx.pool, fx.backend, tc, fx.quick_shape());
    REQUIRE(result.log.size() == 50);
    CHECK(result.log.back().l_con < result.log.front().l_con);
}

TEST_CASE("frozen encoders: parameter hash unchanged by training") {
    Fixture fx;
    const uint64_t before = fx.backend->param_hash();
    train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(), fx.quick_shape());
    CHECK(fx.backend->param_hash() == before);
}

TEST_CASE("exactly the declared tensors receive gradients") {
    Fixture fx;
    TrainConfig tc = fx.quick_config();
    Model model = build_model(fx.backend, fx.splits[0], ModelConfig{tc.tau, true, true, false},
                              PromptInit::kPhrase, 0, 4, 4, DomTokenPosition::kFront, {3, 3, 2}, 1);
    Rng rng(5);
    const auto pool = real_pool_for(fx.suite, fx.splits[0]);
    const auto batch = sample_batch(fx.splits[0], pool, fx.pool.images, 4, 0.25, rng);
    auto tl = total_loss(model, batch);
    tl.root.backward();
    // nu, omega, dom_w, dom_b, 4x upsampler weights+biases, fuse weight+bias
    const auto trainables = model.trainables();
    REQUIRE(trainables.size() == 4 + 8 + 2);
    for (const auto& t : trainables) {
        REQUIRE(t.grad().size() == t.size());
        double norm = 0;
        for (double g : t.grad()) norm += g * g;
        CHECK(norm > 0.0);
    }
}

TEST_CASE("training is deterministic per seed") {
    Fixture fx;
    const auto a = train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(7),
                         fx.quick_shape());
    const auto b = train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(7),
                         fx.quick_shape());
    CHECK(checkpoint_digest(a.checkpoint) == checkpoint_digest(b.checkpoint));
    const auto c = train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(8),
                         fx.quick_shape());
    CHECK(checkpoint_digest(a.checkpoint) != checkpoint_digest(c.checkpoint));
}

TEST_CASE("divergence aborts with a diagnostic") {
    Fixture fx;
    // poison a trained state with a NaN and resume: the very first loss is
    // non-finite and the run must abort
    const auto first = train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(),
                             fx.quick_shape());
    Checkpoint poisoned = first.checkpoint;
    poisoned.tensors.at("prompt_state/nu").values[0] = std::nan("");
    TrainConfig more = fx.quick_config();
    more.epochs = 2;
    CHECK_THROWS_AS(train_resume(fx.splits[0], fx.suite, fx.pool, fx.backend, more,
                                 fx.quick_shape(), poisoned),
                    RuntimeFailure);
}

TEST_CASE("train validates its inputs") {
    Fixture fx;
    TrainConfig tc = fx.quick_config();
    tc.epochs = 0;
    CHECK_THROWS_AS(train(fx.splits[0], fx.suite, fx.pool, fx.backend, tc, fx.quick_shape()),
                    ConfigError);
    tc = fx.quick_config();
    tc.open_fraction = 0.5;
    CHECK_THROWS_AS(train(fx.splits[0], fx.suite, OpenPool{}, fx.backend, tc, fx.quick_shape()),
                    ConfigError);
}

TEST_CASE("checkpoint round trip preserves predictions bitwise") {
    Fixture fx;
    testing::TmpDir tmp("odg_ckpt");
    const auto result = train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(),
                              fx.quick_shape());
    const Model before = model_from_checkpoint(result.checkpoint, fx.backend);

    const std::string path = tmp.path() + "/model.ckpt";
    save_checkpoint(result.checkpoint, path);
    const auto loaded = load_checkpoint(path);
    const Model after = model_from_checkpoint(loaded, fx.backend);

    for (const auto& s : fx.suite.samples) {
        if (s.domain != fx.splits[0].target) continue;
        const auto pa = class_posterior(before, s.image);
        const auto pb = class_posterior(after, s.image);
        REQUIRE(pa.probs.size() == pb.probs.size());
        for (size_t i = 0; i < pa.probs.size(); ++i) CHECK(pa.probs[i] == pb.probs[i]);
    }

    // checkpoints carry no encoder weights, only the descriptor
    for (const auto& [name, _] : loaded.tensors) CHECK(name.find("encoder") == std::string::npos);
    CHECK(loaded.meta.contains("backend"));
}

TEST_CASE("corrupt and mismatched checkpoints are rejected") {
    Fixture fx;
    testing::TmpDir tmp("odg_ckpt_bad");
    const std::string path = tmp.path() + "/bad.ckpt";
    std::ofstream(path) << "garbage";
    CHECK_THROWS_AS(load_checkpoint(path), RuntimeFailure);
    CHECK_THROWS_AS(load_checkpoint(tmp.path() + "/missing.ckpt"), RuntimeFailure);

    const auto result = train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(),
                              fx.quick_shape());
    // truncated file
    save_checkpoint(result.checkpoint, path);
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full / 2);
    CHECK_THROWS_AS(load_checkpoint(path), RuntimeFailure);

    // version mismatch
    Checkpoint tampered = result.checkpoint;
    tampered.meta["version"] = 999;
    save_checkpoint(tampered, path);
    CHECK_THROWS_AS(load_checkpoint(path), RuntimeFailure);

    // wrong backend dims
    save_checkpoint(result.checkpoint, path);
    auto other = make_mock_backend(1, 64, 32, 64, 16);
    CHECK_THROWS_AS(model_from_checkpoint(load_checkpoint(path), other), ConfigError);
}

TEST_CASE("predict returns the argmax label with ties broken low") {
    Fixture fx;
    const auto result = train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(),
                              fx.quick_shape());
    const Model model = model_from_checkpoint(result.checkpoint, fx.backend);
    const auto& img = fx.suite.samples.front().image;
    const auto [label, post] = predict(model, img);
    CHECK(label == model.prompts.class_order[static_cast<size_t>(post.argmax())]);

    Posterior tie{{0.4, 0.4, 0.2}};
    CHECK(tie.argmax() == 0);
    Posterior peak{{0.1, 0.7, 0.2}};
    CHECK(peak.argmax() == 1);
}

TEST_CASE("resume continues to the configured horizon") {
    Fixture fx;
    TrainConfig half = fx.quick_config();
    half.epochs = 1;
    half.steps_per_epoch = 4;
    const auto first = train(fx.splits[0], fx.suite, fx.pool, fx.backend, half, fx.quick_shape());
    CHECK(first.checkpoint.meta["total_steps"] == 4);

    TrainConfig full = fx.quick_config();
    full.epochs = 2;
    full.steps_per_epoch = 4;
    const auto resumed = train_resume(fx.splits[0], fx.suite, fx.pool, fx.backend, full,
                                      fx.quick_shape(), first.checkpoint);
    CHECK(resumed.log.size() == 4);  // steps 4..7
    CHECK(resumed.log.front().step == 4);
    CHECK(resumed.checkpoint.meta["total_steps"] == 8);
}

TEST_CASE("training log JSONL stream carries the loss fields") {
    Fixture fx;
    testing::TmpDir tmp("odg_log");
    const std::string log_path = tmp.path() + "/train.jsonl";
    train(fx.splits[0], fx.suite, fx.pool, fx.backend, fx.quick_config(), fx.quick_shape(),
          log_path);
    std::ifstream in(log_path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("l_con"));
        CHECK(j.contains("l_sem"));
        CHECK(j.contains("n_sem_pairs"));
        CHECK(j.contains("lr"));
        ++lines;
    }
    CHECK(lines == 6);
}

}  // TEST_SUITE
