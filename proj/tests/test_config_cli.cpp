#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "odg/commands.hpp"
#include "odg/common.hpp"
#include "odg/config.hpp"
#include "support/tmpdir.hpp"

using namespace odg;

namespace fs = std::filesystem;

namespace {

// Desk-sized end-to-end configuration.
nlohmann::json micro_config(const std::string& out_dir) {
    return nlohmann::json{
        {"dataset",
         {{"type", "toy"},
          {"toy",
           {{"seed", 7}, {"n_domains", 2}, {"n_classes", 3}, {"n_per_cell", 2}, {"image_size", 32}}}}},
        {"backend",
         {{"backend", "mock"}, {"seed", 1}, {"d_v", 32}, {"d_tok", 16}, {"d_t", 32},
          {"n_patch_tokens", 16}}},
        {"model", {{"upsampler_widths", {3, 3, 2}}}},
        {"opengen", {{"count", 4}}},
        {"train",
         {{"epochs", 1}, {"steps_per_epoch", 2}, {"batch_size", 4}, {"tau", 0.1},
          {"open_fraction", 0.25}}},
        {"eval", {{"seeds", 1}, {"out_dir", out_dir}}}};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("config_cli") {

TEST_CASE("defaults and documented fallbacks") {
    const RunConfig cfg = parse_run_config(nlohmann::json::object());
    CHECK(cfg.dataset_type == "toy");
    CHECK(cfg.train.epochs == 10);
    CHECK(cfg.train.base_lr == 0.01);
    CHECK(cfg.train.batch_size == 32);
    CHECK(cfg.train.open_fraction == 0.25);
    CHECK(cfg.train.tau == 0.01);
    CHECK(cfg.shape.context_len_cls == 4);
    CHECK(cfg.shape.context_len_dom == 4);
    CHECK(cfg.shape.upsampler_widths == std::array<int, 3>{16, 16, 8});
    CHECK(cfg.entropy_threshold == 0.2);
    CHECK(cfg.eval_seeds == 3);
}

TEST_CASE("unknown keys are rejected everywhere") {
    CHECK_THROWS_AS(parse_run_config({{"surprise", 1}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"train", {{"epoch", 3}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"dataset", {{"roots", "x"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"opengen", {{"http", {{"port", 1}}}}}}), ConfigError);
}

TEST_CASE("value validation") {
    CHECK_THROWS_AS(parse_run_config({{"dataset", {{"type", "webcam"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"train", {{"init_mode", "zeros"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"train", {{"dom_token_position", "top"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"model", {{"upsampler_widths", {1, 2}}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"eval", {{"seeds", 0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"train", {{"epochs", "ten"}}}}), ConfigError);
}

TEST_CASE("class split inline and from file, not both") {
    testing::TmpDir tmp("odg_cfg");
    const std::string split_file = tmp.path() + "/split.json";
    std::ofstream(split_file) << R"({"amber": [0, 1]})";

    auto cfg = parse_run_config({{"dataset", {{"class_split_file", split_file}}}});
    REQUIRE(cfg.class_split.has_value());
    CHECK(cfg.class_split->at("amber") == std::vector<int>{0, 1});

    CHECK_THROWS_AS(parse_run_config({{"dataset",
                                       {{"class_split", {{"amber", {0}}}},
                                        {"class_split_file", split_file}}}}),
                    ConfigError);
}

TEST_CASE("effective config echoes defaults and re-parses to itself") {
    const RunConfig cfg = parse_run_config(micro_config("out"));
    const auto echoed = cfg.effective_json();
    const RunConfig back = parse_run_config(echoed);
    CHECK(back.effective_json() == echoed);
    CHECK(echoed["train"]["epochs"] == 1);
    CHECK(echoed["opengen"]["count"] == 4);
}

TEST_CASE("derived pool budget follows the batch quota") {
    RunConfig cfg = parse_run_config(nlohmann::json::object());
    cfg.pool_count = 0;
    cfg.train.batch_size = 32;
    cfg.train.open_fraction = 0.25;
    cfg.steps_per_epoch_cap = 20;
    CHECK(cfg.effective_pool_count() == 8 * 20);
    cfg.pool_count = 5;
    CHECK(cfg.effective_pool_count() == 5);
}

TEST_CASE("generate-open then train then evaluate then diagnose") {
    testing::TmpDir tmp("odg_cli_e2e");
    RunConfig cfg = parse_run_config(micro_config(tmp.path() + "/out"));

    // training before generating pools must fail with a clear error
    CHECK_THROWS_AS(cmd_train(cfg, "", ""), ConfigError);

    cmd_generate_open(cfg);
    CHECK(fs::exists(fs::path(tmp.path()) / "out" / "effective_config.json"));

    const std::string ckpt = cmd_train(cfg, "", "");
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(fs::path(tmp.path()) / "out" / "logs"));

    const std::string report = cmd_evaluate(cfg, ckpt, "");
    CHECK(fs::exists(report));
    const auto j = nlohmann::json::parse(slurp(report));
    CHECK(j["per_target"].size() == 1);

    const std::string diag = cmd_diagnose(cfg, ckpt, "");
    CHECK(fs::exists(fs::path(diag) / "xhat_cosine.csv"));
    CHECK(fs::exists(fs::path(diag) / "frechet.csv"));
    CHECK(fs::exists(fs::path(diag) / "frechet.json"));

    // Frechet matrix symmetric with a zero diagonal
    const auto fj = nlohmann::json::parse(slurp(fs::path(diag) / "frechet.json"));
    for (auto& [a, row] : fj.items())
        for (auto& [b, v] : row.items()) {
            if (a == b) CHECK(v.get<double>() == 0.0);
            CHECK(v.get<double>() == doctest::Approx(fj[b][a].get<double>()).epsilon(1e-9));
        }
}

TEST_CASE("commands are idempotent: identical config gives identical bytes") {
    testing::TmpDir tmp("odg_cli_idem");
    RunConfig cfg = parse_run_config(micro_config(tmp.path() + "/out"));
    cmd_generate_open(cfg);
    const std::string ckpt1 = cmd_train(cfg, "", "");
    const std::string bytes1 = slurp(ckpt1);
    const std::string ckpt2 = cmd_train(cfg, "", "");
    CHECK(ckpt1 == ckpt2);
    CHECK(slurp(ckpt2) == bytes1);
}

TEST_CASE("lodo command writes the report bundle") {
    testing::TmpDir tmp("odg_cli_lodo");
    auto j = micro_config(tmp.path() + "/out");
    j["dataset"]["class_split"] = {{"amber", {0, 1}}, {"cobalt", {0, 1}}};
    RunConfig cfg = parse_run_config(j);
    const std::string report = cmd_lodo(cfg);
    CHECK(fs::exists(report));
    CHECK(fs::exists(fs::path(tmp.path()) / "out" / "reports" / "lodo_report.csv"));
    CHECK(fs::exists(fs::path(tmp.path()) / "out" / "reports" / "lodo_scores.png"));
    const auto parsed = nlohmann::json::parse(slurp(report));
    CHECK(parsed["per_target"].size() == 2);
    CHECK(parsed.contains("mean_h"));
}

}  // TEST_SUITE
