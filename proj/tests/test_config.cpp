#include "doctest.h"

#include "calidrop/config.hpp"

using namespace calidrop;

TEST_CASE("parsing a full config") {
    const std::string text = R"(
# a comment
seed=42

[dataset]
kind=cifar10
path=/data/c10.bin
train_size=1000
val_size=200
test_size=300
stratified=false

[model]
stage_channels=8,16,32
blocks_per_stage=3
num_classes=10
final_fc_dropout_rate=0.2

[dropout]
variant=block
rate=0.15
block_size=5

[train]
epochs=20
batch_size=64
lr=0.02
lr_drop_epochs=10,15
augment=false

[eval]
mc_samples=12
num_bins=10

[al]
initial_labeled=100
acquire_per_round=50
rounds=3
acquisitions=max_entropy,random
)";
    const RunConfig cfg = parse_run_config(text);
    CHECK(cfg.seed == 42);
    CHECK(cfg.dataset.path == "/data/c10.bin");
    CHECK(cfg.dataset.train_size == 1000);
    CHECK(!cfg.dataset.stratified);
    CHECK(cfg.model.stage_channels == std::vector<int>{8, 16, 32});
    CHECK(cfg.model.blocks_per_stage == 3);
    CHECK(cfg.model.final_fc_dropout_rate == doctest::Approx(0.2));
    CHECK(cfg.model.dropout.variant == DropoutVariant::Block);
    CHECK(cfg.model.dropout.rate == doctest::Approx(0.15));
    CHECK(cfg.model.dropout.block_size == 5);
    CHECK(cfg.train.epochs == 20);
    CHECK(cfg.train.lr_drop_epochs == std::vector<int>{10, 15});
    CHECK(!cfg.train.augment);
    CHECK(cfg.eval.mc_samples == 12);
    CHECK(cfg.eval.num_bins == 10);
    CHECK(cfg.al.initial_labeled == 100);
    CHECK(cfg.al_acquisitions == std::vector<std::string>{"max_entropy", "random"});
}

TEST_CASE("defaults survive an empty config") {
    const RunConfig cfg = parse_run_config("");
    CHECK(cfg.seed == 0);
    CHECK(cfg.dataset.train_size == 10000);
    CHECK(cfg.eval.mc_samples == 30);
    CHECK(cfg.model.stage_channels == std::vector<int>{16, 32, 64});
    CHECK(cfg.train.lr == doctest::Approx(0.01));
    CHECK(cfg.train.momentum == doctest::Approx(0.9));
    CHECK(cfg.train.weight_decay == doctest::Approx(1e-4));
}

TEST_CASE("unknown keys and sections are rejected") {
    CHECK_THROWS_AS(parse_run_config("bogus=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[model]\nwidth=3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[rocket]\nfuel=full\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[dataset\nkind=cifar10\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed\n"), ConfigError);
}

TEST_CASE("malformed values are rejected with the offending key") {
    try {
        parse_run_config("[train]\nepochs=soon\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.epochs") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_run_config("[train]\naugment=maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[dropout]\nrate=1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[al]\nacquisitions=psychic\n"), ConfigError);
}

TEST_CASE("validation catches inconsistent combinations") {
    CHECK_THROWS_AS(parse_run_config("[dataset]\nkind=mnist\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[train]\nepochs=5\nlr_drop_epochs=10\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[dropout]\nvariant=block\nblock_size=4\n"), ConfigError);
}

TEST_CASE("serialize then parse is the identity") {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.dataset.path = "/tmp/x.bin";
    cfg.model.dropout.variant = DropoutVariant::Channel;
    cfg.model.dropout.rate = 0.2;
    cfg.train.epochs = 12;
    cfg.train.lr_drop_epochs = {6, 9};
    const RunConfig back = parse_run_config(serialize_run_config(cfg));
    CHECK(serialize_run_config(back) == serialize_run_config(cfg));
    CHECK(back.seed == 7);
    CHECK(back.model.dropout.variant == DropoutVariant::Channel);
    CHECK(back.train.lr_drop_epochs == std::vector<int>{6, 9});
}

TEST_CASE("profiles rescale the run") {
    RunConfig cfg;
    apply_profile(cfg, "mini");
    CHECK(cfg.dataset.train_size == 10000);
    apply_profile(cfg, "paper");
    CHECK(cfg.dataset.train_size == 45000);
    CHECK(cfg.dataset.test_size == 10000);
    CHECK(cfg.train.epochs == 250);
    CHECK(cfg.train.lr_drop_epochs == std::vector<int>{125, 190});
    CHECK(cfg.al.initial_labeled == 2000);
    CHECK(cfg.al.rounds == 9);
    CHECK(cfg.al.repeats == 5);
    CHECK_THROWS_AS(apply_profile(cfg, "jumbo"), ConfigError);
}

TEST_CASE("missing config files are a config error") {
    CHECK_THROWS_AS(load_run_config("/tmp/does_not_exist_calidrop.cfg"), ConfigError);
}
