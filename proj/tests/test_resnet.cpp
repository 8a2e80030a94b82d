#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <set>

#include "calidrop/checkpoint.hpp"
#include "calidrop/gradcheck.hpp"
#include "calidrop/resnet.hpp"

using namespace calidrop;

namespace {

ResNetConfig tiny_config(DropoutVariant v = DropoutVariant::None, double rate = 0.0) {
    ResNetConfig cfg;
    cfg.stage_channels = {4, 8};
    cfg.blocks_per_stage = 1;
    cfg.num_classes = 3;
    cfg.in_channels = 2;
    cfg.in_height = 8;
    cfg.in_width = 8;
    cfg.dropout.variant = v;
    cfg.dropout.rate = rate;
    return cfg;
}

template <class S>
Tensor<S> random_batch(const ResNetConfig& cfg, int n, std::uint64_t seed) {
    Tensor<S> batch({n, cfg.in_channels, cfg.in_height, cfg.in_width});
    RngStream rng(seed, 0);
    for (std::int64_t i = 0; i < batch.size(); ++i)
        batch[i] = static_cast<S>(rng.normal() * 0.5);
    return batch;
}

template <class S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace

TEST_CASE("deterministic forward is repeatable and dropout free") {
    ResNet<float> net(tiny_config(DropoutVariant::Element, 0.5), 1);
    const TensorF batch = random_batch<float>(net.config(), 3, 10);
    const TensorF a = net.forward(batch, Mode::Deterministic);
    const TensorF b = net.forward(batch, Mode::Deterministic);
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("mc samples are reproducible per index and differ across indices") {
    ResNet<float> net(tiny_config(DropoutVariant::Element, 0.5), 2);
    const TensorF batch = random_batch<float>(net.config(), 2, 11);
    const TensorF s0a = net.forward(batch, Mode::McSample, 0);
    const TensorF s0b = net.forward(batch, Mode::McSample, 0);
    const TensorF s1 = net.forward(batch, Mode::McSample, 1);
    CHECK(max_abs_diff(s0a, s0b) == 0.0);
    CHECK(max_abs_diff(s0a, s1) > 0.0);
}

TEST_CASE("mc mode without a sample index is rejected") {
    ResNet<float> net(tiny_config(), 3);
    const TensorF batch = random_batch<float>(net.config(), 1, 12);
    CHECK_THROWS_AS(net.forward(batch, Mode::McSample), UsageError);
}

TEST_CASE("stream offset decorrelates chunks within one sample index") {
    ResNet<float> net(tiny_config(DropoutVariant::Element, 0.5), 4);
    const TensorF batch = random_batch<float>(net.config(), 2, 13);
    const TensorF a = net.forward(batch, Mode::McSample, 0, 0);
    const TensorF b = net.forward(batch, Mode::McSample, 0, 250);
    CHECK(max_abs_diff(a, b) > 0.0);
}

TEST_CASE("layer variant never drops downsampling blocks at mc time") {
    ResNetConfig cfg = tiny_config(DropoutVariant::Layer, 0.5);
    cfg.stage_channels = {4, 8, 8};
    ResNet<float> net(cfg, 5);
    const TensorF batch = random_batch<float>(net.config(), 1, 14);
    std::set<std::vector<std::uint8_t>> seen;
    for (int t = 0; t < 200; ++t) {
        net.forward(batch, Mode::McSample, t);
        const auto& gates = net.last_gates();
        for (int b = 0; b < net.num_blocks(); ++b)
            if (net.block_is_downsampling(b)) CHECK(gates[static_cast<size_t>(b)] == 1);
        seen.insert(gates);
    }
    CHECK(seen.size() > 1);  // non-downsampling gates really do vary
}

TEST_CASE("layer variant can drop downsampling blocks during training") {
    ResNet<float> net(tiny_config(DropoutVariant::Layer, 0.7), 6);
    const TensorF batch = random_batch<float>(net.config(), 1, 15);
    bool dropped_ds = false;
    for (int t = 0; t < 200 && !dropped_ds; ++t) {
        net.forward(batch, Mode::Train, t);
        for (int b = 0; b < net.num_blocks(); ++b)
            if (net.block_is_downsampling(b) && !net.last_gates()[static_cast<size_t>(b)])
                dropped_ds = true;
    }
    CHECK(dropped_ds);
}

TEST_CASE("train and eval forward agree when batch stats are copied exactly") {
    ResNetConfig cfg = tiny_config();
    cfg.final_fc_dropout_rate = 0.0;
    cfg.bn_momentum = 1.0;  // one train pass writes the batch stats verbatim
    ResNet<double> net(cfg, 7);
    const TensorD batch = random_batch<double>(cfg, 4, 16);
    const TensorD train_out = net.forward(batch, Mode::Train, 0);
    const TensorD eval_out = net.forward(batch, Mode::Deterministic);
    CHECK(max_abs_diff(train_out, eval_out) < 1e-10);
}

TEST_CASE("head dropout applies in stochastic modes for every variant") {
    // Even the no-body-dropout baseline keeps the classifier-head site active.
    ResNetConfig cfg = tiny_config(DropoutVariant::None, 0.0);
    cfg.final_fc_dropout_rate = 0.5;
    ResNet<float> net(cfg, 8);
    const TensorF batch = random_batch<float>(cfg, 2, 17);
    const TensorF s0 = net.forward(batch, Mode::McSample, 0);
    const TensorF s1 = net.forward(batch, Mode::McSample, 1);
    CHECK(max_abs_diff(s0, s1) > 0.0);
    const TensorF d0 = net.forward(batch, Mode::Deterministic);
    const TensorF d1 = net.forward(batch, Mode::Deterministic);
    CHECK(max_abs_diff(d0, d1) == 0.0);
}

TEST_CASE("analytic gradients match finite differences at 64-bit precision") {
    for (auto v : {DropoutVariant::None, DropoutVariant::Element, DropoutVariant::Channel}) {
        ResNet<double> net(tiny_config(v, v == DropoutVariant::None ? 0.0 : 0.3), 9);
        const TensorD batch = random_batch<double>(net.config(), 2, 18);
        const double rel = gradient_check(net, batch, {0, 2}, 1e-5, 40, 99);
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("parameter names are unique and the registry is stable") {
    ResNet<float> a(tiny_config(), 10);
    std::set<std::string> names;
    for (Param<float>* p : a.params()) names.insert(p->name);
    CHECK(names.size() == a.params().size());
    CHECK(a.parameter_count() > 0);
}

TEST_CASE("checkpoints round trip bit-exactly") {
    const ResNetConfig cfg = tiny_config(DropoutVariant::Element, 0.2);
    ResNet<float> a(cfg, 11);
    const std::string path = "/tmp/calidrop_test_ckpt.bin";
    save_checkpoint(path, a, a.config_hash(), 11);

    ResNet<float> b(cfg, 999);  // different init, then overwritten by the load
    const CheckpointHeader hdr = load_checkpoint(path, b);
    CHECK(hdr.config_hash == a.config_hash());
    CHECK(hdr.seed == 11);
    const TensorF batch = random_batch<float>(cfg, 2, 19);
    CHECK(max_abs_diff(a.forward(batch, Mode::Deterministic),
                       b.forward(batch, Mode::Deterministic)) == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("checkpoints refuse a mismatched architecture") {
    ResNet<float> a(tiny_config(), 12);
    const std::string path = "/tmp/calidrop_test_ckpt_mismatch.bin";
    save_checkpoint(path, a, a.config_hash(), 12);
    ResNetConfig other = tiny_config();
    other.stage_channels = {8, 8};
    ResNet<float> b(other, 12);
    CHECK_THROWS_AS(load_checkpoint(path, b), DataError);
    std::remove(path.c_str());
}

TEST_CASE("identical seeds build identical networks") {
    ResNet<float> a(tiny_config(), 13), b(tiny_config(), 13);
    const TensorF batch = random_batch<float>(tiny_config(), 2, 20);
    CHECK(max_abs_diff(a.forward(batch, Mode::Deterministic),
                       b.forward(batch, Mode::Deterministic)) == 0.0);
}
