#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "calidrop/calibration.hpp"
#include "calidrop/ensemble.hpp"
#include "calidrop/resnet.hpp"
#include "calidrop/rng.hpp"

using namespace calidrop;

namespace {

EnsemblePredictions random_ensemble(int T, int N, int K, std::uint64_t seed) {
    EnsemblePredictions ens;
    ens.T = T;
    ens.N = N;
    ens.K = K;
    ens.source = "test";
    ens.probs.resize(static_cast<size_t>(T) * N * K);
    ens.labels.resize(static_cast<size_t>(N));
    RngStream rng(seed, 0);
    for (int t = 0; t < T; ++t)
        for (int n = 0; n < N; ++n) {
            double sum = 0;
            for (int k = 0; k < K; ++k) {
                const double v = -std::log(1.0 - rng.uniform());
                ens.at(t, n, k) = v;
                sum += v;
            }
            for (int k = 0; k < K; ++k) ens.at(t, n, k) /= sum;
        }
    for (int n = 0; n < N; ++n)
        ens.labels[static_cast<size_t>(n)] = static_cast<int>(rng.uniform_int(K));
    for (int t = 0; t < T; ++t) ens.member_ids.push_back(t);
    return ens;
}

ResNetConfig tiny_config() {
    ResNetConfig cfg;
    cfg.stage_channels = {4};
    cfg.blocks_per_stage = 1;
    cfg.num_classes = 3;
    cfg.in_channels = 1;
    cfg.in_height = 8;
    cfg.in_width = 8;
    cfg.dropout.variant = DropoutVariant::Element;
    cfg.dropout.rate = 0.3;
    return cfg;
}

}  // namespace

TEST_CASE("ensemble average is the exact member mean") {
    EnsemblePredictions ens;
    ens.T = 2;
    ens.N = 1;
    ens.K = 2;
    ens.probs = {0.8, 0.2, 0.4, 0.6};
    ens.labels = {0};
    ens.member_ids = {0, 1};
    const PredictionSet avg = ensemble_average(ens);
    CHECK(avg.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(avg.at(0, 1) == doctest::Approx(0.4).epsilon(1e-15));
    const PredictionSet first = ensemble_average(ens, 1);
    CHECK(first.at(0, 0) == 0.8);
    CHECK_THROWS_AS(ensemble_average(ens, 3), UsageError);
}

TEST_CASE("validate rejects rows off the simplex") {
    EnsemblePredictions ens = random_ensemble(2, 3, 4, 1);
    CHECK_NOTHROW(ens.validate());
    ens.at(1, 2, 0) += 0.01;
    CHECK_THROWS_AS(ens.validate(), DataError);
}

TEST_CASE("averaging never increases the negative log likelihood") {
    // Jensen: nll(mean of members) <= mean of member nlls, for any ensemble.
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const EnsemblePredictions ens = random_ensemble(5, 20, 4, 100 + seed);
        const double ens_nll = nll(ensemble_average(ens));
        double member_sum = 0;
        for (int t = 0; t < ens.T; ++t) {
            PredictionSet member;
            member.N = ens.N;
            member.K = ens.K;
            member.labels = ens.labels;
            member.probs.assign(ens.probs.begin() + static_cast<size_t>(t) * ens.N * ens.K,
                                ens.probs.begin() + static_cast<size_t>(t + 1) * ens.N * ens.K);
            member_sum += nll(member);
        }
        CHECK(ens_nll <= member_sum / ens.T + 1e-12);
    }
}

TEST_CASE("ensemble files round trip exactly") {
    const EnsemblePredictions ens = random_ensemble(3, 5, 4, 2);
    const std::string path = "/tmp/calidrop_test_ens.bin";
    save_ensemble(path, ens);
    const EnsemblePredictions back = load_ensemble(path);
    CHECK(back.T == ens.T);
    CHECK(back.N == ens.N);
    CHECK(back.K == ens.K);
    CHECK(back.source == ens.source);
    CHECK(back.probs == ens.probs);
    CHECK(back.labels == ens.labels);
    CHECK(back.member_ids == ens.member_ids);
    std::remove(path.c_str());
}

TEST_CASE("corrupt ensemble files are rejected") {
    const std::string path = "/tmp/calidrop_test_ens_bad.bin";
    {
        std::ofstream os(path, std::ios::binary);
        os << "not an ensemble";
    }
    CHECK_THROWS_AS(load_ensemble(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("mc_predict is reproducible and row stochastic") {
    ResNet<float> net(tiny_config(), 3);
    TensorF images({7, 1, 8, 8});
    RngStream rng(4, 0);
    for (std::int64_t i = 0; i < images.size(); ++i)
        images[i] = static_cast<float>(rng.normal());
    std::vector<int> labels(7, 1);
    const EnsemblePredictions a = mc_predict(net, images, labels, 4, "mc_element", 3);
    const EnsemblePredictions b = mc_predict(net, images, labels, 4, "mc_element", 3);
    CHECK(a.probs == b.probs);
    CHECK(a.T == 4);
    CHECK(a.source == "mc_element");
    CHECK_NOTHROW(a.validate());
    // members must differ (dropout is on)
    bool differ = false;
    for (int n = 0; n < a.N && !differ; ++n)
        for (int k = 0; k < a.K && !differ; ++k)
            if (a.at(0, n, k) != a.at(1, n, k)) differ = true;
    CHECK(differ);
    CHECK_THROWS_AS(mc_predict(net, images, labels, 0), ConfigError);
}

TEST_CASE("mc_predict chunks use fresh mask draws per chunk") {
    ResNet<float> net(tiny_config(), 5);
    TensorF images({9, 1, 8, 8});
    RngStream rng(6, 0);
    for (std::int64_t i = 0; i < images.size(); ++i)
        images[i] = static_cast<float>(rng.normal());
    std::vector<int> labels(9, 0);
    const EnsemblePredictions a = mc_predict(net, images, labels, 3, "mc", 4);
    const EnsemblePredictions b = mc_predict(net, images, labels, 3, "mc", 4);
    CHECK(a.probs == b.probs);  // same chunking is reproducible
    CHECK_NOTHROW(a.validate());

    // The same input placed in two different chunks must see two different
    // masks for a given member, otherwise chunked evaluation would tile the
    // same pattern across the dataset.
    TensorF twice({8, 1, 8, 8});
    const std::int64_t per = 64;
    for (int r = 0; r < 8; ++r)
        std::copy_n(images.data.begin(), per, twice.data.begin() + r * per);
    const EnsemblePredictions dup = mc_predict(net, twice, std::vector<int>(8, 0), 1, "mc", 4);
    bool differ = false;
    for (int k = 0; k < dup.K; ++k)
        if (dup.at(0, 0, k) != dup.at(0, 4, k)) differ = true;
    CHECK(differ);
}

TEST_CASE("deep ensembles run each model deterministically") {
    ResNet<float> m1(tiny_config(), 7);
    ResNet<float> m2(tiny_config(), 8);
    TensorF images({4, 1, 8, 8});
    RngStream rng(9, 0);
    for (std::int64_t i = 0; i < images.size(); ++i)
        images[i] = static_cast<float>(rng.normal());
    std::vector<int> labels(4, 2);
    std::vector<Model<float>*> nets{&m1, &m2};
    const EnsemblePredictions a = deep_ensemble_predict(nets, images, labels);
    const EnsemblePredictions b = deep_ensemble_predict(nets, images, labels);
    CHECK(a.probs == b.probs);
    CHECK(a.T == 2);
    CHECK(a.source == "deep_ensemble");
    std::vector<Model<float>*> none;
    CHECK_THROWS_AS(deep_ensemble_predict(none, images, labels), ConfigError);
}
