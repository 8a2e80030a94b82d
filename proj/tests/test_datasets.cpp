#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "calidrop/datasets.hpp"
#include "calidrop/rng.hpp"

using namespace calidrop;

TEST_CASE("binary records decode label byte plus channel-major pixels over 255") {
    const std::string path = "/tmp/calidrop_test_cifar.bin";
    {
        std::ofstream os(path, std::ios::binary);
        std::vector<unsigned char> rec(3073, 0);
        rec[0] = 7;                         // label
        rec[1] = 255;                       // R plane, pixel (0,0)
        rec[1 + 33] = 51;                   // R plane, row 1 col 1
        rec[1 + 1024] = 102;                // G plane, pixel (0,0)
        rec[1 + 2048 + 1023] = 204;         // B plane, last pixel
        os.write(reinterpret_cast<char*>(rec.data()), 3073);
        rec[0] = 2;
        os.write(reinterpret_cast<char*>(rec.data()), 3073);
    }
    const ImageDataset ds = load_cifar10_binary(path);
    REQUIRE(ds.size() == 2);
    CHECK(ds.labels[0] == 7);
    CHECK(ds.labels[1] == 2);
    CHECK(ds.images.at4(0, 0, 0, 0) == doctest::Approx(1.0f));
    CHECK(ds.images.at4(0, 0, 1, 1) == doctest::Approx(51.0f / 255.0f));
    CHECK(ds.images.at4(0, 1, 0, 0) == doctest::Approx(102.0f / 255.0f));
    CHECK(ds.images.at4(0, 2, 31, 31) == doctest::Approx(204.0f / 255.0f));
    std::remove(path.c_str());
}

TEST_CASE("truncated files are rejected with the byte offset") {
    const std::string path = "/tmp/calidrop_test_trunc.bin";
    {
        std::ofstream os(path, std::ios::binary);
        std::vector<char> bytes(3073 + 100, 0);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_cifar10_binary(path), DataError);
    try {
        load_cifar10_binary(path);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("3073") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("missing files are rejected") {
    CHECK_THROWS_AS(load_cifar10_binary("/tmp/does_not_exist_calidrop.bin"), DataError);
}

TEST_CASE("write then load round trips") {
    ImageDataset ds;
    ds.images = TensorF({3, 3, 32, 32});
    ds.labels = {1, 5, 9};
    RngStream rng(1, 1);
    for (std::int64_t i = 0; i < ds.images.size(); ++i)
        ds.images[i] = static_cast<float>(rng.uniform_int(256)) / 255.0f;
    const std::string path = "/tmp/calidrop_test_roundtrip.bin";
    write_cifar10_binary(path, ds);
    const ImageDataset back = load_cifar10_binary(path);
    REQUIRE(back.size() == 3);
    CHECK(back.labels == ds.labels);
    for (std::int64_t i = 0; i < ds.images.size(); ++i)
        CHECK(back.images[i] == doctest::Approx(ds.images[i]).epsilon(1e-6));
    std::remove(path.c_str());
}

TEST_CASE("concatenating batch files preserves order") {
    ImageDataset a, b;
    a.images = TensorF({1, 3, 32, 32}, 0.25f);
    a.labels = {3};
    b.images = TensorF({2, 3, 32, 32}, 0.5f);
    b.labels = {4, 5};
    write_cifar10_binary("/tmp/calidrop_parts_a.bin", a);
    write_cifar10_binary("/tmp/calidrop_parts_b.bin", b);
    const ImageDataset all =
        load_cifar10_files({"/tmp/calidrop_parts_a.bin", "/tmp/calidrop_parts_b.bin"});
    REQUIRE(all.size() == 3);
    CHECK(all.labels == std::vector<int>{3, 4, 5});
    CHECK(all.images.at4(0, 0, 0, 0) == doctest::Approx(0.25f).epsilon(1e-2));
    CHECK(all.images.at4(2, 0, 0, 0) == doctest::Approx(0.5f).epsilon(1e-2));
    std::remove("/tmp/calidrop_parts_a.bin");
    std::remove("/tmp/calidrop_parts_b.bin");
}

TEST_CASE("per-pixel mean subtraction zeroes the train mean and uses it everywhere") {
    ImageDataset train, test;
    train.images = TensorF({4, 1, 32, 32});
    test.images = TensorF({2, 1, 32, 32});
    train.labels = {0, 0, 0, 0};
    test.labels = {0, 0};
    RngStream rng(2, 2);
    for (std::int64_t i = 0; i < train.images.size(); ++i)
        train.images[i] = static_cast<float>(rng.uniform());
    for (std::int64_t i = 0; i < test.images.size(); ++i)
        test.images[i] = static_cast<float>(rng.uniform());
    const TensorF test_before = test.images;
    const TensorF mean = compute_mean_image(train);
    per_pixel_mean_subtract({&train, &test});
    CHECK(train.mean_subtracted);
    CHECK(test.mean_subtracted);
    const std::int64_t per = 32 * 32;
    for (std::int64_t b = 0; b < per; ++b) {
        double s = 0;
        for (int i = 0; i < 4; ++i) s += train.images[i * per + b];
        CHECK(std::abs(s / 4) < 1e-6);
        CHECK(test.images[b] == doctest::Approx(test_before[b] - mean[b]).epsilon(1e-6));
    }
}

TEST_CASE("stratified split is disjoint, sized and class balanced") {
    ImageDataset ds;
    const int n = 200;
    ds.images = TensorF({n, 1, 32, 32});
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        ds.labels[static_cast<size_t>(i)] = i % 10;
        ds.images.data[static_cast<size_t>(i) * 1024] = static_cast<float>(i);  // identity tag
    }
    const auto parts = split(ds, {100, 50, 50}, 9, true);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].size() == 100);
    CHECK(parts[1].size() == 50);
    CHECK(parts[2].size() == 50);
    std::map<float, int> seen;
    for (const auto& part : parts)
        for (int i = 0; i < part.size(); ++i)
            ++seen[part.images.data[static_cast<size_t>(i) * 1024]];
    CHECK(seen.size() == 200u);  // no sample appears twice
    for (const auto& part : parts) {
        std::map<int, int> counts;
        for (int label : part.labels) ++counts[label];
        for (const auto& [label, count] : counts) CHECK(count == part.size() / 10);
    }
}

TEST_CASE("split draws are seed deterministic") {
    ImageDataset ds;
    ds.images = TensorF({40, 1, 32, 32});
    ds.labels.assign(40, 0);
    for (int i = 0; i < 40; ++i)
        ds.images.data[static_cast<size_t>(i) * 1024] = static_cast<float>(i);
    const auto a = split(ds, {20}, 5, false);
    const auto b = split(ds, {20}, 5, false);
    const auto c = split(ds, {20}, 6, false);
    CHECK(a[0].images.data == b[0].images.data);
    CHECK(a[0].images.data != c[0].images.data);
}

TEST_CASE("oversized split requests are rejected") {
    ImageDataset ds;
    ds.images = TensorF({10, 1, 32, 32});
    ds.labels.assign(10, 0);
    CHECK_THROWS_AS(split(ds, {8, 8}, 1, false), ConfigError);
}

TEST_CASE("synthetic constant family has exact conditionals") {
    SyntheticBinarySpec spec;
    spec.family = "constant";
    spec.constant = 0.3;
    spec.count = 20000;
    spec.seed = 3;
    const SyntheticBinary ds = generate_synthetic_binary(spec);
    double ones = 0;
    for (size_t i = 0; i < ds.labels.size(); ++i) {
        CHECK(ds.conditionals[i] == 0.3);
        ones += ds.labels[i];
    }
    const double sigma = std::sqrt(0.3 * 0.7 / spec.count);
    CHECK(std::abs(ones / spec.count - 0.3) < 5 * sigma);
}

TEST_CASE("synthetic logistic labels follow their conditionals") {
    SyntheticBinarySpec spec;
    spec.count = 50000;
    spec.seed = 4;
    const SyntheticBinary ds = generate_synthetic_binary(spec);
    // Bucket by conditional and compare the empirical positive rate.
    double sums[10] = {0}, hits[10] = {0};
    int counts[10] = {0};
    for (size_t i = 0; i < ds.labels.size(); ++i) {
        const double p = ds.conditionals[i];
        REQUIRE(p > 0.0);
        REQUIRE(p < 1.0);
        int b = static_cast<int>(p * 10);
        if (b > 9) b = 9;
        sums[b] += p;
        hits[b] += ds.labels[i];
        ++counts[b];
    }
    for (int b = 0; b < 10; ++b) {
        if (counts[b] < 500) continue;
        const double expect = sums[b] / counts[b];
        const double got = hits[b] / counts[b];
        CHECK(std::abs(got - expect) < 5 * std::sqrt(0.25 / counts[b]));
    }
}

TEST_CASE("unknown synthetic family is rejected") {
    SyntheticBinarySpec spec;
    spec.family = "cauchy";
    CHECK_THROWS_AS(generate_synthetic_binary(spec), ConfigError);
}

TEST_CASE("synthetic files round trip exactly") {
    SyntheticBinarySpec spec;
    spec.count = 100;
    spec.seed = 5;
    const SyntheticBinary ds = generate_synthetic_binary(spec);
    const std::string path = "/tmp/calidrop_test_syn.bin";
    save_synthetic_binary(path, ds);
    const SyntheticBinary back = load_synthetic_binary(path);
    CHECK(back.labels == ds.labels);
    CHECK(back.conditionals == ds.conditionals);
    CHECK(back.features.data == ds.features.data);
    std::remove(path.c_str());
}
