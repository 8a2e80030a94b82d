#include "calidrop/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "calidrop/common.hpp"
#include "calidrop/rng.hpp"

namespace calidrop {

namespace {
constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr std::int64_t kRecordBytes = 1 + kCifarChannels * kCifarDim * kCifarDim;
}  // namespace

ImageDataset load_cifar10_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw DataError("cannot open dataset file: " + path);
    const std::int64_t bytes = is.tellg();
    is.seekg(0);
    if (bytes % kRecordBytes != 0)
        throw DataError("file size " + std::to_string(bytes) + " is not a multiple of " +
                        std::to_string(kRecordBytes) + " (truncated record at byte offset " +
                        std::to_string(bytes - bytes % kRecordBytes) + "): " + path);
    const int n = static_cast<int>(bytes / kRecordBytes);
    ImageDataset ds;
    ds.images = TensorF({n, kCifarChannels, kCifarDim, kCifarDim});
    ds.labels.resize(static_cast<size_t>(n));
    std::vector<unsigned char> rec(static_cast<size_t>(kRecordBytes));
    for (int i = 0; i < n; ++i) {
        if (!is.read(reinterpret_cast<char*>(rec.data()), kRecordBytes))
            throw DataError("read failure at record " + std::to_string(i) + ": " + path);
        ds.labels[static_cast<size_t>(i)] = rec[0];
        float* dst = ds.images.data.data() +
                     static_cast<std::int64_t>(i) * (kRecordBytes - 1);
        for (std::int64_t b = 0; b < kRecordBytes - 1; ++b)
            dst[b] = static_cast<float>(rec[static_cast<size_t>(b + 1)]) / 255.0f;
    }
    return ds;
}

ImageDataset load_cifar10_files(const std::vector<std::string>& paths) {
    ImageDataset all;
    std::vector<ImageDataset> parts;
    int total = 0;
    for (const auto& p : paths) {
        parts.push_back(load_cifar10_binary(p));
        total += parts.back().size();
    }
    all.images = TensorF({total, kCifarChannels, kCifarDim, kCifarDim});
    all.labels.reserve(static_cast<size_t>(total));
    std::int64_t off = 0;
    for (const auto& part : parts) {
        std::copy(part.images.data.begin(), part.images.data.end(), all.images.data.begin() + off);
        off += part.images.size();
        all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    }
    return all;
}

void write_cifar10_binary(const std::string& path, const ImageDataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    const std::int64_t per_img = kRecordBytes - 1;
    std::vector<unsigned char> rec(static_cast<size_t>(kRecordBytes));
    for (int i = 0; i < ds.size(); ++i) {
        rec[0] = static_cast<unsigned char>(ds.labels[static_cast<size_t>(i)]);
        const float* src = ds.images.data.data() + static_cast<std::int64_t>(i) * per_img;
        for (std::int64_t b = 0; b < per_img; ++b) {
            float v = src[b] * 255.0f + 0.5f;
            rec[static_cast<size_t>(b + 1)] =
                static_cast<unsigned char>(std::clamp(v, 0.0f, 255.0f));
        }
        os.write(reinterpret_cast<const char*>(rec.data()), kRecordBytes);
    }
    if (!os) throw DataError("write failure: " + path);
}

TensorF compute_mean_image(const ImageDataset& train) {
    if (train.size() == 0) throw DataError("mean image requires a non-empty train split");
    const std::int64_t per_img = train.images.size() / train.size();
    TensorF mean(std::vector<int>(train.images.shape.begin() + 1, train.images.shape.end()));
    for (int i = 0; i < train.size(); ++i) {
        const float* src = train.images.data.data() + static_cast<std::int64_t>(i) * per_img;
        for (std::int64_t b = 0; b < per_img; ++b) mean[b] += src[b];
    }
    for (std::int64_t b = 0; b < per_img; ++b) mean[b] /= static_cast<float>(train.size());
    return mean;
}

void subtract_mean(ImageDataset& ds, const TensorF& mean) {
    const std::int64_t per_img = mean.size();
    for (int i = 0; i < ds.size(); ++i) {
        float* dst = ds.images.data.data() + static_cast<std::int64_t>(i) * per_img;
        for (std::int64_t b = 0; b < per_img; ++b) dst[b] -= mean[b];
    }
    ds.mean_image = mean;
    ds.mean_subtracted = true;
}

void per_pixel_mean_subtract(std::vector<ImageDataset*> splits) {
    if (splits.empty() || splits[0]->size() == 0)
        throw DataError("per_pixel_mean_subtract: first (train) split must be non-empty");
    const TensorF mean = compute_mean_image(*splits[0]);
    for (ImageDataset* ds : splits) subtract_mean(*ds, mean);
}

ImageDataset select(const ImageDataset& ds, const std::vector<int>& indices) {
    ImageDataset out;
    out.num_classes = ds.num_classes;
    out.mean_image = ds.mean_image;
    out.mean_subtracted = ds.mean_subtracted;
    std::vector<int> shp = ds.images.shape;
    shp[0] = static_cast<int>(indices.size());
    out.images = TensorF(shp);
    out.labels.resize(indices.size());
    const std::int64_t per_img = ds.size() ? ds.images.size() / ds.size() : 0;
    for (size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        if (src < 0 || src >= ds.size()) throw UsageError("select: index out of range");
        std::copy_n(ds.images.data.begin() + src * per_img, per_img,
                    out.images.data.begin() + static_cast<std::int64_t>(i) * per_img);
        out.labels[i] = ds.labels[static_cast<size_t>(src)];
    }
    return out;
}

namespace {

std::vector<int> shuffled_indices(const ImageDataset& ds, std::uint64_t seed, bool stratified) {
    RngStream rng(seed, stream_id(stream_purpose::kSplit, 0, 0));
    if (!stratified) {
        std::vector<int> idx(static_cast<size_t>(ds.size()));
        for (int i = 0; i < ds.size(); ++i) idx[static_cast<size_t>(i)] = i;
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(i))]);
        return idx;
    }
    // Shuffle within each class, then interleave round-robin so any prefix is
    // class-balanced within +-1.
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < ds.size(); ++i) by_class[ds.labels[static_cast<size_t>(i)]].push_back(i);
    for (auto& [c, v] : by_class)
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<size_t>(rng.uniform_int(i))]);
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(ds.size()));
    bool more = true;
    for (size_t pos = 0; more; ++pos) {
        more = false;
        for (auto& [c, v] : by_class)
            if (pos < v.size()) {
                idx.push_back(v[pos]);
                more = true;
            }
    }
    return idx;
}

}  // namespace

std::vector<ImageDataset> split(const ImageDataset& ds, const std::vector<int>& sizes,
                                std::uint64_t seed, bool stratified) {
    std::int64_t total = 0;
    for (int s : sizes) total += s;
    if (total > ds.size())
        throw ConfigError("split sizes sum " + std::to_string(total) + " exceeds dataset size " +
                          std::to_string(ds.size()));
    const std::vector<int> idx = shuffled_indices(ds, seed, stratified);
    std::vector<ImageDataset> out;
    std::int64_t off = 0;
    for (int s : sizes) {
        std::vector<int> part(idx.begin() + off, idx.begin() + off + s);
        out.push_back(select(ds, part));
        off += s;
    }
    return out;
}

ImageDataset subsample(const ImageDataset& ds, int n, std::uint64_t seed, bool stratified) {
    return split(ds, {n}, seed, stratified)[0];
}

SyntheticBinary generate_synthetic_binary(const SyntheticBinarySpec& spec) {
    RngStream rng(spec.seed, stream_id(stream_purpose::kSynthetic, 0, 0));
    SyntheticBinary out;
    out.features = TensorD({spec.count, spec.dim});
    out.labels.resize(static_cast<size_t>(spec.count));
    out.conditionals.resize(static_cast<size_t>(spec.count));

    std::vector<double> w(static_cast<size_t>(spec.dim));
    if (spec.family == "logistic") {
        for (auto& wi : w) wi = rng.normal() * spec.weight_scale;
    } else if (spec.family != "constant") {
        throw ConfigError("unknown synthetic family '" + spec.family + "'");
    }

    for (int i = 0; i < spec.count; ++i) {
        double score = 0.0;
        for (int d = 0; d < spec.dim; ++d) {
            const double x = rng.normal();
            out.features.at2(i, d) = x;
            score += w[static_cast<size_t>(d)] * x;
        }
        const double p = spec.family == "constant" ? spec.constant : 1.0 / (1.0 + std::exp(-score));
        out.conditionals[static_cast<size_t>(i)] = p;
        out.labels[static_cast<size_t>(i)] = rng.bernoulli(p) ? 1 : 0;
    }
    return out;
}

namespace {
constexpr char kSynMagic[4] = {'C', 'D', 'S', 'B'};
}

void save_synthetic_binary(const std::string& path, const SyntheticBinary& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kSynMagic, 4);
    const std::int32_t n = ds.features.dim(0), d = ds.features.dim(1), k = 2;
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(reinterpret_cast<const char*>(&d), 4);
    os.write(reinterpret_cast<const char*>(&k), 4);
    os.write(reinterpret_cast<const char*>(ds.features.data.data()),
             static_cast<std::streamsize>(ds.features.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(ds.conditionals.data()),
             static_cast<std::streamsize>(ds.conditionals.size() * sizeof(double)));
    for (int label : ds.labels) {
        const std::int32_t v = label;
        os.write(reinterpret_cast<const char*>(&v), 4);
    }
    if (!os) throw DataError("write failure: " + path);
}

SyntheticBinary load_synthetic_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kSynMagic, 4) != 0)
        throw DataError("not a synthetic dataset file: " + path);
    std::int32_t n, d, k;
    if (!is.read(reinterpret_cast<char*>(&n), 4) || !is.read(reinterpret_cast<char*>(&d), 4) ||
        !is.read(reinterpret_cast<char*>(&k), 4))
        throw DataError("truncated header: " + path);
    SyntheticBinary ds;
    ds.features = TensorD({n, d});
    ds.conditionals.resize(static_cast<size_t>(n));
    ds.labels.resize(static_cast<size_t>(n));
    if (!is.read(reinterpret_cast<char*>(ds.features.data.data()),
                 static_cast<std::streamsize>(ds.features.size() * sizeof(double))) ||
        !is.read(reinterpret_cast<char*>(ds.conditionals.data()),
                 static_cast<std::streamsize>(ds.conditionals.size() * sizeof(double))))
        throw DataError("truncated payload: " + path);
    for (auto& label : ds.labels) {
        std::int32_t v;
        if (!is.read(reinterpret_cast<char*>(&v), 4)) throw DataError("truncated labels: " + path);
        label = v;
    }
    return ds;
}

}  // namespace calidrop
