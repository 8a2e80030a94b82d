#include "calidrop/ensemble.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "calidrop/common.hpp"

namespace calidrop {

void EnsemblePredictions::validate() const {
    if (T < 1 || N < 1 || K < 1) throw DataError("ensemble: empty dimensions");
    if (probs.size() != static_cast<size_t>(T) * N * K)
        throw DataError("ensemble: payload size mismatch");
    if (labels.size() != static_cast<size_t>(N)) throw DataError("ensemble: label count mismatch");
    for (int t = 0; t < T; ++t)
        for (int n = 0; n < N; ++n) {
            double s = 0;
            for (int k = 0; k < K; ++k) s += at(t, n, k);
            if (std::abs(s - 1.0) > 1e-6)
                throw DataError("ensemble: member row off the simplex (t=" + std::to_string(t) +
                                ", n=" + std::to_string(n) + ", sum=" + std::to_string(s) + ")");
        }
}

PredictionSet ensemble_average(const EnsemblePredictions& ens, int prefix_m) {
    const int m = prefix_m < 0 ? ens.T : prefix_m;
    if (m < 1 || m > ens.T) throw UsageError("ensemble_average: prefix out of range");
    PredictionSet out;
    out.N = ens.N;
    out.K = ens.K;
    out.labels = ens.labels;
    out.probs.assign(static_cast<size_t>(ens.N) * ens.K, 0.0);
    for (int t = 0; t < m; ++t)
        for (int n = 0; n < ens.N; ++n)
            for (int k = 0; k < ens.K; ++k) out.at(n, k) += ens.at(t, n, k);
    for (double& p : out.probs) p /= m;
    return out;
}

namespace {
constexpr char kMagic[4] = {'C', 'D', 'E', 'P'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_ensemble(const std::string& path, const EnsemblePredictions& ens) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open ensemble file for writing: " + path);
    os.write(kMagic, 4);
    os.write(reinterpret_cast<const char*>(&kVersion), 4);
    const std::int32_t t = ens.T, n = ens.N, k = ens.K;
    os.write(reinterpret_cast<const char*>(&t), 4);
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(reinterpret_cast<const char*>(&k), 4);
    const std::uint16_t slen = static_cast<std::uint16_t>(ens.source.size());
    os.write(reinterpret_cast<const char*>(&slen), 2);
    os.write(ens.source.data(), slen);
    os.write(reinterpret_cast<const char*>(ens.probs.data()),
             static_cast<std::streamsize>(ens.probs.size() * sizeof(double)));
    for (int label : ens.labels) {
        const std::int32_t v = label;
        os.write(reinterpret_cast<const char*>(&v), 4);
    }
    for (std::int64_t id : ens.member_ids) os.write(reinterpret_cast<const char*>(&id), 8);
    if (!os) throw DataError("write failure on ensemble file: " + path);
}

EnsemblePredictions load_ensemble(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open ensemble file: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not an ensemble predictions file: " + path);
    std::uint32_t version;
    if (!is.read(reinterpret_cast<char*>(&version), 4) || version != kVersion)
        throw DataError("unsupported ensemble file version");
    EnsemblePredictions ens;
    std::int32_t t, n, k;
    if (!is.read(reinterpret_cast<char*>(&t), 4) || !is.read(reinterpret_cast<char*>(&n), 4) ||
        !is.read(reinterpret_cast<char*>(&k), 4))
        throw DataError("truncated ensemble header: " + path);
    ens.T = t;
    ens.N = n;
    ens.K = k;
    std::uint16_t slen;
    if (!is.read(reinterpret_cast<char*>(&slen), 2)) throw DataError("truncated source tag");
    ens.source.resize(slen);
    if (slen && !is.read(ens.source.data(), slen)) throw DataError("truncated source tag");
    ens.probs.resize(static_cast<size_t>(t) * n * k);
    if (!is.read(reinterpret_cast<char*>(ens.probs.data()),
                 static_cast<std::streamsize>(ens.probs.size() * sizeof(double))))
        throw DataError("truncated ensemble payload: " + path);
    ens.labels.resize(static_cast<size_t>(n));
    for (auto& label : ens.labels) {
        std::int32_t v;
        if (!is.read(reinterpret_cast<char*>(&v), 4)) throw DataError("truncated labels");
        label = v;
    }
    ens.member_ids.resize(static_cast<size_t>(t));
    for (auto& id : ens.member_ids)
        if (!is.read(reinterpret_cast<char*>(&id), 8)) throw DataError("truncated member ids");
    ens.validate();
    return ens;
}

void save_ensemble_table(const std::string& path, const EnsemblePredictions& ens) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "member,sample,label";
    for (int k = 0; k < ens.K; ++k) os << ",p" << k;
    os << "\n";
    char buf[32];
    for (int t = 0; t < ens.T; ++t)
        for (int n = 0; n < ens.N; ++n) {
            os << ens.member_ids[static_cast<size_t>(t)] << "," << n << ","
               << ens.labels[static_cast<size_t>(n)];
            for (int k = 0; k < ens.K; ++k) {
                std::snprintf(buf, sizeof(buf), "%.9g", ens.at(t, n, k));
                os << "," << buf;
            }
            os << "\n";
        }
}

}  // namespace calidrop
