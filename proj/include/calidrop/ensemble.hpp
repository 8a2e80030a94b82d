#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "calidrop/model.hpp"

namespace calidrop {

// T x N x K probability tensor from T stochastic passes (or T distinct
// models). This is the interchange object every analytic module consumes.
struct EnsemblePredictions {
    int T = 0, N = 0, K = 0;
    std::vector<double> probs;  // T*N*K, row (t,n) on the simplex
    std::vector<int> labels;    // N
    std::vector<std::int64_t> member_ids;
    std::string source;  // "mc_<variant>" or "deep_ensemble"

    double& at(int t, int n, int k) {
        return probs[(static_cast<size_t>(t) * N + n) * K + static_cast<size_t>(k)];
    }
    double at(int t, int n, int k) const {
        return probs[(static_cast<size_t>(t) * N + n) * K + static_cast<size_t>(k)];
    }
    void validate() const;
};

struct PredictionSet {
    int N = 0, K = 0;
    std::vector<double> probs;  // N*K
    std::vector<int> labels;

    double& at(int n, int k) { return probs[static_cast<size_t>(n) * K + k]; }
    double at(int n, int k) const { return probs[static_cast<size_t>(n) * K + k]; }
};

// Mean of members 1..prefix_m (all members when prefix_m < 0); fixed member
// order keeps the reduction deterministic.
PredictionSet ensemble_average(const EnsemblePredictions& ens, int prefix_m = -1);

void save_ensemble(const std::string& path, const EnsemblePredictions& ens);
EnsemblePredictions load_ensemble(const std::string& path);
// Plot-ready text export: one row per (t, n) with the probability vector.
void save_ensemble_table(const std::string& path, const EnsemblePredictions& ens);

// Member t is forward(mode=mc_sample, sample_index=t); each member is
// individually reproducible from (master_seed, t).
template <class S>
EnsemblePredictions mc_predict(Model<S>& net, const Tensor<S>& images,
                               const std::vector<int>& labels, int T,
                               const std::string& source_tag = "mc", int batch_size = 250) {
    if (T < 1) throw ConfigError("mc_predict: T must be >= 1");
    const int N = images.dim(0);
    EnsemblePredictions ens;
    ens.T = T;
    ens.N = N;
    ens.labels = labels;
    ens.source = source_tag;
    for (int t = 0; t < T; ++t) ens.member_ids.push_back(t);

    for (int start = 0; start < N; start += batch_size) {
        const int n = std::min(batch_size, N - start);
        std::vector<int> shp = images.shape;
        shp[0] = n;
        Tensor<S> batch(shp);
        const std::int64_t per = images.size() / N;
        std::copy_n(images.data.begin() + start * per, static_cast<std::int64_t>(n) * per,
                    batch.data.begin());
        for (int t = 0; t < T; ++t) {
            Tensor<S> logits = net.forward(batch, Mode::McSample, t,
                                           static_cast<std::uint64_t>(start));
            Tensor<S> p = softmax_rows(logits);
            if (ens.K == 0) {
                ens.K = p.dim(1);
                ens.probs.assign(static_cast<size_t>(T) * N * ens.K, 0.0);
            }
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < ens.K; ++k)
                    ens.at(t, start + i, k) = static_cast<double>(p.at2(i, k));
        }
    }
    return ens;
}

template <class S>
EnsemblePredictions deep_ensemble_predict(const std::vector<Model<S>*>& nets,
                                          const Tensor<S>& images,
                                          const std::vector<int>& labels, int batch_size = 250) {
    if (nets.empty()) throw ConfigError("deep_ensemble_predict: no models");
    if (nets.size() < 2)
        std::fprintf(stderr, "warning: deep ensemble with %zu model(s) has no diversity\n",
                     nets.size());
    const int N = images.dim(0);
    EnsemblePredictions ens;
    ens.T = static_cast<int>(nets.size());
    ens.N = N;
    ens.labels = labels;
    ens.source = "deep_ensemble";
    for (int t = 0; t < ens.T; ++t) ens.member_ids.push_back(t);

    const std::int64_t per = images.size() / N;
    for (int start = 0; start < N; start += batch_size) {
        const int n = std::min(batch_size, N - start);
        std::vector<int> shp = images.shape;
        shp[0] = n;
        Tensor<S> batch(shp);
        std::copy_n(images.data.begin() + start * per, static_cast<std::int64_t>(n) * per,
                    batch.data.begin());
        for (int t = 0; t < ens.T; ++t) {
            Tensor<S> logits = nets[static_cast<size_t>(t)]->forward(batch, Mode::Deterministic);
            Tensor<S> p = softmax_rows(logits);
            if (ens.K == 0) {
                ens.K = p.dim(1);
                ens.probs.assign(static_cast<size_t>(ens.T) * N * ens.K, 0.0);
            }
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < ens.K; ++k)
                    ens.at(t, start + i, k) = static_cast<double>(p.at2(i, k));
        }
    }
    return ens;
}

}  // namespace calidrop
