#include "calidrop/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "calidrop/rng.hpp"

namespace calidrop {

std::string to_string(Acquisition a) {
    switch (a) {
        case Acquisition::MaxEntropy: return "max_entropy";
        case Acquisition::Bald: return "bald";
        case Acquisition::VariationRatio: return "variation_ratio";
        case Acquisition::Random: return "random";
    }
    return "?";
}

Acquisition acquisition_from_string(const std::string& s) {
    if (s == "max_entropy") return Acquisition::MaxEntropy;
    if (s == "bald") return Acquisition::Bald;
    if (s == "variation_ratio") return Acquisition::VariationRatio;
    if (s == "random") return Acquisition::Random;
    throw ConfigError("unknown acquisition function '" + s + "'");
}

namespace {
double entropy_nats(const double* p, int K) {
    double h = 0;
    for (int k = 0; k < K; ++k)
        if (p[k] > 0) h -= p[k] * std::log(p[k]);
    return h;
}
}  // namespace

std::vector<double> max_entropy_scores(const PredictionSet& preds) {
    std::vector<double> scores(static_cast<size_t>(preds.N));
    for (int n = 0; n < preds.N; ++n)
        scores[static_cast<size_t>(n)] =
            entropy_nats(preds.probs.data() + static_cast<size_t>(n) * preds.K, preds.K);
    return scores;
}

std::vector<double> bald_scores(const EnsemblePredictions& ens) {
    std::vector<double> scores(static_cast<size_t>(ens.N), 0.0);
    if (ens.T < 2) {
        std::fprintf(stderr, "warning: BALD with T=%d has no disagreement; scores are zero\n",
                     ens.T);
        return scores;
    }
    std::vector<double> mean(static_cast<size_t>(ens.K));
    for (int n = 0; n < ens.N; ++n) {
        std::fill(mean.begin(), mean.end(), 0.0);
        double avg_h = 0;
        for (int t = 0; t < ens.T; ++t) {
            const double* p = ens.probs.data() + (static_cast<size_t>(t) * ens.N + n) * ens.K;
            for (int k = 0; k < ens.K; ++k) mean[static_cast<size_t>(k)] += p[k];
            avg_h += entropy_nats(p, ens.K);
        }
        for (double& m : mean) m /= ens.T;
        avg_h /= ens.T;
        scores[static_cast<size_t>(n)] = entropy_nats(mean.data(), ens.K) - avg_h;
    }
    return scores;
}

std::vector<double> variation_ratio_scores(const PredictionSet& preds) {
    std::vector<double> scores(static_cast<size_t>(preds.N));
    for (int n = 0; n < preds.N; ++n) {
        double mx = 0;
        for (int k = 0; k < preds.K; ++k) mx = std::max(mx, preds.at(n, k));
        scores[static_cast<size_t>(n)] = 1.0 - mx;
    }
    return scores;
}

void PoolState::check_partition(int dataset_size) const {
    std::set<int> seen;
    for (int i : labeled_indices) {
        if (i < 0 || i >= dataset_size) throw UsageError("pool state: index out of range");
        if (!seen.insert(i).second) throw UsageError("pool state: duplicated labeled index");
    }
    for (int i : pool_indices) {
        if (i < 0 || i >= dataset_size) throw UsageError("pool state: index out of range");
        if (!seen.insert(i).second) throw UsageError("pool state: index in both partitions");
    }
}

PoolState acquire(const PoolState& pool, const std::vector<double>& scores, int k) {
    if (scores.size() != pool.pool_indices.size())
        throw UsageError("acquire: score count must match pool size");
    if (k > static_cast<int>(pool.pool_indices.size()))
        throw ConfigError("acquire: k exceeds pool size");
    // Sort positions by (score desc, dataset index asc).
    std::vector<int> pos(pool.pool_indices.size());
    std::iota(pos.begin(), pos.end(), 0);
    std::sort(pos.begin(), pos.end(), [&](int a, int b) {
        const double sa = scores[static_cast<size_t>(a)], sb = scores[static_cast<size_t>(b)];
        if (sa != sb) return sa > sb;
        return pool.pool_indices[static_cast<size_t>(a)] <
               pool.pool_indices[static_cast<size_t>(b)];
    });
    PoolState next;
    next.round = pool.round + 1;
    next.test_accuracy_history = pool.test_accuracy_history;
    next.labeled_indices = pool.labeled_indices;
    std::set<int> taken;
    for (int i = 0; i < k; ++i) {
        const int ds_idx = pool.pool_indices[static_cast<size_t>(pos[static_cast<size_t>(i)])];
        next.labeled_indices.push_back(ds_idx);
        taken.insert(ds_idx);
    }
    for (int ds_idx : pool.pool_indices)
        if (!taken.count(ds_idx)) next.pool_indices.push_back(ds_idx);
    return next;
}

namespace {

std::vector<double> scores_for(Acquisition acq, const EnsemblePredictions& ens,
                               RngStream& rng) {
    switch (acq) {
        case Acquisition::MaxEntropy: return max_entropy_scores(ensemble_average(ens));
        case Acquisition::Bald: return bald_scores(ens);
        case Acquisition::VariationRatio: return variation_ratio_scores(ensemble_average(ens));
        case Acquisition::Random: {
            std::vector<double> s(static_cast<size_t>(ens.N));
            for (double& v : s) v = rng.uniform();
            return s;
        }
    }
    throw UsageError("unhandled acquisition");
}

}  // namespace

std::vector<ALRoundRow> run_al_loop(const ALConfig& cfg, const ImageDataset& pool_data,
                                    const ImageDataset& test_data, const ModelFactory& factory,
                                    const TrainConfig& train_cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.initial_labeled + cfg.rounds * cfg.acquire_per_round > pool_data.size())
        throw ConfigError("active learning: pool too small for the configured rounds");

    const int num_rounds = cfg.rounds + 1;
    std::vector<std::vector<double>> acc(static_cast<size_t>(num_rounds));

    for (int rep = 0; rep < cfg.repeats; ++rep) {
        const std::uint64_t rep_seed = detail::mix64(seed ^ (0xA1ULL << 56) ^
                                                     static_cast<std::uint64_t>(rep));
        // Random initial labeled subset.
        std::vector<int> all(static_cast<size_t>(pool_data.size()));
        std::iota(all.begin(), all.end(), 0);
        RngStream init_rng(rep_seed, stream_id(stream_purpose::kAcquire, 0, 0));
        for (size_t i = all.size(); i > 1; --i)
            std::swap(all[i - 1], all[static_cast<size_t>(init_rng.uniform_int(i))]);

        PoolState state;
        state.labeled_indices.assign(all.begin(), all.begin() + cfg.initial_labeled);
        state.pool_indices.assign(all.begin() + cfg.initial_labeled, all.end());

        for (int round = 0; round < num_rounds; ++round) {
            state.check_partition(pool_data.size());
            const ImageDataset labeled = select(pool_data, state.labeled_indices);

            auto net = factory(detail::mix64(rep_seed ^ static_cast<std::uint64_t>(round)));
            TrainConfig tc = train_cfg;
            tc.seed = detail::mix64(rep_seed + static_cast<std::uint64_t>(round) * 977);
            fit(*net, labeled, nullptr, tc);  // no validation: last-epoch model

            auto test_ens = mc_predict(*net, test_data.images, test_data.labels, cfg.mc_samples);
            const double test_acc = accuracy(ensemble_average(test_ens));
            acc[static_cast<size_t>(round)].push_back(test_acc);
            state.test_accuracy_history.push_back(test_acc);

            if (round < cfg.rounds) {
                const ImageDataset pool_subset = select(pool_data, state.pool_indices);
                auto pool_ens =
                    mc_predict(*net, pool_subset.images, pool_subset.labels, cfg.mc_samples);
                RngStream acq_rng(rep_seed, stream_id(stream_purpose::kAcquire, 1,
                                                      static_cast<std::uint64_t>(round)));
                const auto scores = scores_for(cfg.acquisition, pool_ens, acq_rng);
                state = acquire(state, scores, cfg.acquire_per_round);
            }
        }
    }

    std::vector<ALRoundRow> rows;
    for (int round = 0; round < num_rounds; ++round) {
        const auto& v = acc[static_cast<size_t>(round)];
        ALRoundRow row;
        row.round = round;
        row.labeled_count = cfg.initial_labeled + round * cfg.acquire_per_round;
        double sum = 0, sq = 0, rel = 0;
        for (size_t r = 0; r < v.size(); ++r) {
            sum += v[r];
            sq += v[r] * v[r];
            const double base = acc[0][r];
            rel += base > 0 ? (v[r] - base) / base : 0.0;
        }
        const double n = static_cast<double>(v.size());
        row.mean_accuracy = sum / n;
        row.std_accuracy = n > 1 ? std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1))) : 0.0;
        row.mean_relative_improvement = rel / n;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace calidrop
