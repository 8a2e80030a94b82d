#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "calidrop/datasets.hpp"
#include "calidrop/ensemble.hpp"
#include "calidrop/train.hpp"

namespace calidrop {

enum class Acquisition { MaxEntropy, Bald, VariationRatio, Random };

std::string to_string(Acquisition a);
Acquisition acquisition_from_string(const std::string& s);

// Predictive entropy -sum_c p log p (natural log, 0 log 0 = 0).
std::vector<double> max_entropy_scores(const PredictionSet& preds);
// MC estimate of the label/weights mutual information:
// H[mean_t p_t] - mean_t H[p_t]. Zero vector with a warning when T = 1.
std::vector<double> bald_scores(const EnsemblePredictions& ens);
// 1 - max_c p.
std::vector<double> variation_ratio_scores(const PredictionSet& preds);

struct PoolState {
    std::vector<int> labeled_indices;
    std::vector<int> pool_indices;
    int round = 0;
    std::vector<double> test_accuracy_history;

    void check_partition(int dataset_size) const;
};

// Moves the top-k scoring pool indices to the labeled set; ties broken by
// lower dataset index.
PoolState acquire(const PoolState& pool, const std::vector<double>& scores, int k);

struct ALConfig {
    int initial_labeled = 500;
    int acquire_per_round = 250;
    int rounds = 4;
    int repeats = 3;
    int mc_samples = 10;
    Acquisition acquisition = Acquisition::MaxEntropy;

    void validate() const {
        if (initial_labeled < 1 || acquire_per_round < 1 || rounds < 0 || repeats < 1 ||
            mc_samples < 1)
            throw ConfigError("active learning config values must be positive");
    }
};

struct ALRoundRow {
    int round = 0;
    int labeled_count = 0;
    double mean_accuracy = 0;
    double std_accuracy = 0;
    double mean_relative_improvement = 0;  // over the first round, per repeat
};

using ModelFactory = std::function<std::unique_ptr<Model<float>>(std::uint64_t seed)>;

// Pool-based loop: round 0 trains on a random initial subset; each later
// round scores the remaining pool under MC inference, acquires top-k,
// retrains from scratch, and records last-epoch test accuracy. Repeats run
// with distinct derived seeds; rows aggregate mean/std across repeats.
std::vector<ALRoundRow> run_al_loop(const ALConfig& cfg, const ImageDataset& pool_data,
                                    const ImageDataset& test_data, const ModelFactory& factory,
                                    const TrainConfig& train_cfg, std::uint64_t seed);

}  // namespace calidrop
