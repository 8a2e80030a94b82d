#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calidrop/active_learning.hpp"
#include "calidrop/resnet.hpp"
#include "calidrop/train.hpp"

namespace calidrop {

struct DatasetConfig {
    std::string kind = "cifar10";
    std::string path;
    int train_size = 10000;
    int val_size = 2000;
    int test_size = 2000;
    bool stratified = true;
};

struct EvalConfig {
    int mc_samples = 30;
    int num_bins = 20;
    int bootstrap_reps = 1000;
    int positive_class = 0;
};

// Flat sectioned key=value run configuration. Unknown sections or keys are
// rejected; every command echoes the resolved config next to its outputs so a
// run directory can be reproduced from itself.
struct RunConfig {
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    ResNetConfig model;  // model.dropout comes from the [dropout] section
    TrainConfig train;
    EvalConfig eval;
    ALConfig al;
    std::vector<std::string> al_acquisitions{"max_entropy", "bald", "variation_ratio"};

    void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

// "mini" keeps the desk-scale defaults; "paper" switches dataset sizes,
// schedule length and the active-learning protocol to the full-scale values.
void apply_profile(RunConfig& cfg, const std::string& profile);

}  // namespace calidrop
