#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calidrop/config.hpp"
#include "calidrop/datasets.hpp"

namespace calidrop {

struct CommandOptions {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    std::string profile;  // "", "mini", "paper"

    std::vector<std::string> checkpoint_paths;  // >1 selects deep-ensemble mode
    std::string ensemble_path;                  // precomputed input for `diversity`
    std::vector<double> sweep_rates{0.05, 0.1, 0.2, 0.3};
};

// Writes content to a temp file in the target directory and renames it into
// place, so readers never observe a partially written report.
void atomic_write_text(const std::string& path, const std::string& content);
void atomic_write_file(const std::string& path, const std::vector<char>& bytes);

RunConfig resolve_config(const CommandOptions& opt);

struct DataSplits {
    ImageDataset train, val, test;
};
// Loads the configured CIFAR-layout file (or directory of batch files),
// splits it train/val/test and subtracts the train-split per-pixel mean.
DataSplits load_splits(const RunConfig& cfg);

int cmd_train(const CommandOptions& opt);
int cmd_mc_eval(const CommandOptions& opt);
int cmd_diversity(const CommandOptions& opt);
int cmd_sweep(const CommandOptions& opt);
int cmd_active_learn(const CommandOptions& opt);

}  // namespace calidrop
