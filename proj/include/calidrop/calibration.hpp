#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "calidrop/ensemble.hpp"

namespace calidrop {

struct ReliabilityBins {
    struct Bin {
        double lo = 0, hi = 0;
        std::int64_t count = 0;
        double mean_confidence = 0;
        double accuracy = 0;
        double weight = 0;
    };
    int num_bins = 20;
    std::vector<Bin> bins;
};

int argmax_class(const PredictionSet& preds, int n);  // ties -> lowest class index
double accuracy(const PredictionSet& preds);
double nll(const PredictionSet& preds);    // probs floored at 1e-12 before log
double brier(const PredictionSet& preds);  // normalized by N*K

// Top-label ECE: confidence = max probability, 20 equal-width bins on [0,1],
// confidence 1.0 assigned to the last bin. ece = sum_b weight_b * |acc_b - conf_b|.
std::pair<double, ReliabilityBins> ece_binned(const PredictionSet& preds, int num_bins = 20);

struct ReliabilityRow {
    double conf_mid = 0;
    double acc_minus_conf = 0;
    double weight = 0;
};
std::vector<ReliabilityRow> reliability_data(const ReliabilityBins& bins);

struct BootstrapResult {
    double mean = 0, stddev = 0, lo = 0, hi = 0;  // lo/hi: 2.5 / 97.5 percentiles
};
BootstrapResult bootstrap_metric(const std::function<double(const PredictionSet&)>& metric,
                                 const PredictionSet& preds, int reps, std::uint64_t seed);

struct CalibrationReport {
    double accuracy = 0, nll = 0, brier = 0, ece = 0;
    BootstrapResult accuracy_ci, nll_ci, brier_ci, ece_ci;
    ReliabilityBins bins;
};

CalibrationReport compute_calibration_report(const PredictionSet& preds, int num_bins = 20,
                                             int bootstrap_reps = 1000, std::uint64_t seed = 0);

// Structured key=value text (Table-1-shaped scales included as extra keys).
std::string calibration_report_text(const CalibrationReport& report);
// Delimited table with header conf_mid,acc_minus_conf,weight.
std::string reliability_table_text(const ReliabilityBins& bins);

}  // namespace calidrop
