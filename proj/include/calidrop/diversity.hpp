#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "calidrop/ensemble.hpp"

namespace calidrop {

// Binary reduction of an ensemble: member probabilities of the positive class
// and binary labels. H is the stored member mean.
struct BinaryEnsembleView {
    int T = 0, N = 0;
    std::vector<double> h;  // T*N member probabilities of class 1
    std::vector<int> y;     // N binary labels
    std::vector<double> H;  // N member means

    double member(int t, int n) const { return h[static_cast<size_t>(t) * N + n]; }

    static BinaryEnsembleView from_members(int T, int N, std::vector<double> h,
                                           std::vector<int> y);
};

// One-vs-rest view of a multiclass ensemble on a chosen class.
BinaryEnsembleView binary_view(const EnsemblePredictions& ens, int positive_class);

// Squared deviation of one member prediction from the ensemble mean.
inline double ambiguity(double h_t, double H) { return (h_t - H) * (h_t - H); }

// Error-ambiguity decomposition: MSE(H) = avg member MSE - avg ambiguity,
// an exact algebraic identity per sample.
struct DecompositionReport {
    double ensemble_mse = 0;
    double avg_member_mse = 0;
    double avg_ambiguity = 0;
    double residual = 0;  // |ensemble_mse - (avg_member_mse - avg_ambiguity)|
};
DecompositionReport decompose_mse(const BinaryEnsembleView& view);

// Estimate of E_x[(E[y|H(x)] - H(x))^2]. The conditional is estimated by
// equal-width binning of H (bin means of the labels), or of the supplied true
// conditionals when available.
double binary_ece(const BinaryEnsembleView& view,
                  const std::vector<double>* true_conditional = nullptr, int num_bins = 20);

// Calibration-refinement and diversity decompositions of the binary MSE.
// The bin-empirical branch quantizes H to its bin means, which makes
//   MSE(H_binned) = refinement + ece
// a finite-sample identity; the generator branch substitutes the known
// conditionals and verifies
//   ece = avg member MSE - avg ambiguity + Var_x[E[y|H]] - Var_x[y]
// to statistical tolerance.
struct EceDecompositionReport {
    int num_bins = 20;
    double mse_H = 0;         // mean squared error of the raw ensemble mean
    double mse_H_binned = 0;  // with H quantized to bin means
    double ece = 0;
    double refinement = 0;       // E[(y - E[y|H])^2]
    double sharpness = 0;        // Var_x[E[y|H]]
    double label_variance = 0;   // Var_x[y]
    double avg_member_mse = 0;
    double avg_ambiguity = 0;
    double eq_calibration_residual = 0;  // |mse_H_binned - (refinement + ece)|
    double eq_diversity_residual = 0;    // |ece - (avgMSE - avgAmb + sharpness - labelVar)|
};
EceDecompositionReport ece_decomposition(const BinaryEnsembleView& view,
                                         const std::vector<double>* generator_conditional,
                                         int num_bins = 20);

// T x n member-correctness matrix for the interrater agreement statistic.
struct CorrectnessMatrix {
    int T = 0, n = 0;
    std::vector<std::uint8_t> correct;  // T*n

    bool is_correct(int t, int k) const { return correct[static_cast<size_t>(t) * n + k] != 0; }
    std::vector<int> rho() const;  // per-sample count of correct members
    double pbar() const;           // mean member accuracy
};
CorrectnessMatrix correctness_matrix(const EnsemblePredictions& ens);

// kappa = 1 - [ (1/T) sum_k rho(T - rho) ] / [ n (T-1) pbar (1 - pbar) ].
// Undefined (nullopt) when pbar is 0 or 1.
std::optional<double> interrater_agreement(const CorrectnessMatrix& m);

struct SizeCurveRow {
    int m = 0;
    double accuracy = 0, accuracy_std = 0;
    double ece = 0, ece_std = 0;
};
std::vector<SizeCurveRow> ensemble_size_curves(const EnsemblePredictions& ens, int max_m,
                                               int num_bins = 20, int bootstrap_reps = 200,
                                               std::uint64_t seed = 0);

}  // namespace calidrop
