#include "calidrop/diversity.hpp"

#include <cmath>

#include "calidrop/calibration.hpp"
#include "calidrop/common.hpp"

namespace calidrop {

BinaryEnsembleView BinaryEnsembleView::from_members(int T, int N, std::vector<double> h,
                                                    std::vector<int> y) {
    if (h.size() != static_cast<size_t>(T) * N || y.size() != static_cast<size_t>(N))
        throw UsageError("binary view: size mismatch");
    BinaryEnsembleView v;
    v.T = T;
    v.N = N;
    v.h = std::move(h);
    v.y = std::move(y);
    v.H.assign(static_cast<size_t>(N), 0.0);
    for (int t = 0; t < T; ++t)
        for (int n = 0; n < N; ++n) v.H[static_cast<size_t>(n)] += v.member(t, n);
    for (double& x : v.H) x /= T;
    return v;
}

BinaryEnsembleView binary_view(const EnsemblePredictions& ens, int positive_class) {
    if (positive_class < 0 || positive_class >= ens.K)
        throw UsageError("binary view: class out of range");
    std::vector<double> h(static_cast<size_t>(ens.T) * ens.N);
    std::vector<int> y(static_cast<size_t>(ens.N));
    for (int t = 0; t < ens.T; ++t)
        for (int n = 0; n < ens.N; ++n)
            h[static_cast<size_t>(t) * ens.N + n] = ens.at(t, n, positive_class);
    for (int n = 0; n < ens.N; ++n)
        y[static_cast<size_t>(n)] = ens.labels[static_cast<size_t>(n)] == positive_class ? 1 : 0;
    return BinaryEnsembleView::from_members(ens.T, ens.N, std::move(h), std::move(y));
}

DecompositionReport decompose_mse(const BinaryEnsembleView& view) {
    if (view.T < 1 || view.N < 1) throw UsageError("decompose_mse: empty view");
    DecompositionReport rep;
    for (int n = 0; n < view.N; ++n) {
        const double y = view.y[static_cast<size_t>(n)];
        const double H = view.H[static_cast<size_t>(n)];
        rep.ensemble_mse += (y - H) * (y - H);
        for (int t = 0; t < view.T; ++t) {
            const double h = view.member(t, n);
            rep.avg_member_mse += (y - h) * (y - h);
            rep.avg_ambiguity += ambiguity(h, H);
        }
    }
    rep.ensemble_mse /= view.N;
    rep.avg_member_mse /= static_cast<double>(view.T) * view.N;
    rep.avg_ambiguity /= static_cast<double>(view.T) * view.N;
    rep.residual = std::abs(rep.ensemble_mse - (rep.avg_member_mse - rep.avg_ambiguity));
    return rep;
}

namespace {

struct BinStats {
    std::vector<int> bin_of;        // per sample
    std::vector<double> cond_mean;  // per bin: mean of conditioning target
    std::vector<double> h_mean;     // per bin: mean of H
    std::vector<std::int64_t> count;
};

// Equal-width bins on H; cond targets are the labels or the generator
// conditionals, averaged per bin.
BinStats bin_conditionals(const BinaryEnsembleView& view, const std::vector<double>* target,
                          int num_bins) {
    BinStats s;
    s.bin_of.resize(static_cast<size_t>(view.N));
    s.cond_mean.assign(static_cast<size_t>(num_bins), 0.0);
    s.h_mean.assign(static_cast<size_t>(num_bins), 0.0);
    s.count.assign(static_cast<size_t>(num_bins), 0);
    for (int n = 0; n < view.N; ++n) {
        const double H = view.H[static_cast<size_t>(n)];
        int b = static_cast<int>(H * num_bins);
        if (b >= num_bins) b = num_bins - 1;
        if (b < 0) b = 0;
        s.bin_of[static_cast<size_t>(n)] = b;
        s.cond_mean[static_cast<size_t>(b)] +=
            target ? (*target)[static_cast<size_t>(n)] : view.y[static_cast<size_t>(n)];
        s.h_mean[static_cast<size_t>(b)] += H;
        ++s.count[static_cast<size_t>(b)];
    }
    for (int b = 0; b < num_bins; ++b)
        if (s.count[static_cast<size_t>(b)] > 0) {
            s.cond_mean[static_cast<size_t>(b)] /=
                static_cast<double>(s.count[static_cast<size_t>(b)]);
            s.h_mean[static_cast<size_t>(b)] /=
                static_cast<double>(s.count[static_cast<size_t>(b)]);
        }
    return s;
}

}  // namespace

double binary_ece(const BinaryEnsembleView& view, const std::vector<double>* true_conditional,
                  int num_bins) {
    if (true_conditional && true_conditional->size() != static_cast<size_t>(view.N))
        throw UsageError("binary_ece: conditional size mismatch");
    const BinStats s = bin_conditionals(view, true_conditional, num_bins);
    double sum = 0;
    for (int n = 0; n < view.N; ++n) {
        const double c = s.cond_mean[static_cast<size_t>(s.bin_of[static_cast<size_t>(n)])];
        const double H = view.H[static_cast<size_t>(n)];
        sum += (c - H) * (c - H);
    }
    return sum / view.N;
}

EceDecompositionReport ece_decomposition(const BinaryEnsembleView& view,
                                         const std::vector<double>* generator_conditional,
                                         int num_bins) {
    EceDecompositionReport rep;
    rep.num_bins = num_bins;

    const DecompositionReport base = decompose_mse(view);
    rep.mse_H = base.ensemble_mse;
    rep.avg_member_mse = base.avg_member_mse;
    rep.avg_ambiguity = base.avg_ambiguity;

    double ybar = 0;
    for (int n = 0; n < view.N; ++n) ybar += view.y[static_cast<size_t>(n)];
    ybar /= view.N;
    rep.label_variance = ybar * (1.0 - ybar);  // sample variance of 0/1 labels

    const BinStats s = bin_conditionals(view, generator_conditional, num_bins);

    double mse_binned = 0, refinement = 0, ece = 0, cmean = 0, csq = 0;
    for (int n = 0; n < view.N; ++n) {
        const int b = s.bin_of[static_cast<size_t>(n)];
        const double c = s.cond_mean[static_cast<size_t>(b)];
        const double hq = s.h_mean[static_cast<size_t>(b)];  // bin-quantized H
        const double y = view.y[static_cast<size_t>(n)];
        mse_binned += (y - hq) * (y - hq);
        refinement += (y - c) * (y - c);
        ece += (c - hq) * (c - hq);
        cmean += c;
        csq += c * c;
    }
    rep.mse_H_binned = mse_binned / view.N;
    rep.refinement = refinement / view.N;
    rep.ece = ece / view.N;
    cmean /= view.N;
    rep.sharpness = std::max(0.0, csq / view.N - cmean * cmean);

    rep.eq_calibration_residual = std::abs(rep.mse_H_binned - (rep.refinement + rep.ece));
    rep.eq_diversity_residual = std::abs(
        rep.ece - (rep.avg_member_mse - rep.avg_ambiguity + rep.sharpness - rep.label_variance));
    return rep;
}

std::vector<int> CorrectnessMatrix::rho() const {
    std::vector<int> r(static_cast<size_t>(n), 0);
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < n; ++k)
            if (is_correct(t, k)) ++r[static_cast<size_t>(k)];
    return r;
}

double CorrectnessMatrix::pbar() const {
    std::int64_t c = 0;
    for (auto v : correct) c += v;
    return static_cast<double>(c) / (static_cast<double>(T) * n);
}

CorrectnessMatrix correctness_matrix(const EnsemblePredictions& ens) {
    CorrectnessMatrix m;
    m.T = ens.T;
    m.n = ens.N;
    m.correct.assign(static_cast<size_t>(ens.T) * ens.N, 0);
    for (int t = 0; t < ens.T; ++t)
        for (int k = 0; k < ens.N; ++k) {
            int best = 0;
            for (int c = 1; c < ens.K; ++c)
                if (ens.at(t, k, c) > ens.at(t, k, best)) best = c;
            m.correct[static_cast<size_t>(t) * ens.N + k] =
                best == ens.labels[static_cast<size_t>(k)] ? 1 : 0;
        }
    return m;
}

std::optional<double> interrater_agreement(const CorrectnessMatrix& m) {
    if (m.T < 2 || m.n < 1) throw UsageError("interrater agreement needs T >= 2 and n >= 1");
    const double pbar = m.pbar();
    if (pbar <= 0.0 || pbar >= 1.0) return std::nullopt;
    double num = 0;
    for (int r : m.rho()) num += static_cast<double>(r) * (m.T - r);
    num /= m.T;
    const double den = static_cast<double>(m.n) * (m.T - 1) * pbar * (1.0 - pbar);
    return 1.0 - num / den;
}

std::vector<SizeCurveRow> ensemble_size_curves(const EnsemblePredictions& ens, int max_m,
                                               int num_bins, int bootstrap_reps,
                                               std::uint64_t seed) {
    if (max_m < 1 || max_m > ens.T) throw UsageError("ensemble_size_curves: m out of range");
    std::vector<SizeCurveRow> rows;
    for (int m = 1; m <= max_m; ++m) {
        const PredictionSet p = ensemble_average(ens, m);
        SizeCurveRow row;
        row.m = m;
        row.accuracy = accuracy(p);
        row.ece = ece_binned(p, num_bins).first;
        if (bootstrap_reps >= 2) {
            row.accuracy_std = bootstrap_metric(accuracy, p, bootstrap_reps, seed).stddev;
            const int nb = num_bins;
            row.ece_std = bootstrap_metric(
                              [nb](const PredictionSet& q) { return ece_binned(q, nb).first; },
                              p, bootstrap_reps, seed)
                              .stddev;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace calidrop
