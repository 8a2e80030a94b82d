#include "calidrop/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "calidrop/common.hpp"
#include "calidrop/rng.hpp"

namespace calidrop {

int argmax_class(const PredictionSet& preds, int n) {
    int best = 0;
    for (int k = 1; k < preds.K; ++k)
        if (preds.at(n, k) > preds.at(n, best)) best = k;
    return best;
}

double accuracy(const PredictionSet& preds) {
    if (preds.N == 0) return 0.0;
    std::int64_t correct = 0;
    for (int n = 0; n < preds.N; ++n)
        if (argmax_class(preds, n) == preds.labels[static_cast<size_t>(n)]) ++correct;
    return static_cast<double>(correct) / preds.N;
}

double nll(const PredictionSet& preds) {
    if (preds.N == 0) return 0.0;
    double sum = 0;
    for (int n = 0; n < preds.N; ++n) {
        const double p = std::max(preds.at(n, preds.labels[static_cast<size_t>(n)]), 1e-12);
        sum -= std::log(p);
    }
    return sum / preds.N;
}

double brier(const PredictionSet& preds) {
    if (preds.N == 0) return 0.0;
    double sum = 0;
    for (int n = 0; n < preds.N; ++n) {
        const int y = preds.labels[static_cast<size_t>(n)];
        for (int k = 0; k < preds.K; ++k) {
            const double d = preds.at(n, k) - (k == y ? 1.0 : 0.0);
            sum += d * d;
        }
    }
    return sum / (static_cast<double>(preds.N) * preds.K);
}

std::pair<double, ReliabilityBins> ece_binned(const PredictionSet& preds, int num_bins) {
    if (num_bins < 1) throw ConfigError("ece_binned: num_bins must be >= 1");
    ReliabilityBins rb;
    rb.num_bins = num_bins;
    rb.bins.resize(static_cast<size_t>(num_bins));
    for (int b = 0; b < num_bins; ++b) {
        rb.bins[static_cast<size_t>(b)].lo = static_cast<double>(b) / num_bins;
        rb.bins[static_cast<size_t>(b)].hi = static_cast<double>(b + 1) / num_bins;
    }
    for (int n = 0; n < preds.N; ++n) {
        const int cls = argmax_class(preds, n);
        const double conf = preds.at(n, cls);
        int b = static_cast<int>(conf * num_bins);
        if (b >= num_bins) b = num_bins - 1;  // conf == 1.0
        auto& bin = rb.bins[static_cast<size_t>(b)];
        ++bin.count;
        bin.mean_confidence += conf;
        bin.accuracy += cls == preds.labels[static_cast<size_t>(n)] ? 1.0 : 0.0;
    }
    double ece = 0;
    for (auto& bin : rb.bins) {
        if (bin.count == 0) continue;
        bin.mean_confidence /= static_cast<double>(bin.count);
        bin.accuracy /= static_cast<double>(bin.count);
        bin.weight = static_cast<double>(bin.count) / std::max(preds.N, 1);
        ece += bin.weight * std::abs(bin.accuracy - bin.mean_confidence);
    }
    return {ece, rb};
}

std::vector<ReliabilityRow> reliability_data(const ReliabilityBins& bins) {
    std::vector<ReliabilityRow> rows;
    for (const auto& bin : bins.bins) {
        if (bin.count == 0) continue;
        rows.push_back({(bin.lo + bin.hi) / 2, bin.accuracy - bin.mean_confidence, bin.weight});
    }
    return rows;
}

BootstrapResult bootstrap_metric(const std::function<double(const PredictionSet&)>& metric,
                                 const PredictionSet& preds, int reps, std::uint64_t seed) {
    if (reps < 2) throw ConfigError("bootstrap: reps must be >= 2");
    std::vector<double> values(static_cast<size_t>(reps));
    PredictionSet resampled;
    resampled.N = preds.N;
    resampled.K = preds.K;
    resampled.probs.resize(preds.probs.size());
    resampled.labels.resize(preds.labels.size());
    for (int r = 0; r < reps; ++r) {
        RngStream rng(seed, stream_id(stream_purpose::kBootstrap, 0,
                                      static_cast<std::uint64_t>(r)));
        for (int n = 0; n < preds.N; ++n) {
            const int src = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(preds.N)));
            std::copy_n(preds.probs.begin() + static_cast<size_t>(src) * preds.K, preds.K,
                        resampled.probs.begin() + static_cast<size_t>(n) * preds.K);
            resampled.labels[static_cast<size_t>(n)] = preds.labels[static_cast<size_t>(src)];
        }
        values[static_cast<size_t>(r)] = metric(resampled);
    }
    BootstrapResult res;
    double sum = 0, sq = 0;
    for (double v : values) {
        sum += v;
        sq += v * v;
    }
    res.mean = sum / reps;
    const double var = std::max(0.0, sq / reps - res.mean * res.mean);
    res.stddev = std::sqrt(var * reps / (reps - 1));
    std::sort(values.begin(), values.end());
    auto pct = [&](double q) {
        const double pos = q * (reps - 1);
        const auto i = static_cast<size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        return i + 1 < values.size() ? values[i] * (1 - frac) + values[i + 1] * frac : values[i];
    };
    res.lo = pct(0.025);
    res.hi = pct(0.975);
    return res;
}

CalibrationReport compute_calibration_report(const PredictionSet& preds, int num_bins,
                                             int bootstrap_reps, std::uint64_t seed) {
    CalibrationReport rep;
    rep.accuracy = accuracy(preds);
    rep.nll = nll(preds);
    rep.brier = brier(preds);
    auto [ece, bins] = ece_binned(preds, num_bins);
    rep.ece = ece;
    rep.bins = std::move(bins);
    const int nb = num_bins;
    rep.accuracy_ci = bootstrap_metric(accuracy, preds, bootstrap_reps, seed);
    rep.nll_ci = bootstrap_metric(nll, preds, bootstrap_reps, seed);
    rep.brier_ci = bootstrap_metric(brier, preds, bootstrap_reps, seed);
    rep.ece_ci = bootstrap_metric(
        [nb](const PredictionSet& p) { return ece_binned(p, nb).first; }, preds, bootstrap_reps,
        seed);
    return rep;
}

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}
}  // namespace

std::string calibration_report_text(const CalibrationReport& r) {
    std::ostringstream os;
    auto line = [&](const std::string& key, double v, const BootstrapResult& ci) {
        os << key << "=" << fmt(v) << "\n";
        os << key << "_boot_mean=" << fmt(ci.mean) << "\n";
        os << key << "_boot_std=" << fmt(ci.stddev) << "\n";
        os << key << "_ci_lo=" << fmt(ci.lo) << "\n";
        os << key << "_ci_hi=" << fmt(ci.hi) << "\n";
    };
    line("accuracy", r.accuracy, r.accuracy_ci);
    line("nll", r.nll, r.nll_ci);
    line("brier", r.brier, r.brier_ci);
    line("ece", r.ece, r.ece_ci);
    os << "brier_x1e3=" << fmt(r.brier * 1e3) << "\n";
    os << "ece_x1e2=" << fmt(r.ece * 1e2) << "\n";
    os << "num_bins=" << r.bins.num_bins << "\n";
    return os.str();
}

std::string reliability_table_text(const ReliabilityBins& bins) {
    std::ostringstream os;
    os << "conf_mid,acc_minus_conf,weight\n";
    for (const auto& row : reliability_data(bins))
        os << fmt(row.conf_mid) << "," << fmt(row.acc_minus_conf) << "," << fmt(row.weight)
           << "\n";
    return os.str();
}

}  // namespace calidrop
