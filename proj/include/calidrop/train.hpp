#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "calidrop/calibration.hpp"
#include "calidrop/checkpoint.hpp"
#include "calidrop/datasets.hpp"
#include "calidrop/ensemble.hpp"
#include "calidrop/model.hpp"
#include "calidrop/resnet.hpp"

namespace calidrop {

struct TrainConfig {
    int epochs = 60;
    int batch_size = 128;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<int> lr_drop_epochs{30, 45};
    double lr_drop_factor = 10.0;
    std::uint64_t seed = 0;
    bool augment = true;

    void validate() const {
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (lr_drop_factor <= 0) throw ConfigError("lr_drop_factor must be positive");
        for (size_t i = 0; i < lr_drop_epochs.size(); ++i) {
            if (lr_drop_epochs[i] >= epochs && epochs > 0)
                throw ConfigError("lr_drop_epochs must be < epochs");
            if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
                throw ConfigError("lr_drop_epochs must be strictly increasing");
        }
    }
};

// Right-continuous step schedule: lr divided by the factor at each drop epoch.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    double lr = cfg.lr;
    for (int drop : cfg.lr_drop_epochs)
        if (epoch >= drop) lr /= cfg.lr_drop_factor;
    return lr;
}

struct EpochStats {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double train_accuracy = 0;
    double val_accuracy = 0;  // NaN when no validation split
    double val_nll = 0;
};

template <class S>
struct FitResult {
    std::vector<EpochStats> curve;
    int selected_epoch = -1;  // argmax validation accuracy; last epoch without val
    std::vector<Tensor<S>> best_values;
};

// Pad-4 random crop plus horizontal flip with probability 0.5. The padding
// value is 0, i.e. the dataset mean in raw space once mean subtraction ran.
template <class S>
void augment_image(const S* src, S* dst, int C, int H, int W, RngStream& rng) {
    const int pad = 4;
    const int dy = static_cast<int>(rng.uniform_int(2 * pad + 1)) - pad;
    const int dx = static_cast<int>(rng.uniform_int(2 * pad + 1)) - pad;
    const bool flip = rng.bernoulli(0.5);
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const int sh = h + dy;
                const int sw = (flip ? W - 1 - w : w) + dx;
                dst[(c * H + h) * W + w] =
                    (sh >= 0 && sh < H && sw >= 0 && sw < W)
                        ? src[(c * H + sh) * W + sw]
                        : S(0);
            }
}

template <class S>
std::pair<double, double> evaluate_deterministic(Model<S>& net, const ImageDataset& ds,
                                                 int batch_size = 250) {
    // returns (accuracy, nll)
    if (ds.size() == 0) return {0.0, 0.0};
    std::int64_t correct = 0;
    double nll_sum = 0;
    const std::int64_t per = ds.images.size() / ds.size();
    for (int start = 0; start < ds.size(); start += batch_size) {
        const int n = std::min(batch_size, ds.size() - start);
        std::vector<int> shp = ds.images.shape;
        shp[0] = n;
        Tensor<S> batch(shp);
        for (int i = 0; i < n; ++i)
            for (std::int64_t b = 0; b < per; ++b)
                batch.data[static_cast<size_t>(i * per + b)] = static_cast<S>(
                    ds.images.data[static_cast<size_t>((start + i) * per + b)]);
        Tensor<S> p = softmax_rows(net.forward(batch, Mode::Deterministic));
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int k = 1; k < p.dim(1); ++k)
                if (p.at2(i, k) > p.at2(i, best)) best = k;
            const int y = ds.labels[static_cast<size_t>(start + i)];
            if (best == y) ++correct;
            nll_sum -= std::log(std::max(static_cast<double>(p.at2(i, y)), 1e-12));
        }
    }
    return {static_cast<double>(correct) / ds.size(), nll_sum / ds.size()};
}

// SGD training loop: deterministic per seed, step-decay schedule, best epoch
// selected by validation accuracy (last epoch when validation is absent).
template <class S>
FitResult<S> fit(Model<S>& net, const ImageDataset& train, const ImageDataset* val,
                 const TrainConfig& cfg) {
    cfg.validate();
    FitResult<S> result;
    const int n_train = train.size();
    if (n_train == 0 && cfg.epochs > 0) throw DataError("fit: empty training split");

    result.best_values = snapshot_values(net);
    result.selected_epoch = -1;
    double best_val_acc = -1.0;

    const bool is_image = train.images.ndim() == 4 && train.images.dim(2) >= 8;
    const std::int64_t per = n_train ? train.images.size() / n_train : 0;
    const int C = train.images.ndim() == 4 ? train.images.dim(1) : 0;
    const int H = train.images.ndim() == 4 ? train.images.dim(2) : 0;
    const int W = train.images.ndim() == 4 ? train.images.dim(3) : 0;

    auto params = net.params();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);

        std::vector<int> order(static_cast<size_t>(n_train));
        for (int i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
        RngStream shuffle_rng(cfg.seed, stream_id(stream_purpose::kShuffle, 1,
                                                  static_cast<std::uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(i))]);

        double loss_sum = 0;
        std::int64_t correct = 0;
        int steps = 0;
        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int n = std::min(cfg.batch_size, n_train - start);
            std::vector<int> shp = train.images.shape;
            shp[0] = n;
            Tensor<S> batch(shp);
            std::vector<int> labels(static_cast<size_t>(n));
            RngStream aug_rng(cfg.seed,
                              stream_id(stream_purpose::kAugment,
                                        static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(start)));
            for (int i = 0; i < n; ++i) {
                const int src_idx = order[static_cast<size_t>(start + i)];
                labels[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(src_idx)];
                const float* src = train.images.data.data() + src_idx * per;
                S* dst = batch.data.data() + static_cast<std::int64_t>(i) * per;
                if (cfg.augment && is_image) {
                    std::vector<S> tmp(static_cast<size_t>(per));
                    for (std::int64_t b = 0; b < per; ++b)
                        tmp[static_cast<size_t>(b)] = static_cast<S>(src[b]);
                    augment_image(tmp.data(), dst, C, H, W, aug_rng);
                } else {
                    for (std::int64_t b = 0; b < per; ++b) dst[b] = static_cast<S>(src[b]);
                }
            }

            net.zero_grad();
            Tensor<S> logits = net.forward(batch, Mode::Train);
            auto [loss, grad] = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(static_cast<double>(loss)))
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(steps));
            net.backward(grad);
            sgd_step(params, static_cast<S>(lr), static_cast<S>(cfg.momentum),
                     static_cast<S>(cfg.weight_decay));

            loss_sum += static_cast<double>(loss);
            ++steps;
            for (int i = 0; i < n; ++i) {
                int best = 0;
                for (int k = 1; k < logits.dim(1); ++k)
                    if (logits.at2(i, k) > logits.at2(i, best)) best = k;
                if (best == labels[static_cast<size_t>(i)]) ++correct;
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.train_loss = steps ? loss_sum / steps : 0.0;
        st.train_accuracy = n_train ? static_cast<double>(correct) / n_train : 0.0;
        if (val && val->size() > 0) {
            auto [acc, vnll] = evaluate_deterministic(net, *val);
            st.val_accuracy = acc;
            st.val_nll = vnll;
            if (acc > best_val_acc) {
                best_val_acc = acc;
                result.selected_epoch = epoch;
                result.best_values = snapshot_values(net);
            }
        } else {
            st.val_accuracy = std::numeric_limits<double>::quiet_NaN();
            st.val_nll = std::numeric_limits<double>::quiet_NaN();
            result.selected_epoch = epoch;
            result.best_values = snapshot_values(net);
        }
        result.curve.push_back(st);
    }

    restore_values(net, result.best_values);
    return result;
}

// ---------------------------------------------------------------------------
// Dropout-rate grid search: one model per rate, selection by validation NLL
// under MC inference.

struct SweepRow {
    double rate = 0;
    double val_nll = 0;
    double val_accuracy = 0;
    bool failed = false;
    std::string error;
};

struct SweepResult {
    double best_rate = 0;
    std::vector<SweepRow> rows;
};

inline SweepResult grid_search_dropout_rate(const ResNetConfig& base_model,
                                            const TrainConfig& base_train,
                                            std::vector<double> rates,
                                            const ImageDataset& train, const ImageDataset& val,
                                            int mc_samples, std::uint64_t seed) {
    if (rates.empty()) throw ConfigError("grid search: empty rate list");
    std::sort(rates.begin(), rates.end());
    rates.erase(std::unique(rates.begin(), rates.end()), rates.end());

    SweepResult result;
    double best_nll = std::numeric_limits<double>::infinity();
    for (double rate : rates) {
        SweepRow row;
        row.rate = rate;
        try {
            ResNetConfig mc = base_model;
            mc.dropout.rate = rate;
            TrainConfig tc = base_train;
            ResNet<float> net(mc, seed);
            fit(net, train, &val, tc);
            auto ens = mc_predict(net, val.images, val.labels, mc_samples,
                                  "mc_" + to_string(mc.dropout.variant));
            const PredictionSet avg = ensemble_average(ens);
            row.val_nll = nll(avg);
            row.val_accuracy = accuracy(avg);
            if (row.val_nll < best_nll) {
                best_nll = row.val_nll;
                result.best_rate = rate;
            }
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        result.rows.push_back(row);
    }
    if (!std::isfinite(best_nll)) throw NumericError("grid search: every cell failed");
    return result;
}

}  // namespace calidrop
