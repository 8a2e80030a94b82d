#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "calidrop/model.hpp"
#include "calidrop/rng.hpp"

namespace calidrop {

// Compares analytic gradients of the mean cross-entropy loss against central
// finite differences over a random subsample of parameters. Masks are frozen
// by pinning the train-mode sample_index, so the network is deterministic
// across the perturbed evaluations. Meant for the 64-bit instantiation.
template <class S>
double gradient_check(Model<S>& net, const Tensor<S>& batch, const std::vector<int>& labels,
                      double epsilon, int sampled_params, std::uint64_t seed) {
    constexpr long kFrozenIndex = 0x5eed;

    auto loss_of = [&]() {
        Tensor<S> logits = net.forward(batch, Mode::Train, kFrozenIndex);
        return static_cast<double>(softmax_cross_entropy(logits, labels).first);
    };

    net.zero_grad();
    Tensor<S> logits = net.forward(batch, Mode::Train, kFrozenIndex);
    auto [loss, grad_logits] = softmax_cross_entropy(logits, labels);
    (void)loss;
    net.backward(grad_logits);

    std::vector<Param<S>*> params = net.params();
    std::vector<std::pair<Param<S>*, std::int64_t>> coords;
    for (Param<S>* p : params) {
        if (!p->trainable) continue;
        for (std::int64_t i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
    }
    RngStream rng(seed, stream_id(stream_purpose::kShuffle, 0, 0));
    const int n = std::min<std::int64_t>(sampled_params, static_cast<std::int64_t>(coords.size()));
    // Partial Fisher-Yates: the first n entries become the sample.
    for (int i = 0; i < n; ++i) {
        const auto j = i + rng.uniform_int(coords.size() - static_cast<std::uint64_t>(i));
        std::swap(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
    }

    double max_rel = 0.0;
    for (int i = 0; i < n; ++i) {
        auto [p, idx] = coords[static_cast<size_t>(i)];
        const S saved = p->value[idx];
        p->value[idx] = saved + static_cast<S>(epsilon);
        const double lp = loss_of();
        p->value[idx] = saved - static_cast<S>(epsilon);
        const double lm = loss_of();
        p->value[idx] = saved;
        const double fd = (lp - lm) / (2.0 * epsilon);
        const double an = static_cast<double>(p->grad[idx]);
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace calidrop
