#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "calidrop/common.hpp"
#include "calidrop/rng.hpp"
#include "calidrop/tensor.hpp"

namespace calidrop {

enum class DropoutVariant { None, Element, Block, Channel, Layer };

inline std::string to_string(DropoutVariant v) {
    switch (v) {
        case DropoutVariant::None: return "none";
        case DropoutVariant::Element: return "element";
        case DropoutVariant::Block: return "block";
        case DropoutVariant::Channel: return "channel";
        case DropoutVariant::Layer: return "layer";
    }
    return "?";
}

inline DropoutVariant dropout_variant_from_string(const std::string& s) {
    if (s == "none") return DropoutVariant::None;
    if (s == "element") return DropoutVariant::Element;
    if (s == "block") return DropoutVariant::Block;
    if (s == "channel") return DropoutVariant::Channel;
    if (s == "layer") return DropoutVariant::Layer;
    throw ConfigError("unknown dropout variant '" + s + "'");
}

struct DropoutSpec {
    DropoutVariant variant = DropoutVariant::None;
    double rate = 0.0;   // p in [0,1)
    int block_size = 3;  // block variant only; odd, >= 1

    void validate() const {
        if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
        if (variant == DropoutVariant::Block) {
            if (block_size < 1 || block_size % 2 == 0)
                throw ConfigError("block_size must be odd and >= 1");
        }
    }
};

// Binary keep pattern with inverted-dropout scale 1/(1-p). The shape is either
// the full masked-tensor shape or a broadcast prefix of it: a (N, C) mask
// broadcasts over the spatial dims of a (N, C, H, W) tensor.
template <class S>
struct Mask {
    std::vector<int> shape;
    std::vector<std::uint8_t> keep;
    S scale = S(1);

    std::int64_t size() const { return static_cast<std::int64_t>(keep.size()); }
    double kept_fraction() const {
        if (keep.empty()) return 1.0;
        std::int64_t k = 0;
        for (auto v : keep) k += v;
        return static_cast<double>(k) / static_cast<double>(keep.size());
    }
};

template <class S>
Mask<S> sample_element_mask(const std::vector<int>& shape, double p, RngStream& rng) {
    Mask<S> m;
    m.shape = shape;
    m.keep.resize(static_cast<size_t>(Tensor<S>::numel(shape)));
    m.scale = static_cast<S>(1.0 / (1.0 - p));
    for (auto& k : m.keep) k = rng.bernoulli(p) ? 0 : 1;
    return m;
}

// One Bernoulli draw per (sample, channel), broadcast over spatial dims.
template <class S>
Mask<S> sample_channel_mask(int batch, int num_channels, double p, RngStream& rng) {
    if (num_channels < 1) throw ConfigError("channel mask needs >= 1 channel");
    Mask<S> m;
    m.shape = {batch, num_channels};
    m.keep.resize(static_cast<size_t>(batch) * num_channels);
    m.scale = static_cast<S>(1.0 / (1.0 - p));
    for (auto& k : m.keep) k = rng.bernoulli(p) ? 0 : 1;
    return m;
}

// Seed rate matching the target drop rate p for block_size b on an f_h x f_w map:
//   gamma = p / b^2 * f^2 / (f - b + 1)^2
inline double dropblock_gamma(double p, int block_size, int fh, int fw) {
    const double b2 = static_cast<double>(block_size) * block_size;
    const double area = static_cast<double>(fh) * fw;
    const double valid = static_cast<double>(fh - block_size + 1) * (fw - block_size + 1);
    return p / b2 * area / valid;
}

// Spatial block dropout per (sample, channel): seeds at rate gamma anywhere on
// the map, each zeroing a centered block_size x block_size patch clipped at the
// borders.
template <class S>
Mask<S> sample_block_mask(const std::vector<int>& feature_shape, double p, int block_size,
                          RngStream& rng) {
    const int N = feature_shape[0], C = feature_shape[1];
    const int H = feature_shape[2], W = feature_shape[3];
    if (block_size > H || block_size > W)
        throw ConfigError("block_size " + std::to_string(block_size) +
                          " exceeds feature map " + std::to_string(H) + "x" + std::to_string(W));
    Mask<S> m;
    m.shape = feature_shape;
    m.keep.assign(static_cast<size_t>(N) * C * H * W, 1);
    m.scale = static_cast<S>(1.0 / (1.0 - p));
    if (p <= 0.0) return m;
    const double gamma = dropblock_gamma(p, block_size, H, W);
    const int r = block_size / 2;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            std::uint8_t* plane = m.keep.data() + (static_cast<size_t>(n) * C + c) * H * W;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    if (!rng.bernoulli(gamma)) continue;
                    const int y0 = std::max(0, y - r), y1 = std::min(H - 1, y + r);
                    const int x0 = std::max(0, x - r), x1 = std::min(W - 1, x + r);
                    for (int yy = y0; yy <= y1; ++yy)
                        for (int xx = x0; xx <= x1; ++xx) plane[yy * W + xx] = 0;
                }
        }
    return m;
}

enum class GateMode { Train, McTest };

// One keep/drop gate per residual block, drawn once per forward pass and shared
// across the batch. Downsampling blocks are never dropped in mc_test mode.
inline std::vector<std::uint8_t> sample_layer_gates(int num_blocks, double p,
                                                    const std::vector<bool>& is_downsampling,
                                                    GateMode mode, RngStream& rng) {
    if (num_blocks < 1) throw ConfigError("layer gates need >= 1 block");
    std::vector<std::uint8_t> gates(static_cast<size_t>(num_blocks), 1);
    for (int i = 0; i < num_blocks; ++i) {
        const bool dropped = rng.bernoulli(p);
        if (mode == GateMode::McTest && is_downsampling[static_cast<size_t>(i)]) continue;
        gates[static_cast<size_t>(i)] = dropped ? 0 : 1;
    }
    return gates;
}

template <class S>
Tensor<S> apply_mask(const Tensor<S>& t, const Mask<S>& m) {
    Tensor<S> out(t.shape);
    if (m.shape == t.shape) {
        for (std::int64_t i = 0; i < t.size(); ++i)
            out[i] = m.keep[static_cast<size_t>(i)] ? t[i] * m.scale : S(0);
        return out;
    }
    // (N, C) mask over (N, C, H, W) tensor
    if (t.ndim() == 4 && m.shape.size() == 2 && m.shape[0] == t.dim(0) && m.shape[1] == t.dim(1)) {
        const std::int64_t plane = static_cast<std::int64_t>(t.dim(2)) * t.dim(3);
        for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(t.dim(0)) * t.dim(1); ++nc) {
            const S f = m.keep[static_cast<size_t>(nc)] ? m.scale : S(0);
            for (std::int64_t i = 0; i < plane; ++i) out[nc * plane + i] = t[nc * plane + i] * f;
        }
        return out;
    }
    throw ConfigError("mask shape not broadcastable to tensor shape " + t.shape_str());
}

}  // namespace calidrop
