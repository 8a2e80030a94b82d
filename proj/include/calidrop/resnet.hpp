#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "calidrop/dropout.hpp"
#include "calidrop/model.hpp"

namespace calidrop {

struct ResNetConfig {
    std::vector<int> stage_channels{16, 32, 64};
    int blocks_per_stage = 2;
    int num_classes = 10;
    int in_channels = 3;
    int in_height = 32;
    int in_width = 32;
    DropoutSpec dropout;
    double final_fc_dropout_rate = 0.1;
    double bn_momentum = 0.1;

    void validate() const {
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
        if (stage_channels.empty()) throw ConfigError("stage_channels must be non-empty");
        for (int c : stage_channels)
            if (c < 1) throw ConfigError("stage channel count must be >= 1");
        dropout.validate();
        if (final_fc_dropout_rate < 0.0 || final_fc_dropout_rate >= 1.0)
            throw ConfigError("final_fc_dropout_rate must be in [0,1)");
    }

    std::string canonical() const {
        std::ostringstream os;
        os << "resnet:";
        for (int c : stage_channels) os << c << ",";
        os << ";b=" << blocks_per_stage << ";k=" << num_classes << ";in=" << in_channels << "x"
           << in_height << "x" << in_width << ";drop=" << to_string(dropout.variant) << ":"
           << dropout.rate << ":" << dropout.block_size << ";fc=" << final_fc_dropout_rate;
        return os.str();
    }
};

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------

template <class S>
struct ConvLayer {
    Param<S> w, b;
    int stride = 1, pad = 1;
    Tensor<S> cached_in;

    void init(int cout, int cin, int k, int stride_, int pad_) {
        stride = stride_;
        pad = pad_;
        w.init_shape({cout, cin, k, k});
        b.init_shape({cout});
        b.decay = false;
    }
    Tensor<S> forward(const Tensor<S>& in) {
        cached_in = in;
        return conv2d_forward(in, w.value, b.value, stride, pad);
    }
    Tensor<S> backward(const Tensor<S>& grad_out) {
        Tensor<S> gi, gw, gb;
        conv2d_backward(grad_out, cached_in, w.value, stride, pad, gi, gw, gb);
        for (std::int64_t i = 0; i < gw.size(); ++i) w.grad[i] += gw[i];
        for (std::int64_t i = 0; i < gb.size(); ++i) b.grad[i] += gb[i];
        return gi;
    }
};

template <class S>
struct DenseLayer {
    Param<S> w, b;
    Tensor<S> cached_in;

    void init(int out, int in) {
        w.init_shape({out, in});
        b.init_shape({out});
        b.decay = false;
    }
    Tensor<S> forward(const Tensor<S>& in) {
        cached_in = in;
        return dense_forward(in, w.value, b.value);
    }
    Tensor<S> backward(const Tensor<S>& grad_out) {
        Tensor<S> gi, gw, gb;
        dense_backward(grad_out, cached_in, w.value, gi, gw, gb);
        for (std::int64_t i = 0; i < gw.size(); ++i) w.grad[i] += gw[i];
        for (std::int64_t i = 0; i < gb.size(); ++i) b.grad[i] += gb[i];
        return gi;
    }
};

// A mask site in front of one convolution (or the classifier dense layer).
template <class S>
struct DropoutSite {
    int site_id = 0;
    bool used = false;        // active in the last forward pass
    Mask<S> mask;

    Tensor<S> apply(const Tensor<S>& x, const DropoutSpec& spec, std::uint64_t master_seed,
                    std::uint64_t purpose, std::uint64_t index) {
        used = false;
        if (spec.variant == DropoutVariant::None || spec.rate <= 0.0) return x;
        RngStream rng(master_seed, stream_id(purpose, static_cast<std::uint64_t>(site_id), index));
        switch (spec.variant) {
            case DropoutVariant::Element:
                mask = sample_element_mask<S>(x.shape, spec.rate, rng);
                break;
            case DropoutVariant::Channel:
                mask = sample_channel_mask<S>(x.dim(0), x.dim(1), spec.rate, rng);
                break;
            case DropoutVariant::Block:
                if (x.ndim() == 2) {
                    // 1x1 feature vectors have no spatial blocks; element fallback.
                    mask = sample_element_mask<S>(x.shape, spec.rate, rng);
                } else {
                    mask = sample_block_mask<S>(x.shape, spec.rate, spec.block_size, rng);
                }
                break;
            default:
                return x;
        }
        used = true;
        return apply_mask(x, mask);
    }

    Tensor<S> backward(const Tensor<S>& grad_out) const {
        return used ? apply_mask(grad_out, mask) : grad_out;
    }
};

// ---------------------------------------------------------------------------

// Pre-activation residual block:
//   h  = relu(bn1(x))
//   skip = downsampling ? proj(drop(h)) : x
//   branch = conv2(drop(relu(bn2(conv1(drop(h))))))
//   y  = skip + gate * branch
// The projection shortcut is never gated; only the residual branch is.
template <class S>
struct ResBlock {
    BatchNormState<S> bn1, bn2;
    ConvLayer<S> conv1, conv2;
    std::optional<ConvLayer<S>> proj;
    DropoutSite<S> drop1, drop2, drop_proj;
    bool downsampling = false;
    int stride = 1;

    // per-pass caches
    std::uint8_t gate = 1;
    bool branch_ran = false, pre_ran = false;
    BnMode bn_mode = BnMode::Train;
    Tensor<S> cached_bn1_out, cached_bn2_out;
};

// ---------------------------------------------------------------------------

template <class S>
class ResNet : public Model<S> {
  public:
    ResNet(const ResNetConfig& cfg, std::uint64_t seed) : cfg_(cfg), master_seed_(seed) {
        cfg_.validate();
        build();
        init_params();
        int idx = 0;
        for (Param<S>* p : params()) p->name = "p" + std::to_string(idx++);
    }

    const ResNetConfig& config() const { return cfg_; }
    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t config_hash() const { return fnv1a(cfg_.canonical()); }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    bool block_is_downsampling(int i) const { return blocks_[static_cast<size_t>(i)].downsampling; }

    // Gates used in the most recent forward pass (layer variant).
    const std::vector<std::uint8_t>& last_gates() const { return last_gates_; }

    Tensor<S> forward(const Tensor<S>& batch, Mode mode, long sample_index = -1,
                      std::uint64_t stream_offset = 0) override {
        if (batch.ndim() != 4) throw ConfigError("resnet: batch must be 4-D");
        if (mode == Mode::McSample && sample_index < 0)
            throw UsageError("mc_sample mode requires a sample_index");

        const bool stochastic = mode != Mode::Deterministic;
        std::uint64_t purpose = stream_purpose::kMaskTrain;
        std::uint64_t draw_index = 0;
        if (mode == Mode::McSample) {
            purpose = stream_purpose::kMaskMc;
            draw_index = static_cast<std::uint64_t>(sample_index);
        } else if (mode == Mode::Train) {
            draw_index = sample_index >= 0 ? static_cast<std::uint64_t>(sample_index)
                                           : train_counter_++;
        }
        draw_index = detail::mix64(draw_index ^ detail::mix64(stream_offset ^ 0x51ed2701ULL));

        const BnMode bn_mode = mode == Mode::Train ? BnMode::Train : BnMode::Eval;
        last_mode_ = mode;

        // Per-conv sites carry the configured variant except under the layer
        // variant (gates replace them) and in deterministic mode.
        DropoutSpec body = cfg_.dropout;
        if (!stochastic || body.variant == DropoutVariant::Layer)
            body.variant = DropoutVariant::None;

        // Layer gates: drawn once per pass, shared across the batch.
        last_gates_.assign(blocks_.size(), 1);
        if (stochastic && cfg_.dropout.variant == DropoutVariant::Layer &&
            cfg_.dropout.rate > 0.0) {
            RngStream grng(master_seed_, stream_id(stream_purpose::kGate, 0, draw_index));
            std::vector<bool> ds(blocks_.size());
            for (size_t i = 0; i < blocks_.size(); ++i) ds[i] = blocks_[i].downsampling;
            last_gates_ = sample_layer_gates(
                num_blocks(), cfg_.dropout.rate, ds,
                mode == Mode::Train ? GateMode::Train : GateMode::McTest, grng);
        }

        Tensor<S> x = stem_drop_.apply(batch, body, master_seed_, purpose, draw_index);
        x = stem_.forward(x);

        for (size_t bi = 0; bi < blocks_.size(); ++bi) {
            ResBlock<S>& blk = blocks_[bi];
            blk.gate = last_gates_[bi];
            blk.bn_mode = bn_mode;
            blk.branch_ran = false;
            blk.pre_ran = false;

            if (!blk.gate && !blk.proj) {
                // Whole block skipped; identity pass-through.
                continue;
            }
            blk.pre_ran = true;
            blk.cached_bn1_out = batchnorm_forward(blk.bn1, x, bn_mode);
            Tensor<S> h = relu_forward(blk.cached_bn1_out);

            Tensor<S> skip;
            if (blk.proj) {
                Tensor<S> hp = blk.drop_proj.apply(h, body, master_seed_, purpose, draw_index);
                skip = blk.proj->forward(hp);
            } else {
                skip = x;
            }

            if (blk.gate) {
                blk.branch_ran = true;
                Tensor<S> a1 = blk.drop1.apply(h, body, master_seed_, purpose, draw_index);
                Tensor<S> c1 = blk.conv1.forward(a1);
                blk.cached_bn2_out = batchnorm_forward(blk.bn2, c1, bn_mode);
                Tensor<S> h2 = relu_forward(blk.cached_bn2_out);
                Tensor<S> a2 = blk.drop2.apply(h2, body, master_seed_, purpose, draw_index);
                Tensor<S> branch = blk.conv2.forward(a2);
                for (std::int64_t i = 0; i < skip.size(); ++i) skip[i] += branch[i];
            }
            x = std::move(skip);
        }

        cached_pre_head_ = batchnorm_forward(bn_final_, x, bn_mode);
        Tensor<S> h = relu_forward(cached_pre_head_);
        cached_pool_in_shape_ = h.shape;
        Tensor<S> pooled = global_avg_pool(h);

        // The classifier-head site is plain element dropout at the fixed rate
        // for every variant, deterministic baseline included.
        DropoutSpec head;
        head.variant = stochastic && cfg_.final_fc_dropout_rate > 0.0 ? DropoutVariant::Element
                                                                      : DropoutVariant::None;
        head.rate = cfg_.final_fc_dropout_rate;
        Tensor<S> dropped = head_drop_.apply(pooled, head, master_seed_, purpose, draw_index);
        return fc_.forward(dropped);
    }

    void backward(const Tensor<S>& grad_logits) override {
        Tensor<S> g = fc_.backward(grad_logits);
        g = head_drop_.backward(g);
        g = global_avg_pool_backward(g, cached_pool_in_shape_);
        g = relu_backward(g, cached_pre_head_);
        g = batchnorm_backward(bn_final_, g, last_mode_ == Mode::Train ? BnMode::Train
                                                                      : BnMode::Eval);

        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
            ResBlock<S>& blk = *it;
            if (!blk.pre_ran) continue;  // identity pass-through

            Tensor<S> gh(blk.cached_bn1_out.shape, S(0));  // grad wrt h = relu(bn1(x))
            Tensor<S> gx_direct;                           // grad reaching x around bn1

            if (blk.branch_ran) {
                Tensor<S> gb = blk.conv2.backward(g);
                gb = blk.drop2.backward(gb);
                gb = relu_backward(gb, blk.cached_bn2_out);
                gb = batchnorm_backward(blk.bn2, gb, blk.bn_mode);
                gb = blk.conv1.backward(gb);
                gb = blk.drop1.backward(gb);
                for (std::int64_t i = 0; i < gh.size(); ++i) gh[i] += gb[i];
            }
            if (blk.proj) {
                Tensor<S> gp = blk.proj->backward(g);
                gp = blk.drop_proj.backward(gp);
                for (std::int64_t i = 0; i < gh.size(); ++i) gh[i] += gp[i];
            } else {
                gx_direct = g;  // identity skip
            }
            Tensor<S> gx = relu_backward(gh, blk.cached_bn1_out);
            gx = batchnorm_backward(blk.bn1, gx, blk.bn_mode);
            if (gx_direct.size() > 0)
                for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += gx_direct[i];
            g = std::move(gx);
        }
        g = stem_.backward(g);
        // stem dropout reaches only the input; nothing further to propagate.
    }

    std::vector<Param<S>*> params() override {
        std::vector<Param<S>*> out;
        auto add_bn = [&out](BatchNormState<S>& bn) {
            out.push_back(&bn.gamma);
            out.push_back(&bn.beta);
            out.push_back(&bn.running_mean);
            out.push_back(&bn.running_var);
        };
        out.push_back(&stem_.w);
        out.push_back(&stem_.b);
        for (ResBlock<S>& blk : blocks_) {
            add_bn(blk.bn1);
            out.push_back(&blk.conv1.w);
            out.push_back(&blk.conv1.b);
            add_bn(blk.bn2);
            out.push_back(&blk.conv2.w);
            out.push_back(&blk.conv2.b);
            if (blk.proj) {
                out.push_back(&blk.proj->w);
                out.push_back(&blk.proj->b);
            }
        }
        add_bn(bn_final_);
        out.push_back(&fc_.w);
        out.push_back(&fc_.b);
        return out;
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (Param<S>* p : params())
            if (p->trainable) n += p->value.size();
        return n;
    }

    void reset_train_counter() { train_counter_ = 0; }

  private:
    void build() {
        int next_site = 0;
        stem_.init(cfg_.stage_channels[0], cfg_.in_channels, 3, 1, 1);
        stem_drop_.site_id = next_site++;

        int in_ch = cfg_.stage_channels[0];
        for (size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
            const int out_ch = cfg_.stage_channels[s];
            for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
                ResBlock<S> blk;
                const bool first = b == 0;
                blk.stride = (first && s > 0) ? 2 : 1;
                blk.downsampling = blk.stride != 1 || in_ch != out_ch;
                blk.bn1.init(in_ch);
                blk.bn2.init(out_ch);
                blk.bn1.momentum = blk.bn2.momentum = static_cast<S>(cfg_.bn_momentum);
                blk.conv1.init(out_ch, in_ch, 3, blk.stride, 1);
                blk.conv2.init(out_ch, out_ch, 3, 1, 1);
                blk.drop1.site_id = next_site++;
                blk.drop2.site_id = next_site++;
                if (blk.downsampling) {
                    blk.proj.emplace();
                    blk.proj->init(out_ch, in_ch, 1, blk.stride, 0);
                    blk.drop_proj.site_id = next_site++;
                }
                blocks_.push_back(std::move(blk));
                in_ch = out_ch;
            }
        }
        bn_final_.init(in_ch);
        bn_final_.momentum = static_cast<S>(cfg_.bn_momentum);
        fc_.init(cfg_.num_classes, in_ch);
        head_drop_.site_id = next_site++;
    }

    void init_params() {
        std::uint64_t idx = 0;
        for (Param<S>* p : params()) {
            RngStream rng(master_seed_, stream_id(stream_purpose::kInit, 0, idx++));
            if (p->value.ndim() == 4) {
                const int fan_in = p->value.dim(1) * p->value.dim(2) * p->value.dim(3);
                init_he_normal(p->value, fan_in, rng);
            } else if (p->value.ndim() == 2) {
                init_he_normal(p->value, p->value.dim(1), rng);
            }
            // 1-D params keep their construction defaults (bias 0, gamma 1...).
        }
    }

    ResNetConfig cfg_;
    std::uint64_t master_seed_;
    std::uint64_t train_counter_ = 0;

    ConvLayer<S> stem_;
    DropoutSite<S> stem_drop_;
    std::vector<ResBlock<S>> blocks_;
    BatchNormState<S> bn_final_;
    DropoutSite<S> head_drop_;
    DenseLayer<S> fc_;

    Mode last_mode_ = Mode::Deterministic;
    std::vector<std::uint8_t> last_gates_;
    Tensor<S> cached_pre_head_;
    std::vector<int> cached_pool_in_shape_;
};

}  // namespace calidrop
