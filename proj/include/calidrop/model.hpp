#pragma once

#include <vector>

#include "calidrop/layers.hpp"
#include "calidrop/tensor.hpp"

namespace calidrop {

enum class Mode { Train, McSample, Deterministic };

// Anything trainable by the fit loop and usable for MC prediction.
template <class S>
class Model {
  public:
    virtual ~Model() = default;

    // sample_index: required (>= 0) in McSample mode; in Train mode an explicit
    // index freezes the mask draw (used by gradient checks), otherwise every
    // call consumes a fresh internal counter. stream_offset decorrelates masks
    // across batch chunks within one logical sample index.
    virtual Tensor<S> forward(const Tensor<S>& batch, Mode mode, long sample_index = -1,
                              std::uint64_t stream_offset = 0) = 0;

    // Accumulates parameter gradients for the most recent Train-mode forward.
    virtual void backward(const Tensor<S>& grad_logits) = 0;

    virtual std::vector<Param<S>*> params() = 0;

    void zero_grad() {
        for (Param<S>* p : params()) p->grad.fill(S(0));
    }
};

}  // namespace calidrop
