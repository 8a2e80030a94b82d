#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "calidrop/common.hpp"

namespace calidrop {

// Dense row-major N-d array. Activations use (batch, channel, height, width).
template <class S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shp, S fill = S(0))
        : shape(std::move(shp)), data(numel(shape), fill) {}

    static std::int64_t numel(const std::vector<int>& shp) {
        std::int64_t n = 1;
        for (int e : shp) {
            if (e < 0) throw ConfigError("negative tensor extent");
            n *= e;
        }
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    S& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

    // 4-D accessors for (n, c, h, w) layouts.
    std::int64_t index4(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }
    S& at4(int n, int c, int h, int w) { return data[static_cast<size_t>(index4(n, c, h, w))]; }
    const S& at4(int n, int c, int h, int w) const {
        return data[static_cast<size_t>(index4(n, c, h, w))];
    }

    std::int64_t index2(int n, int k) const {
        return static_cast<std::int64_t>(n) * shape[1] + k;
    }
    S& at2(int n, int k) { return data[static_cast<size_t>(index2(n, k))]; }
    const S& at2(int n, int k) const { return data[static_cast<size_t>(index2(n, k))]; }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace calidrop
