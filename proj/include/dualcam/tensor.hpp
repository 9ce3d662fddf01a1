#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dualcam/errors.hpp"

namespace dcam {

// Dense row-major tensor. Shape is dynamic; data is contiguous.
template <typename T>
struct TensorT {
    std::vector<long> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<long> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    TensorT(std::vector<long> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<long>(data.size()) != count(shape))
            throw ShapeError("tensor data size does not match shape");
    }

    static long count(const std::vector<long>& s) {
        long n = 1;
        for (long d : s) n *= d;
        return n;
    }

    long size() const { return static_cast<long>(data.size()); }
    long dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    T& operator[](long i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](long i) const { return data[static_cast<size_t>(i)]; }

    T& at(long i, long j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    const T& at(long i, long j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    T& at(long i, long j, long k) {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    const T& at(long i, long j, long k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    T& at(long i, long j, long k, long l) {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }
    const T& at(long i, long j, long k, long l) const {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

}  // namespace dcam
