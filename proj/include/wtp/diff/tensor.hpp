#pragma once

#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wtp::diff {

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape has non-positive dim " + shape_str(shape));
        n *= static_cast<size_t>(d);
    }
    return n;
}

// Dense n-dimensional value buffer. Row-major, innermost dim last.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, T fill = T(0))
        : shape(std::move(s)), data(shape_numel(shape), fill) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_numel(shape))
            throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
    }

    size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
};

inline void check_same_shape(const std::vector<int>& a, const std::vector<int>& b,
                             const char* op) {
    if (a != b)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) +
                                    " vs " + shape_str(b));
}

}  // namespace wtp::diff
