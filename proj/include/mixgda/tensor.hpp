#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixgda {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

/// Dense row-major tensor of doubles. Shapes used throughout:
/// images {N,H,W,C}, matrices {N,K}, vectors {K}, scalars {1}.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                        " does not match data length " + std::to_string(data.size()));
    }

    static Tensor zeros(Shape s) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
    }
    static Tensor full(Shape s, double v) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // {N,H,W,C} accessors
    double& at4(int n, int i, int j, int c) {
        return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape[1] + i) * shape[2] + j) * shape[3] + c)];
    }
    double at4(int n, int i, int j, int c) const {
        return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape[1] + i) * shape[2] + j) * shape[3] + c)];
    }
    // {N,K} accessors
    double& at2(int n, int k) { return data[static_cast<size_t>(static_cast<std::int64_t>(n) * shape[1] + k)]; }
    double at2(int n, int k) const { return data[static_cast<size_t>(static_cast<std::int64_t>(n) * shape[1] + k)]; }
};

}  // namespace mixgda
