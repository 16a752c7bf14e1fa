#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace tg {

// Dense row-major tensor of 64-bit reals. Small and value-semantic; every
// intermediate activation in the network lives in one of these.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    // Zero-filled tensor of the given shape. Shape entries must be >= 1.
    explicit Tensor(std::vector<int> shp);
    Tensor(std::initializer_list<int> shp) : Tensor(std::vector<int>(shp)) {}

    // Adopts existing data; length must equal product(shape).
    static Tensor from(std::vector<int> shp, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    void fill(double v);

    // Element access for rank-2 / rank-3 tensors (row-major).
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double& at(int c, int i, int j) {
        return data[(static_cast<std::size_t>(c) * shape[1] + i) * shape[2] + j];
    }
    double at(int c, int i, int j) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + i) * shape[2] + j];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::size_t shape_product(const std::vector<int>& shape);

// Throws std::invalid_argument naming `what` when the shapes differ.
void require_shape(const Tensor& t, const std::vector<int>& expected, const char* what);

} // namespace tg
