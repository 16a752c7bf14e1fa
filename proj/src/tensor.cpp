#include "thermogyro/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace tg {

namespace {

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

} // namespace

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

Tensor::Tensor(std::vector<int> shp) : shape(std::move(shp)) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must not be empty");
    for (int d : shape) {
        if (d < 1) throw std::invalid_argument("tensor shape entries must be >= 1, got " + shape_string(shape));
    }
    data.assign(shape_product(shape), 0.0);
}

Tensor Tensor::from(std::vector<int> shp, std::vector<double> values) {
    Tensor t(std::move(shp));
    if (values.size() != t.data.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_string(t.shape));
    }
    t.data = std::move(values);
    return t;
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

void require_shape(const Tensor& t, const std::vector<int>& expected, const char* what) {
    if (t.shape != expected) {
        throw std::invalid_argument(std::string(what) + ": expected shape " + shape_string(expected) +
                                    ", got " + shape_string(t.shape));
    }
}

} // namespace tg
