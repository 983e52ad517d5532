#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dited {

class DitedError : public std::runtime_error {
public:
    explicit DitedError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

// Dense row-major f64 tensor. `node` links the value to the tape entry that
// produced it (-1 = not tracked); plain arithmetic never sets it.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    int node = -1;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw DitedError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    bool tracked() const { return node >= 0; }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int64_t rows() const { return shape.at(0); }
    int64_t cols() const { return shape.at(1); }

    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at2(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    double at2(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    double scalar_value() const {
        if (numel() != 1) throw DitedError("tensor: expected scalar, got shape " + shape_str(shape));
        return data[0];
    }

    bool all_finite() const;

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor scalar(double v) { return full({1}, v); }
    static Tensor row(std::vector<double> d);  // shape {1, n}
};

bool same_shape(const Shape& a, const Shape& b);

}  // namespace dited
