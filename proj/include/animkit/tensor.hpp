#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace animkit {

// Error type for every contract violation surfaced to callers.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

// Dense row-major nd-array of doubles. All model math runs in double so the
// finite-difference gradient checks hold at 1e-4 relative error.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
    static Tensor scalar(double v) {
        Tensor t(Shape{1});
        t.data[0] = v;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // Flat offsets for the layouts the model uses.
    int64_t idx2(int i, int j) const { return (int64_t)i * dim(1) + j; }
    int64_t idx3(int i, int j, int k) const { return ((int64_t)i * dim(1) + j) * dim(2) + k; }
    int64_t idx4(int i, int j, int k, int l) const {
        return (((int64_t)i * dim(1) + j) * dim(2) + k) * dim(3) + l;
    }
    int64_t idx5(int i, int j, int k, int l, int m) const {
        return ((((int64_t)i * dim(1) + j) * dim(2) + k) * dim(3) + l) * dim(4) + m;
    }

    double& at2(int i, int j) { return data[(size_t)idx2(i, j)]; }
    double at2(int i, int j) const { return data[(size_t)idx2(i, j)]; }
    double& at3(int i, int j, int k) { return data[(size_t)idx3(i, j, k)]; }
    double at3(int i, int j, int k) const { return data[(size_t)idx3(i, j, k)]; }
    double& at4(int i, int j, int k, int l) { return data[(size_t)idx4(i, j, k, l)]; }
    double at4(int i, int j, int k, int l) const { return data[(size_t)idx4(i, j, k, l)]; }

    bool all_finite() const;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace animkit
