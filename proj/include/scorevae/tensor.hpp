#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scorevae/errors.hpp"
#include "scorevae/rng.hpp"

namespace scorevae {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1; scalars 1x1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw ShapeError("Tensor: negative dimension");
    }

    static Tensor scalar(double x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }

    static Tensor row(std::initializer_list<double> xs) {
        Tensor t(1, static_cast<int>(xs.size()));
        int i = 0;
        for (double x : xs) t.v[i++] = x;
        return t;
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const {
        return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double item() const {
        if (rows != 1 || cols != 1) throw ShapeError("Tensor::item on non-scalar " + shape_str());
        return v[0];
    }
};

using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstEigenMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline ConstEigenMap as_eigen(const Tensor& t) { return ConstEigenMap(t.v.data(), t.rows, t.cols); }
inline EigenMap as_eigen(Tensor& t) { return EigenMap(t.v.data(), t.rows, t.cols); }

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline Tensor t_add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor r = a;
    for (size_t i = 0; i < r.size(); ++i) r.v[i] += b.v[i];
    return r;
}

inline Tensor t_sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor r = a;
    for (size_t i = 0; i < r.size(); ++i) r.v[i] -= b.v[i];
    return r;
}

inline Tensor t_mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor r = a;
    for (size_t i = 0; i < r.size(); ++i) r.v[i] *= b.v[i];
    return r;
}

inline Tensor t_scale(const Tensor& a, double c) {
    Tensor r = a;
    for (double& x : r.v) x *= c;
    return r;
}

inline Tensor t_matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions " + a.shape_str() + " vs " + b.shape_str());
    Tensor r(a.rows, b.cols);
    as_eigen(r) = as_eigen(a) * as_eigen(b);
    return r;
}

inline Tensor t_transpose(const Tensor& a) {
    Tensor r(a.cols, a.rows);
    as_eigen(r) = as_eigen(a).transpose();
    return r;
}

inline double t_dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

inline double t_norm2(const Tensor& a) { return std::sqrt(t_dot(a, a)); }

inline Tensor normal_tensor(int rows, int cols, RandomStream& rng) {
    Tensor t(rows, cols);
    for (double& x : t.v) x = rng.normal();
    return t;
}

} // namespace scorevae
