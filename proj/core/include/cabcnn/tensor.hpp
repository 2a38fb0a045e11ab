#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cabcnn/errors.hpp"

namespace cabcnn {

// Dense row-major tensor of doubles with an optional gradient buffer of the
// same shape. Gradients accumulate: backward passes add into `grad`, callers
// zero it between steps.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s);

    std::int64_t size() const;
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    void require_grad();
    bool has_grad() const { return !grad.empty(); }
    void zero_grad();
    void fill(double value);

    // Unchecked element access for the common ranks.
    double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(std::int64_t i, std::int64_t j) {
        return data[static_cast<std::size_t>(i * shape[1] + j)];
    }
    double at(std::int64_t i, std::int64_t j) const {
        return data[static_cast<std::size_t>(i * shape[1] + j)];
    }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
    }

    double& grad_at(std::int64_t i) { return grad[static_cast<std::size_t>(i)]; }
    double& grad_at(std::int64_t i, std::int64_t j) {
        return grad[static_cast<std::size_t>(i * shape[1] + j)];
    }
    double& grad_at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return grad[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
    }
};

std::string shape_str(const std::vector<std::int64_t>& shape);

// Throws ShapeError naming `what` if t.shape != expected.
void check_shape(const Tensor& t, const std::vector<std::int64_t>& expected,
                 const std::string& what);

// C[M,N] = A[M,K] * B[K,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// Accumulates dA += dC * B^T and dB += A^T * dC into the operands' grad
// buffers (only those with grad enabled).
void matmul_backward(const Tensor& a, const Tensor& b, Tensor& ga_target, Tensor& gb_target,
                     const Tensor& grad_c);

// Softmax over the last axis of a rank-1 vector, with max subtraction.
std::vector<double> softmax(const std::vector<double>& z);

// Given y = softmax(z) and dL/dy, returns dL/dz = y * (g - <g, y>).
std::vector<double> softmax_backward(const std::vector<double>& y, const std::vector<double>& gy);

// Central-difference gradient of `f` with respect to every entry of `x`.
// `f` must read x.data and return a scalar; x is restored on exit.
std::vector<double> finite_difference_grad(Tensor& x, const std::function<double()>& f,
                                           double eps = 1e-5);

// ||a - b||_2 / max(||a||_2 + ||b||_2, 1e-12).
double gradient_relative_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace cabcnn
