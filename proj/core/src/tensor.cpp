#include "cabcnn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace cabcnn {

namespace {

std::int64_t product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    for (std::int64_t d : shape) {
        if (d <= 0) {
            throw ShapeError("tensor dimension must be positive, got shape " + shape_str(shape));
        }
    }
    data.assign(static_cast<std::size_t>(product(shape)), 0.0);
}

std::int64_t Tensor::size() const {
    return static_cast<std::int64_t>(data.size());
}

void Tensor::require_grad() {
    grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) {
        grad.assign(data.size(), 0.0);
    }
}

void Tensor::fill(double value) {
    data.assign(data.size(), value);
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << ",";
        }
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void check_shape(const Tensor& t, const std::vector<std::int64_t>& expected,
                 const std::string& what) {
    if (t.shape != expected) {
        throw ShapeError(what + ": expected shape " + shape_str(expected) + ", got " +
                         shape_str(t.shape));
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul needs rank-2 operands, got " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
    }
    if (a.shape[1] != b.shape[0]) {
        throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    const std::int64_t m = a.shape[0];
    const std::int64_t k = a.shape[1];
    const std::int64_t n = b.shape[0] == 0 ? 0 : b.shape[1];
    Tensor c({m, n});
    // ikj loop order keeps the inner walk contiguous in both b and c.
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) {
                continue;
            }
            for (std::int64_t j = 0; j < n; ++j) {
                c.at(i, j) += av * b.at(p, j);
            }
        }
    }
    return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, Tensor& ga_target, Tensor& gb_target,
                     const Tensor& grad_c) {
    const std::int64_t m = a.shape[0];
    const std::int64_t k = a.shape[1];
    const std::int64_t n = b.shape[1];
    check_shape(grad_c, {m, n}, "matmul_backward grad");
    if (ga_target.has_grad()) {
        // dA = dC * B^T
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::int64_t j = 0; j < n; ++j) {
                    acc += grad_c.at(i, j) * b.at(p, j);
                }
                ga_target.grad_at(i, p) += acc;
            }
        }
    }
    if (gb_target.has_grad()) {
        // dB = A^T * dC
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t p = 0; p < k; ++p) {
                const double av = a.at(i, p);
                if (av == 0.0) {
                    continue;
                }
                for (std::int64_t j = 0; j < n; ++j) {
                    gb_target.grad_at(p, j) += av * grad_c.at(i, j);
                }
            }
        }
    }
}

std::vector<double> softmax(const std::vector<double>& z) {
    if (z.empty()) {
        throw ShapeError("softmax of empty vector");
    }
    double zmax = z[0];
    for (double v : z) {
        zmax = std::max(zmax, v);
    }
    std::vector<double> y(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        y[i] = std::exp(z[i] - zmax);
        sum += y[i];
    }
    for (double& v : y) {
        v /= sum;
    }
    return y;
}

std::vector<double> softmax_backward(const std::vector<double>& y,
                                     const std::vector<double>& gy) {
    if (y.size() != gy.size()) {
        throw ShapeError("softmax_backward size mismatch");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        dot += gy[i] * y[i];
    }
    std::vector<double> gz(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        gz[i] = y[i] * (gy[i] - dot);
    }
    return gz;
}

std::vector<double> finite_difference_grad(Tensor& x, const std::function<double()>& f,
                                           double eps) {
    std::vector<double> g(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double saved = x.data[i];
        x.data[i] = saved + eps;
        const double fp = f();
        x.data[i] = saved - eps;
        const double fm = f();
        x.data[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_difference_grad: non-finite value perturbing index " +
                               std::to_string(i));
        }
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

double gradient_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ShapeError("gradient_relative_error size mismatch: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
    }
    double diff = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
    return std::sqrt(diff) / denom;
}

}  // namespace cabcnn
