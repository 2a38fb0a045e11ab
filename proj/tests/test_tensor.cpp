#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cabcnn/rng.hpp"
#include "cabcnn/tensor.hpp"

using cabcnn::Tensor;

namespace {

// Independent matmul oracle: plain triple loop, no shared code with the
// implementation's loop order or zero-skip.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor c({a.shape[0], b.shape[1]});
    for (std::int64_t i = 0; i < a.shape[0]; ++i) {
        for (std::int64_t j = 0; j < b.shape[1]; ++j) {
            double acc = 0.0;
            for (std::int64_t k = 0; k < a.shape[1]; ++k) {
                acc += a.at(i, k) * b.at(k, j);
            }
            c.at(i, j) = acc;
        }
    }
    return c;
}

Tensor random_matrix(std::int64_t rows, std::int64_t cols, cabcnn::Rng& rng) {
    Tensor t({rows, cols});
    for (double& v : t.data) {
        v = rng.normal();
    }
    return t;
}

}  // namespace

TEST_CASE("tensor basics: size, fill, grad buffer") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.rank() == 3);
    CHECK(!t.has_grad());
    t.fill(1.5);
    CHECK(t.at(1, 2, 3) == 1.5);
    t.require_grad();
    CHECK(t.has_grad());
    t.grad_at(0, 0, 0) = 7.0;
    t.zero_grad();
    CHECK(t.grad[0] == 0.0);

    Tensor scalarish({5});
    CHECK(scalarish.size() == 5);
    CHECK(scalarish.data.size() == 5);
}

TEST_CASE("check_shape names the offender") {
    Tensor t({2, 3});
    CHECK_NOTHROW(cabcnn::check_shape(t, {2, 3}, "x"));
    CHECK_THROWS_WITH_AS(cabcnn::check_shape(t, {3, 2}, "widget"),
                         doctest::Contains("widget"), cabcnn::ShapeError);
}

TEST_CASE("matmul matches a hand-computed case") {
    Tensor a({2, 3});
    a.data = {1, 2, 3, 4, 5, 6};
    Tensor b({3, 2});
    b.data = {7, 8, 9, 10, 11, 12};
    // [[1*7+2*9+3*11, 1*8+2*10+3*12], [4*7+5*9+6*11, ...]] = [[58,64],[139,154]]
    const Tensor c = cabcnn::matmul(a, b);
    CHECK(c.shape == std::vector<std::int64_t>{2, 2});
    CHECK(c.at(0, 0) == doctest::Approx(58));
    CHECK(c.at(0, 1) == doctest::Approx(64));
    CHECK(c.at(1, 0) == doctest::Approx(139));
    CHECK(c.at(1, 1) == doctest::Approx(154));
}

TEST_CASE("matmul matches the triple-loop oracle on random shapes") {
    cabcnn::Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.uniform_index(6));
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng.uniform_index(6));
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_index(6));
        const Tensor a = random_matrix(m, k, rng);
        const Tensor b = random_matrix(k, n, rng);
        const Tensor got = cabcnn::matmul(a, b);
        const Tensor want = matmul_oracle(a, b);
        for (std::int64_t i = 0; i < got.size(); ++i) {
            CHECK(got.at(i) == doctest::Approx(want.at(i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Tensor a({2, 3});
    Tensor b({4, 2});
    CHECK_THROWS_AS(cabcnn::matmul(a, b), cabcnn::ShapeError);
}

TEST_CASE("matmul_backward agrees with finite differences") {
    cabcnn::Rng rng(12);
    Tensor a = random_matrix(3, 4, rng);
    Tensor b = random_matrix(4, 2, rng);
    a.require_grad();
    b.require_grad();
    // Scalar loss: weighted sum of C so dL/dC is a fixed random matrix.
    Tensor w = random_matrix(3, 2, rng);
    const auto loss = [&]() {
        const Tensor c = cabcnn::matmul(a, b);
        double acc = 0.0;
        for (std::int64_t i = 0; i < c.size(); ++i) {
            acc += w.at(i) * c.at(i);
        }
        return acc;
    };

    Tensor grad_c({3, 2});
    grad_c.data = w.data;
    cabcnn::matmul_backward(a, b, a, b, grad_c);

    const std::vector<double> fd_a = cabcnn::finite_difference_grad(a, loss);
    const std::vector<double> fd_b = cabcnn::finite_difference_grad(b, loss);
    CHECK(cabcnn::gradient_relative_error(a.grad, fd_a) < 1e-8);
    CHECK(cabcnn::gradient_relative_error(b.grad, fd_b) < 1e-8);
}

TEST_CASE("matmul_backward accumulates instead of overwriting") {
    Tensor a({1, 1});
    a.data = {2.0};
    Tensor b({1, 1});
    b.data = {3.0};
    a.require_grad();
    b.require_grad();
    a.grad = {10.0};
    b.grad = {20.0};
    Tensor gc({1, 1});
    gc.data = {1.0};
    cabcnn::matmul_backward(a, b, a, b, gc);
    CHECK(a.grad[0] == doctest::Approx(10.0 + 3.0));
    CHECK(b.grad[0] == doctest::Approx(20.0 + 2.0));
}

TEST_CASE("softmax: hand cases and invariants") {
    const std::vector<double> even = cabcnn::softmax({0.0, 0.0});
    CHECK(even[0] == doctest::Approx(0.5));
    CHECK(even[1] == doctest::Approx(0.5));

    // exp(ln 1), exp(ln 2), exp(ln 3) normalize to 1/6, 2/6, 3/6.
    const std::vector<double> prop =
        cabcnn::softmax({std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(prop[0] == doctest::Approx(1.0 / 6.0));
    CHECK(prop[1] == doctest::Approx(2.0 / 6.0));
    CHECK(prop[2] == doctest::Approx(3.0 / 6.0));

    // Max subtraction keeps huge logits finite.
    const std::vector<double> big = cabcnn::softmax({1000.0, 1001.0});
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] + big[1] == doctest::Approx(1.0));
    CHECK(big[1] > big[0]);

    // Shift invariance: softmax(z + c) == softmax(z).
    const std::vector<double> z = {0.3, -1.2, 2.7, 0.0};
    const std::vector<double> base = cabcnn::softmax(z);
    std::vector<double> shifted = z;
    for (double& v : shifted) {
        v += 5.0;
    }
    const std::vector<double> after = cabcnn::softmax(shifted);
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(after[i] == doctest::Approx(base[i]).epsilon(1e-12));
        total += base[i];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax_backward agrees with finite differences") {
    cabcnn::Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor z({6});
        for (double& v : z.data) {
            v = rng.normal();
        }
        std::vector<double> gy(6);
        for (double& v : gy) {
            v = rng.normal();
        }
        const auto loss = [&]() {
            const std::vector<double> y = cabcnn::softmax(z.data);
            double acc = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) {
                acc += gy[i] * y[i];
            }
            return acc;
        };
        const std::vector<double> fd = cabcnn::finite_difference_grad(z, loss);
        const std::vector<double> got = cabcnn::softmax_backward(cabcnn::softmax(z.data), gy);
        CHECK(cabcnn::gradient_relative_error(got, fd) < 1e-9);
    }
}

TEST_CASE("finite_difference_grad recovers an analytic gradient") {
    Tensor x({4});
    x.data = {1.0, -2.0, 0.5, 3.0};
    const auto f = [&]() {
        double acc = 0.0;
        for (double v : x.data) {
            acc += v * v;
        }
        return acc;
    };
    const std::vector<double> fd = cabcnn::finite_difference_grad(x, f);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(fd[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-8));
    }
    // x restored on exit
    CHECK(x.data[0] == 1.0);
}

TEST_CASE("gradient_relative_error edge cases") {
    CHECK(cabcnn::gradient_relative_error({1.0, 2.0}, {1.0, 2.0}) == doctest::Approx(0.0));
    // a vs -a: ||2a|| / (||a|| + ||a||) = 1.
    CHECK(cabcnn::gradient_relative_error({3.0, 4.0}, {-3.0, -4.0}) == doctest::Approx(1.0));
    CHECK(cabcnn::gradient_relative_error({0.0, 0.0}, {0.0, 0.0}) == doctest::Approx(0.0));
}
