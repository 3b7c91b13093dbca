#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "dgqn/kernels.hpp"

using dgqn::Tensor;
namespace kern = dgqn::kern;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
    return t;
}

bool same_bytes(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.numel() * 8) == 0;
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    for (std::size_t i = 0; i < 6; ++i) CHECK(t[i] == 0.0);
    t.at(1, 2) = 5.0;
    CHECK(t[5] == 5.0);

    CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));
    CHECK_THROWS(t.reshaped({4}));
    CHECK(t.reshaped({3, 2}).numel() == 6);
    CHECK(Tensor::scalar(3.0).is_scalar());
    CHECK(t.shape_str() == "[2x3]");
}

TEST_CASE("matmul identity leaves input unchanged") {
    Tensor eye = Tensor::row_major({2, 2}, {1, 0, 0, 1});
    Tensor x = Tensor::row_major({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(kern::gemm(eye, x) == x);
}

TEST_CASE("matmul hand example") {
    Tensor a = Tensor::row_major({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::row_major({2, 1}, {1, 1});
    Tensor c = kern::gemm(a, b);
    CHECK(c == Tensor::row_major({2, 1}, {3, 7}));
}

TEST_CASE("matmul transpose flags agree with explicit transposes") {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 5}, rng);
    Tensor at({4, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) at.at(j, i) = a.at(i, j);
    CHECK(kern::gemm(a, b, true, false) == kern::gemm(at, b));

    Tensor c = random_tensor({5, 3}, rng);
    Tensor ct({3, 5});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) ct.at(j, i) = c.at(i, j);
    CHECK(kern::gemm(a, c, true, true) == kern::gemm(at, ct));
    CHECK(kern::gemm(at, c, false, true) == kern::gemm(at, ct));
}

TEST_CASE("matmul shape errors") {
    Tensor a({2, 3});
    Tensor b({2, 2});
    CHECK_THROWS(kern::gemm(a, b));
    CHECK_THROWS(kern::gemm(Tensor({4}), b));
}

TEST_CASE("masked row softmax closed-form values") {
    Tensor logits = Tensor::row_major({2, 2}, {0.0, std::log(3.0), 42.0, -7.0});
    Tensor mask = Tensor::row_major({2, 2}, {1, 1, 1, 1});
    Tensor out = kern::masked_row_softmax(logits, mask);
    CHECK(out.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(out.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

    // Equal logits on the support split mass evenly.
    Tensor eq = Tensor::full({1, 3}, 2.5);
    Tensor m2 = Tensor::row_major({1, 3}, {1, 0, 1});
    Tensor out2 = kern::masked_row_softmax(eq, m2);
    CHECK(out2.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out2.at(0, 1) == 0.0);  // exactly zero off the mask
    CHECK(out2.at(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("masked row softmax: masked entries stay zero for any logit") {
    Tensor logits = Tensor::row_major({1, 3}, {1e6, -3.0, 2.0});
    Tensor mask = Tensor::row_major({1, 3}, {0, 1, 1});
    Tensor out = kern::masked_row_softmax(logits, mask);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) + out.at(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked row softmax: rows sum to one on random instances") {
    std::mt19937_64 rng(23);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 5 + trial;
        Tensor logits = random_tensor({n, n}, rng, -30.0, 30.0);
        Tensor mask({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            mask.at(i, i) = 1.0;  // self-connection keeps every row non-empty
            for (std::size_t j = 0; j < n; ++j)
                if (j != i && coin(rng)) mask.at(i, j) = 1.0;
        }
        Tensor out = kern::masked_row_softmax(logits, mask);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                sum += out.at(i, j);
                if (mask.at(i, j) == 0.0) CHECK(out.at(i, j) == 0.0);
                CHECK(std::isfinite(out.at(i, j)));
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("masked row softmax rejects empty support") {
    Tensor logits({2, 2});
    Tensor mask = Tensor::row_major({2, 2}, {1, 0, 0, 0});
    CHECK_THROWS_AS(kern::masked_row_softmax(logits, mask), std::invalid_argument);
}

TEST_CASE("conv2d 1x1 identity kernel") {
    std::mt19937_64 rng(3);
    Tensor in = random_tensor({4, 3, 1}, rng);
    Tensor ker = Tensor::row_major({1, 1, 1, 1}, {1.0});
    Tensor out = kern::conv2d(in, ker);
    CHECK(out.reshaped({4, 3, 1}) == in);
}

TEST_CASE("conv2d 3x1 ones kernel on a column of ones") {
    Tensor in = Tensor::full({5, 1, 1}, 1.0);
    Tensor ker = Tensor::full({3, 1, 1, 1}, 1.0);
    Tensor out = kern::conv2d(in, ker);
    // Same padding: edges see two ones, interior sees three.
    CHECK(out.at(0, 0, 0) == 2.0);
    for (std::size_t y = 1; y < 4; ++y) CHECK(out.at(y, 0, 0) == 3.0);
    CHECK(out.at(4, 0, 0) == 2.0);
}

TEST_CASE("conv2d channel mismatch throws") {
    Tensor in({4, 3, 2});
    Tensor ker({3, 1, 1, 8});
    CHECK_THROWS_AS(kern::conv2d(in, ker), std::invalid_argument);
}

TEST_CASE("serial and openmp kernel paths produce identical bytes") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor({17, 9}, rng);
        Tensor b = random_tensor({9, 13}, rng);
        CHECK(same_bytes(kern::serial::gemm(a, b), kern::par::gemm(a, b)));
        CHECK(same_bytes(kern::serial::gemm(b, a, true, true), kern::par::gemm(b, a, true, true)));

        Tensor in = random_tensor({21, 4, 2}, rng);
        Tensor ker = random_tensor({3, 1, 2, 8}, rng);
        CHECK(same_bytes(kern::serial::conv2d(in, ker), kern::par::conv2d(in, ker)));

        Tensor gout = random_tensor({21, 4, 8}, rng);
        CHECK(same_bytes(kern::serial::conv2d_input_grad(gout, ker, 21, 4, 2),
                         kern::par::conv2d_input_grad(gout, ker, 21, 4, 2)));
        CHECK(same_bytes(kern::serial::conv2d_kernel_grad(in, gout, 3, 1),
                         kern::par::conv2d_kernel_grad(in, gout, 3, 1)));

        Tensor logits = random_tensor({19, 19}, rng, -8.0, 8.0);
        Tensor mask = Tensor::full({19, 19}, 1.0);
        Tensor s = kern::serial::masked_row_softmax(logits, mask);
        CHECK(same_bytes(s, kern::par::masked_row_softmax(logits, mask)));
        Tensor g = random_tensor({19, 19}, rng);
        CHECK(same_bytes(kern::serial::masked_row_softmax_grad(s, mask, g),
                         kern::par::masked_row_softmax_grad(s, mask, g)));
    }
}

TEST_CASE("dispatching wrappers match the serial reference") {
    std::mt19937_64 rng(5);
    Tensor a = random_tensor({130, 140}, rng);
    Tensor b = random_tensor({140, 120}, rng);
    CHECK(same_bytes(kern::gemm(a, b), kern::serial::gemm(a, b)));

    kern::set_thread_budget(1);
    CHECK(kern::thread_budget() == 1);
    CHECK(same_bytes(kern::gemm(a, b), kern::serial::gemm(a, b)));
    kern::set_thread_budget(0);
}

TEST_CASE("kernels are deterministic across calls") {
    std::mt19937_64 rng(31);
    Tensor a = random_tensor({40, 40}, rng);
    Tensor b = random_tensor({40, 40}, rng);
    Tensor first = kern::gemm(a, b);
    for (int i = 0; i < 3; ++i) CHECK(same_bytes(first, kern::gemm(a, b)));
}
