// Times the serial kernel path against the OpenMP path and checks that both
// produce identical bytes. Usage: bench_kernels [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>

#include "dgqn/kernels.hpp"

using dgqn::Tensor;
namespace kern = dgqn::kern;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
    return t;
}

template <class F>
double time_ms(int repeats, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) f();
    const auto end = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(end - start).count() / repeats;
}

bool same_bytes(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.numel() * 8) == 0;
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
    std::mt19937_64 rng(7);

    std::printf("%-28s %12s %12s %9s %7s\n", "kernel", "serial ms", "openmp ms", "speedup",
                "match");

    for (std::size_t n : {64, 256, 512}) {
        Tensor a = random_tensor({n, n}, rng);
        Tensor b = random_tensor({n, n}, rng);
        Tensor rs = kern::serial::gemm(a, b);
        Tensor rp = kern::par::gemm(a, b);
        const double ts = time_ms(repeats, [&] { kern::serial::gemm(a, b); });
        const double tp = time_ms(repeats, [&] { kern::par::gemm(a, b); });
        std::printf("gemm %4zux%-4zu               %12.3f %12.3f %8.2fx %7s\n", n, n, ts, tp,
                    ts / tp, same_bytes(rs, rp) ? "yes" : "NO");
    }

    for (std::size_t h : {231, 924}) {
        Tensor in = random_tensor({h, 2, 1}, rng);
        Tensor ker = random_tensor({3, 1, 1, 8}, rng);
        Tensor rs = kern::serial::conv2d(in, ker);
        Tensor rp = kern::par::conv2d(in, ker);
        const double ts = time_ms(repeats, [&] { kern::serial::conv2d(in, ker); });
        const double tp = time_ms(repeats, [&] { kern::par::conv2d(in, ker); });
        std::printf("conv2d %4zux2x1 k3x1x1x8     %12.3f %12.3f %8.2fx %7s\n", h, ts, tp, ts / tp,
                    same_bytes(rs, rp) ? "yes" : "NO");
    }

    for (std::size_t n : {77, 512}) {
        Tensor logits = random_tensor({n, n}, rng);
        Tensor mask = Tensor::full({n, n}, 1.0);
        Tensor rs = kern::serial::masked_row_softmax(logits, mask);
        Tensor rp = kern::par::masked_row_softmax(logits, mask);
        const double ts = time_ms(repeats, [&] { kern::serial::masked_row_softmax(logits, mask); });
        const double tp = time_ms(repeats, [&] { kern::par::masked_row_softmax(logits, mask); });
        std::printf("masked_row_softmax %4zux%-4zu %12.3f %12.3f %8.2fx %7s\n", n, n, ts, tp,
                    ts / tp, same_bytes(rs, rp) ? "yes" : "NO");
    }

    return 0;
}
