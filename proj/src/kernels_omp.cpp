#include "dgqn/kernels.hpp"

#include "kernels_detail.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dgqn::kern {

namespace {
thread_local int tls_thread_budget = 0;

#ifdef _OPENMP
int team_size() {
    const int budget = tls_thread_budget;
    const int avail = omp_get_max_threads();
    if (budget <= 0) return avail;
    return budget < avail ? budget : avail;
}
#endif
}  // namespace

void set_thread_budget(int n) { tls_thread_budget = n < 0 ? 0 : n; }
int thread_budget() { return tls_thread_budget; }

namespace par {

using namespace detail;

Tensor gemm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
#ifdef _OPENMP
    const GemmDims d = gemm_dims(a, b, trans_a, trans_b);
    Tensor out({d.m, d.n});
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static) num_threads(team_size())
    for (std::ptrdiff_t i = 0; i < m; ++i)
        gemm_row(a.data(), b.data(), out.data() + static_cast<std::size_t>(i) * d.n,
                 static_cast<std::size_t>(i), d, trans_a, trans_b);
    return out;
#else
    return serial::gemm(a, b, trans_a, trans_b);
#endif
}

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
#ifdef _OPENMP
    const ConvDims d = conv_dims(input, kernel);
    Tensor out({d.h, d.w, d.cout});
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(d.h);
#pragma omp parallel for schedule(static) num_threads(team_size())
    for (std::ptrdiff_t y = 0; y < h; ++y)
        conv2d_row(input.data(), kernel.data(), out.data(), static_cast<std::size_t>(y), d);
    return out;
#else
    return serial::conv2d(input, kernel);
#endif
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel, std::size_t in_h,
                         std::size_t in_w, std::size_t in_c) {
#ifdef _OPENMP
    Tensor dummy_in({in_h, in_w, in_c});
    const ConvDims d = conv_dims(dummy_in, kernel);
    if (grad_out.rank() != 3 || grad_out.extent(0) != d.h || grad_out.extent(1) != d.w ||
        grad_out.extent(2) != d.cout)
        throw std::invalid_argument("conv2d_input_grad: grad_out shape " + grad_out.shape_str() +
                                    " inconsistent with input/kernel");
    Tensor gin({in_h, in_w, in_c});
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(d.h);
#pragma omp parallel for schedule(static) num_threads(team_size())
    for (std::ptrdiff_t iy = 0; iy < h; ++iy)
        conv2d_input_grad_row(grad_out.data(), kernel.data(), gin.data(),
                              static_cast<std::size_t>(iy), d);
    return gin;
#else
    return serial::conv2d_input_grad(grad_out, kernel, in_h, in_w, in_c);
#endif
}

Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out, std::size_t kh,
                          std::size_t kw) {
#ifdef _OPENMP
    if (input.rank() != 3 || grad_out.rank() != 3)
        throw std::invalid_argument("conv2d_kernel_grad: input and grad_out must be rank-3");
    ConvDims d;
    d.h = input.extent(0);
    d.w = input.extent(1);
    d.cin = input.extent(2);
    d.kh = kh;
    d.kw = kw;
    d.cout = grad_out.extent(2);
    d.pad_top = (kh - 1) / 2;
    d.pad_left = (kw - 1) / 2;
    if (grad_out.extent(0) != d.h || grad_out.extent(1) != d.w)
        throw std::invalid_argument("conv2d_kernel_grad: grad_out shape " + grad_out.shape_str() +
                                    " does not match input " + input.shape_str());
    Tensor gker({kh, kw, d.cin, d.cout});
    const std::ptrdiff_t taps = static_cast<std::ptrdiff_t>(kh * kw);
#pragma omp parallel for schedule(static) num_threads(team_size())
    for (std::ptrdiff_t tap = 0; tap < taps; ++tap)
        conv2d_kernel_grad_tap(input.data(), grad_out.data(), gker.data(),
                               static_cast<std::size_t>(tap), d);
    return gker;
#else
    return serial::conv2d_kernel_grad(input, grad_out, kh, kw);
#endif
}

Tensor masked_row_softmax(const Tensor& logits, const Tensor& mask) {
#ifdef _OPENMP
    check_square_mask(logits, mask);
    const std::size_t rows = logits.extent(0), cols = logits.extent(1);
    Tensor out({rows, cols});
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(team_size())
    for (std::ptrdiff_t i = 0; i < r; ++i)
        masked_softmax_row(logits.data(), mask.data(), out.data(), static_cast<std::size_t>(i),
                           cols);
    return out;
#else
    return serial::masked_row_softmax(logits, mask);
#endif
}

Tensor masked_row_softmax_grad(const Tensor& softmax_out, const Tensor& mask,
                               const Tensor& grad_out) {
#ifdef _OPENMP
    if (!softmax_out.same_shape(mask) || !softmax_out.same_shape(grad_out))
        throw std::invalid_argument("masked_row_softmax_grad: shape mismatch");
    const std::size_t rows = softmax_out.extent(0), cols = softmax_out.extent(1);
    Tensor glog({rows, cols});
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(team_size())
    for (std::ptrdiff_t i = 0; i < r; ++i)
        masked_softmax_grad_row(softmax_out.data(), mask.data(), grad_out.data(), glog.data(),
                                static_cast<std::size_t>(i), cols);
    return glog;
#else
    return serial::masked_row_softmax_grad(softmax_out, mask, grad_out);
#endif
}

}  // namespace par

namespace {

bool use_parallel(std::size_t work) {
#ifdef _OPENMP
    if (tls_thread_budget == 1) return false;
    if (work < 16384) return false;
    if (omp_in_parallel()) return false;
    return omp_get_max_threads() > 1;
#else
    (void)work;
    return false;
#endif
}

}  // namespace

Tensor gemm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const detail::GemmDims d = detail::gemm_dims(a, b, trans_a, trans_b);
    return use_parallel(d.m * d.n * d.k) ? par::gemm(a, b, trans_a, trans_b)
                                         : serial::gemm(a, b, trans_a, trans_b);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
    const detail::ConvDims d = detail::conv_dims(input, kernel);
    const std::size_t work = d.h * d.w * d.cout * d.kh * d.kw * d.cin;
    return use_parallel(work) ? par::conv2d(input, kernel) : serial::conv2d(input, kernel);
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel, std::size_t in_h,
                         std::size_t in_w, std::size_t in_c) {
    const std::size_t work = grad_out.numel() * kernel.numel();
    return use_parallel(work) ? par::conv2d_input_grad(grad_out, kernel, in_h, in_w, in_c)
                              : serial::conv2d_input_grad(grad_out, kernel, in_h, in_w, in_c);
}

Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out, std::size_t kh,
                          std::size_t kw) {
    const std::size_t work = input.numel() * kh * kw;
    return use_parallel(work) ? par::conv2d_kernel_grad(input, grad_out, kh, kw)
                              : serial::conv2d_kernel_grad(input, grad_out, kh, kw);
}

Tensor masked_row_softmax(const Tensor& logits, const Tensor& mask) {
    return use_parallel(logits.numel() * 4) ? par::masked_row_softmax(logits, mask)
                                            : serial::masked_row_softmax(logits, mask);
}

Tensor masked_row_softmax_grad(const Tensor& softmax_out, const Tensor& mask,
                               const Tensor& grad_out) {
    return use_parallel(softmax_out.numel() * 4)
               ? par::masked_row_softmax_grad(softmax_out, mask, grad_out)
               : serial::masked_row_softmax_grad(softmax_out, mask, grad_out);
}

}  // namespace dgqn::kern
