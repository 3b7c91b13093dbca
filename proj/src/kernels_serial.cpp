#include "dgqn/kernels.hpp"

#include "kernels_detail.hpp"

namespace dgqn::kern::serial {

using namespace detail;

Tensor gemm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const GemmDims d = gemm_dims(a, b, trans_a, trans_b);
    Tensor out({d.m, d.n});
    for (std::size_t i = 0; i < d.m; ++i)
        gemm_row(a.data(), b.data(), out.data() + i * d.n, i, d, trans_a, trans_b);
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
    const ConvDims d = conv_dims(input, kernel);
    Tensor out({d.h, d.w, d.cout});
    for (std::size_t y = 0; y < d.h; ++y)
        conv2d_row(input.data(), kernel.data(), out.data(), y, d);
    return out;
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel, std::size_t in_h,
                         std::size_t in_w, std::size_t in_c) {
    Tensor dummy_in({in_h, in_w, in_c});
    const ConvDims d = conv_dims(dummy_in, kernel);
    if (grad_out.rank() != 3 || grad_out.extent(0) != d.h || grad_out.extent(1) != d.w ||
        grad_out.extent(2) != d.cout)
        throw std::invalid_argument("conv2d_input_grad: grad_out shape " + grad_out.shape_str() +
                                    " inconsistent with input/kernel");
    Tensor gin({in_h, in_w, in_c});
    for (std::size_t iy = 0; iy < d.h; ++iy)
        conv2d_input_grad_row(grad_out.data(), kernel.data(), gin.data(), iy, d);
    return gin;
}

Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out, std::size_t kh,
                          std::size_t kw) {
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
    for (std::size_t tap = 0; tap < kh * kw; ++tap)
        conv2d_kernel_grad_tap(input.data(), grad_out.data(), gker.data(), tap, d);
    return gker;
}

Tensor masked_row_softmax(const Tensor& logits, const Tensor& mask) {
    check_square_mask(logits, mask);
    const std::size_t rows = logits.extent(0), cols = logits.extent(1);
    Tensor out({rows, cols});
    for (std::size_t i = 0; i < rows; ++i)
        masked_softmax_row(logits.data(), mask.data(), out.data(), i, cols);
    return out;
}

Tensor masked_row_softmax_grad(const Tensor& softmax_out, const Tensor& mask,
                               const Tensor& grad_out) {
    if (!softmax_out.same_shape(mask) || !softmax_out.same_shape(grad_out))
        throw std::invalid_argument("masked_row_softmax_grad: shape mismatch");
    const std::size_t rows = softmax_out.extent(0), cols = softmax_out.extent(1);
    Tensor glog({rows, cols});
    for (std::size_t i = 0; i < rows; ++i)
        masked_softmax_grad_row(softmax_out.data(), mask.data(), grad_out.data(), glog.data(), i,
                                cols);
    return glog;
}

}  // namespace dgqn::kern::serial
