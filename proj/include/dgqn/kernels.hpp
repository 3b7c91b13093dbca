#pragma once

#include "dgqn/tensor.hpp"

namespace dgqn::kern {

/// Per-thread cap on OpenMP worker threads for the kernels below.
/// 0 = library default, 1 = force the serial path. Actor threads set 1 so
/// kernel teams do not oversubscribe cores already used for actor parallelism.
void set_thread_budget(int n);
int thread_budget();

// Dispatching entry points. The parallel and serial paths partition work by
// output row and keep identical inner summation order, so results are
// bitwise equal regardless of thread count.

/// General matrix product: op(a) * op(b), where op transposes when the flag is set.
Tensor gemm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

/// 2-D cross-correlation with "same" zero padding.
/// input: H x W x C_in, kernel: kh x kw x C_in x C_out -> H x W x C_out.
Tensor conv2d(const Tensor& input, const Tensor& kernel);
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel,
                         std::size_t in_h, std::size_t in_w, std::size_t in_c);
Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out,
                          std::size_t kh, std::size_t kw);

/// Row-wise softmax restricted to mask support; off-mask entries are exactly 0.
/// Rows are stabilized by subtracting the row max over the support.
/// Throws if any row of the mask is all zero.
Tensor masked_row_softmax(const Tensor& logits, const Tensor& mask);
/// Gradient of masked_row_softmax w.r.t. the logits, given the forward output.
Tensor masked_row_softmax_grad(const Tensor& softmax_out, const Tensor& mask,
                               const Tensor& grad_out);

// Serial reference implementations, kept for testing and benchmarking.
namespace serial {
Tensor gemm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor conv2d(const Tensor& input, const Tensor& kernel);
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel,
                         std::size_t in_h, std::size_t in_w, std::size_t in_c);
Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out,
                          std::size_t kh, std::size_t kw);
Tensor masked_row_softmax(const Tensor& logits, const Tensor& mask);
Tensor masked_row_softmax_grad(const Tensor& softmax_out, const Tensor& mask,
                               const Tensor& grad_out);
}  // namespace serial

// OpenMP implementations. Fall back to the serial path when built without OpenMP.
namespace par {
Tensor gemm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor conv2d(const Tensor& input, const Tensor& kernel);
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel,
                         std::size_t in_h, std::size_t in_w, std::size_t in_c);
Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out,
                          std::size_t kh, std::size_t kw);
Tensor masked_row_softmax(const Tensor& logits, const Tensor& mask);
Tensor masked_row_softmax_grad(const Tensor& softmax_out, const Tensor& mask,
                               const Tensor& grad_out);
}  // namespace par

}  // namespace dgqn::kern
