#pragma once

// Row-level workers shared by the serial and OpenMP kernel paths. Both paths
// partition work by output row and call these, so they sum in the same order
// and produce bitwise identical results.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

#include "dgqn/tensor.hpp"

namespace dgqn::kern::detail {

struct GemmDims {
    std::size_t m, n, k;
};

inline GemmDims gemm_dims(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("gemm: operands must be rank-2, got " + a.shape_str() +
                                    " and " + b.shape_str());
    std::size_t m = ta ? a.extent(1) : a.extent(0);
    std::size_t ka = ta ? a.extent(0) : a.extent(1);
    std::size_t kb = tb ? b.extent(1) : b.extent(0);
    std::size_t n = tb ? b.extent(0) : b.extent(1);
    if (ka != kb)
        throw std::invalid_argument("gemm: inner dimensions differ, " + a.shape_str() +
                                    (ta ? "^T" : "") + " x " + b.shape_str() + (tb ? "^T" : ""));
    return {m, n, ka};
}

/// Computes output row i of op(a)*op(b). `out_row` points at out[i*n].
inline void gemm_row(const double* a, const double* b, double* out_row, std::size_t i,
                     const GemmDims& d, bool ta, bool tb) {
    const std::size_t m = d.m, n = d.n, k = d.k;
    if (!ta && !tb) {
        for (std::size_t j = 0; j < n; ++j) out_row[j] = 0.0;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) out_row[j] += aip * brow[j];
        }
    } else if (!ta && tb) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            out_row[j] = s;
        }
    } else if (ta && !tb) {
        for (std::size_t j = 0; j < n; ++j) out_row[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double api = a[p * m + i];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) out_row[j] += api * brow[j];
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
            out_row[j] = s;
        }
    }
}

struct ConvDims {
    std::size_t h, w, cin, kh, kw, cout;
    std::size_t pad_top, pad_left;
};

inline ConvDims conv_dims(const Tensor& input, const Tensor& kernel) {
    if (input.rank() != 3)
        throw std::invalid_argument("conv2d: input must be H x W x C, got " + input.shape_str());
    if (kernel.rank() != 4)
        throw std::invalid_argument("conv2d: kernel must be kh x kw x C_in x C_out, got " +
                                    kernel.shape_str());
    if (input.extent(2) != kernel.extent(2))
        throw std::invalid_argument("conv2d: channel mismatch, input " + input.shape_str() +
                                    " vs kernel " + kernel.shape_str());
    ConvDims d;
    d.h = input.extent(0);
    d.w = input.extent(1);
    d.cin = input.extent(2);
    d.kh = kernel.extent(0);
    d.kw = kernel.extent(1);
    d.cout = kernel.extent(3);
    d.pad_top = (d.kh - 1) / 2;
    d.pad_left = (d.kw - 1) / 2;
    return d;
}

/// Output row y of same-padded cross-correlation.
inline void conv2d_row(const double* in, const double* ker, double* out, std::size_t y,
                       const ConvDims& d) {
    const std::size_t w = d.w, cin = d.cin, kw = d.kw, cout = d.cout;
    for (std::size_t x = 0; x < w; ++x) {
        double* o = out + (y * w + x) * cout;
        for (std::size_t f = 0; f < cout; ++f) o[f] = 0.0;
        for (std::size_t dy = 0; dy < d.kh; ++dy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) -
                                      static_cast<std::ptrdiff_t>(d.pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
            for (std::size_t dx = 0; dx < kw; ++dx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + dx) -
                                          static_cast<std::ptrdiff_t>(d.pad_left);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                const double* ipix = in + (static_cast<std::size_t>(iy) * w +
                                           static_cast<std::size_t>(ix)) * cin;
                const double* kpix = ker + (dy * kw + dx) * cin * cout;
                for (std::size_t c = 0; c < cin; ++c) {
                    const double iv = ipix[c];
                    const double* kf = kpix + c * cout;
                    for (std::size_t f = 0; f < cout; ++f) o[f] += iv * kf[f];
                }
            }
        }
    }
}

/// Input-gradient row iy: scatter of grad_out back through the kernel.
inline void conv2d_input_grad_row(const double* gout, const double* ker, double* gin,
                                  std::size_t iy, const ConvDims& d) {
    const std::size_t w = d.w, cin = d.cin, kw = d.kw, cout = d.cout;
    for (std::size_t ix = 0; ix < w; ++ix) {
        double* g = gin + (iy * w + ix) * cin;
        for (std::size_t c = 0; c < cin; ++c) g[c] = 0.0;
        for (std::size_t dy = 0; dy < d.kh; ++dy) {
            const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy + d.pad_top) -
                                      static_cast<std::ptrdiff_t>(dy);
            if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(d.h)) continue;
            for (std::size_t dx = 0; dx < kw; ++dx) {
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix + d.pad_left) -
                                          static_cast<std::ptrdiff_t>(dx);
                if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(w)) continue;
                const double* gpix = gout + (static_cast<std::size_t>(oy) * w +
                                             static_cast<std::size_t>(ox)) * cout;
                const double* kpix = ker + (dy * kw + dx) * cin * cout;
                for (std::size_t c = 0; c < cin; ++c) {
                    const double* kf = kpix + c * cout;
                    double s = g[c];
                    for (std::size_t f = 0; f < cout; ++f) s += gpix[f] * kf[f];
                    g[c] = s;
                }
            }
        }
    }
}

/// Kernel-gradient for one (dy, dx) tap: accumulates over all output positions.
inline void conv2d_kernel_grad_tap(const double* in, const double* gout, double* gker,
                                   std::size_t tap, const ConvDims& d) {
    const std::size_t dy = tap / d.kw, dx = tap % d.kw;
    const std::size_t w = d.w, cin = d.cin, cout = d.cout;
    double* gk = gker + tap * cin * cout;
    for (std::size_t i = 0; i < cin * cout; ++i) gk[i] = 0.0;
    for (std::size_t oy = 0; oy < d.h; ++oy) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + dy) -
                                  static_cast<std::ptrdiff_t>(d.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
        for (std::size_t ox = 0; ox < w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + dx) -
                                      static_cast<std::ptrdiff_t>(d.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* ipix = in + (static_cast<std::size_t>(iy) * w +
                                       static_cast<std::size_t>(ix)) * cin;
            const double* gpix = gout + (oy * w + ox) * cout;
            for (std::size_t c = 0; c < cin; ++c) {
                const double iv = ipix[c];
                double* gf = gk + c * cout;
                for (std::size_t f = 0; f < cout; ++f) gf[f] += iv * gpix[f];
            }
        }
    }
}

inline void check_square_mask(const Tensor& logits, const Tensor& mask) {
    if (logits.rank() != 2)
        throw std::invalid_argument("masked_row_softmax: logits must be rank-2, got " +
                                    logits.shape_str());
    if (!logits.same_shape(mask))
        throw std::invalid_argument("masked_row_softmax: mask shape " + mask.shape_str() +
                                    " does not match logits " + logits.shape_str());
    const std::size_t rows = logits.extent(0), cols = logits.extent(1);
    for (std::size_t i = 0; i < rows; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < cols; ++j)
            if (mask.data()[i * cols + j] != 0.0) { any = true; break; }
        if (!any)
            throw std::invalid_argument("masked_row_softmax: mask row " + std::to_string(i) +
                                        " has empty support");
    }
}

inline void masked_softmax_row(const double* logits, const double* mask, double* out,
                               std::size_t i, std::size_t cols) {
    const double* lr = logits + i * cols;
    const double* mr = mask + i * cols;
    double* o = out + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
        if (mr[j] != 0.0 && lr[j] > mx) mx = lr[j];
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        if (mr[j] != 0.0) {
            o[j] = std::exp(lr[j] - mx);
            denom += o[j];
        } else {
            o[j] = 0.0;
        }
    }
    for (std::size_t j = 0; j < cols; ++j)
        if (mr[j] != 0.0) o[j] /= denom;
}

inline void masked_softmax_grad_row(const double* y, const double* mask, const double* gout,
                                    double* glog, std::size_t i, std::size_t cols) {
    const double* yr = y + i * cols;
    const double* mr = mask + i * cols;
    const double* gr = gout + i * cols;
    double* g = glog + i * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
        if (mr[j] != 0.0) dot += gr[j] * yr[j];
    for (std::size_t j = 0; j < cols; ++j)
        g[j] = (mr[j] != 0.0) ? yr[j] * (gr[j] - dot) : 0.0;
}

}  // namespace dgqn::kern::detail
