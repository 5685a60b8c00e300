#pragma once

#include <cstdint>

#include "artinp/tensor.hpp"

// Data-parallel compute kernels. The default entry points in
// artinp::kernels are OpenMP-parallel and cache-blocked; the ones in
// artinp::kernels::serial are naive reference implementations kept for
// testing and benchmarking against. Both sides share the geometry structs
// and must agree to floating-point roundoff on every input.
namespace artinp::kernels {

// Convolution geometry for a single image (batch size is 1 everywhere).
struct ConvGeom {
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0;
    int kh = 0, kw = 0;
    int stride = 1, pad = 0, dilation = 1;

    int out_h() const { return (in_h + 2 * pad - dilation * (kh - 1) - 1) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - dilation * (kw - 1) - 1) / stride + 1; }
    int64_t col_rows() const { return int64_t(in_c) * kh * kw; }
    int64_t col_cols() const { return int64_t(out_h()) * out_w(); }
};

// Transposed-convolution geometry. out_h = (in_h-1)*stride - 2*pad + kh.
struct ConvTGeom {
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0;
    int kh = 0, kw = 0;
    int stride = 1, pad = 0;

    int out_h() const { return (in_h - 1) * stride - 2 * pad + kh; }
    int out_w() const { return (in_w - 1) * stride - 2 * pad + kw; }
    // The adjoint forward convolution maps the convT output back to its input.
    ConvGeom adjoint() const {
        return ConvGeom{out_c, out_h(), out_w(), in_c, kh, kw, stride, pad, 1};
    }
};

// C(MxN) = A(MxK) * B(KxN), optionally accumulating into C.
void gemm(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate = false);

// cols has col_rows() x col_cols() layout: row = (ci*kh + r)*kw + s.
void im2col(const real* x, const ConvGeom& g, real* cols);
// Adjoint of im2col (scatter-add written as a race-free gather).
void col2im(const real* cols, const ConvGeom& g, real* x);

// x: (in_c, in_h, in_w), w: (out_c, in_c, kh, kw), b: (out_c) or null.
void conv2d_forward(const real* x, const real* w, const real* b, const ConvGeom& g, real* y);
void conv2d_backward_input(const real* dy, const real* w, const ConvGeom& g, real* dx);
// Accumulates (+=) into dw/db; db may be null.
void conv2d_backward_params(const real* x, const real* dy, const ConvGeom& g, real* dw, real* db);

// Transposed conv; w: (in_c, out_c, kh, kw) as in the usual convT convention.
void convt2d_forward(const real* x, const real* w, const real* b, const ConvTGeom& g, real* y);
void convt2d_backward_input(const real* dy, const real* w, const ConvTGeom& g, real* dx);
void convt2d_backward_params(const real* x, const real* dy, const ConvTGeom& g, real* dw, real* db);

// 5-point Laplacian matvec over a masked region: for every interior pixel i
// with region[i] != 0, y[i] = 4*f[i] - sum of f at the 4 neighbours that are
// also inside the region. Pixels outside the region are left untouched in y.
void laplacian_apply(const real* f, const uint8_t* region, int h, int w, real* y);

namespace serial {

void gemm(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate = false);
void conv2d_forward(const real* x, const real* w, const real* b, const ConvGeom& g, real* y);
void conv2d_backward_input(const real* dy, const real* w, const ConvGeom& g, real* dx);
void conv2d_backward_params(const real* x, const real* dy, const ConvGeom& g, real* dw, real* db);
void convt2d_forward(const real* x, const real* w, const real* b, const ConvTGeom& g, real* y);
void convt2d_backward_input(const real* dy, const real* w, const ConvTGeom& g, real* dx);
void convt2d_backward_params(const real* x, const real* dy, const ConvTGeom& g, real* dw, real* db);
void laplacian_apply(const real* f, const uint8_t* region, int h, int w, real* y);

}  // namespace serial

}  // namespace artinp::kernels
