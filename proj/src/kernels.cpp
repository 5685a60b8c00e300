#include "artinp/kernels.hpp"

#include <cstring>
#include <vector>

namespace artinp::kernels {

namespace {

// Per-thread scratch for im2col buffers so hot training loops do not
// reallocate on every call.
std::vector<real>& scratch() {
    thread_local std::vector<real> buf;
    return buf;
}

std::vector<real>& scratch2() {
    thread_local std::vector<real> buf;
    return buf;
}

// C(MxN) = A^T(MxK) * B(KxN), with A stored as (KxM).
void gemm_tn(int m, int n, int k, const real* a, const real* b, real* c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        real* crow = c + int64_t(i) * n;
        std::memset(crow, 0, sizeof(real) * size_t(n));
        for (int t = 0; t < k; ++t) {
            const real ati = a[int64_t(t) * m + i];
            if (ati == real(0)) continue;
            const real* brow = b + int64_t(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += ati * brow[j];
        }
    }
}

// C(MxN) += A(MxK) * B^T(KxN), with B stored as (NxK).
void gemm_nt_acc(int m, int n, int k, const real* a, const real* b, real* c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const real* arow = a + int64_t(i) * k;
        real* crow = c + int64_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const real* brow = b + int64_t(j) * k;
            real acc = 0;
            for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
            crow[j] += acc;
        }
    }
}

}  // namespace

void gemm(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        real* crow = c + int64_t(i) * n;
        if (!accumulate) std::memset(crow, 0, sizeof(real) * size_t(n));
        const real* arow = a + int64_t(i) * k;
        for (int t = 0; t < k; ++t) {
            const real ait = arow[t];
            if (ait == real(0)) continue;
            const real* brow = b + int64_t(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += ait * brow[j];
        }
    }
}

void im2col(const real* x, const ConvGeom& g, real* cols) {
    const int oh = g.out_h(), ow = g.out_w();
    const int rows = g.in_c * g.kh * g.kw;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int s = r % g.kw;
        const int t = (r / g.kw) % g.kh;
        const int ci = r / (g.kw * g.kh);
        const real* xc = x + int64_t(ci) * g.in_h * g.in_w;
        real* crow = cols + int64_t(r) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const int iy = y * g.stride - g.pad + t * g.dilation;
            if (iy < 0 || iy >= g.in_h) {
                std::memset(crow + int64_t(y) * ow, 0, sizeof(real) * size_t(ow));
                continue;
            }
            const real* xrow = xc + int64_t(iy) * g.in_w;
            real* out = crow + int64_t(y) * ow;
            for (int xo = 0; xo < ow; ++xo) {
                const int ix = xo * g.stride - g.pad + s * g.dilation;
                out[xo] = (ix >= 0 && ix < g.in_w) ? xrow[ix] : real(0);
            }
        }
    }
}

void col2im(const real* cols, const ConvGeom& g, real* x) {
    const int oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < g.in_c; ++ci) {
        real* xc = x + int64_t(ci) * g.in_h * g.in_w;
        for (int iy = 0; iy < g.in_h; ++iy) {
            for (int ix = 0; ix < g.in_w; ++ix) {
                real acc = 0;
                for (int t = 0; t < g.kh; ++t) {
                    const int ny = iy + g.pad - t * g.dilation;
                    if (ny < 0 || ny % g.stride != 0) continue;
                    const int y = ny / g.stride;
                    if (y >= oh) continue;
                    for (int s = 0; s < g.kw; ++s) {
                        const int nx = ix + g.pad - s * g.dilation;
                        if (nx < 0 || nx % g.stride != 0) continue;
                        const int xo = nx / g.stride;
                        if (xo >= ow) continue;
                        const int r = (ci * g.kh + t) * g.kw + s;
                        acc += cols[(int64_t(r) * oh + y) * ow + xo];
                    }
                }
                xc[int64_t(iy) * g.in_w + ix] = acc;
            }
        }
    }
}

void conv2d_forward(const real* x, const real* w, const real* b, const ConvGeom& g, real* y) {
    const int64_t k = g.col_rows(), n = g.col_cols();
    auto& cols = scratch();
    cols.resize(size_t(k * n));
    im2col(x, g, cols.data());
    gemm(g.out_c, int(n), int(k), w, cols.data(), y);
    if (b) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < g.out_c; ++co) {
            real* yrow = y + int64_t(co) * n;
            const real bias = b[co];
            for (int64_t j = 0; j < n; ++j) yrow[j] += bias;
        }
    }
}

void conv2d_backward_input(const real* dy, const real* w, const ConvGeom& g, real* dx) {
    const int64_t k = g.col_rows(), n = g.col_cols();
    auto& cols = scratch2();
    cols.resize(size_t(k * n));
    gemm_tn(int(k), int(n), g.out_c, w, dy, cols.data());
    col2im(cols.data(), g, dx);
}

void conv2d_backward_params(const real* x, const real* dy, const ConvGeom& g, real* dw, real* db) {
    const int64_t k = g.col_rows(), n = g.col_cols();
    auto& cols = scratch();
    cols.resize(size_t(k * n));
    im2col(x, g, cols.data());
    gemm_nt_acc(g.out_c, int(k), int(n), dy, cols.data(), dw);
    if (db) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < g.out_c; ++co) {
            const real* dyrow = dy + int64_t(co) * n;
            real acc = 0;
            for (int64_t j = 0; j < n; ++j) acc += dyrow[j];
            db[co] += acc;
        }
    }
}

void convt2d_forward(const real* x, const real* w, const real* b, const ConvTGeom& g, real* y) {
    // convT forward is the input-gradient pass of the adjoint convolution.
    const ConvGeom a = g.adjoint();
    conv2d_backward_input(x, w, a, y);
    if (b) {
        const int64_t n = int64_t(g.out_h()) * g.out_w();
#pragma omp parallel for schedule(static)
        for (int co = 0; co < g.out_c; ++co) {
            real* yrow = y + co * n;
            const real bias = b[co];
            for (int64_t j = 0; j < n; ++j) yrow[j] += bias;
        }
    }
}

void convt2d_backward_input(const real* dy, const real* w, const ConvTGeom& g, real* dx) {
    conv2d_forward(dy, w, nullptr, g.adjoint(), dx);
}

void convt2d_backward_params(const real* x, const real* dy, const ConvTGeom& g, real* dw, real* db) {
    // Weight grad of convT == weight grad of the adjoint conv with the roles
    // of image and output-gradient swapped.
    conv2d_backward_params(dy, x, g.adjoint(), dw, nullptr);
    if (db) {
        const int64_t n = int64_t(g.out_h()) * g.out_w();
#pragma omp parallel for schedule(static)
        for (int co = 0; co < g.out_c; ++co) {
            const real* dyrow = dy + co * n;
            real acc = 0;
            for (int64_t j = 0; j < n; ++j) acc += dyrow[j];
            db[co] += acc;
        }
    }
}

void laplacian_apply(const real* f, const uint8_t* region, int h, int w, real* y) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const int64_t q = int64_t(i) * w + j;
            if (!region[q]) continue;
            real acc = 4 * f[q];
            if (i > 0 && region[q - w]) acc -= f[q - w];
            if (i + 1 < h && region[q + w]) acc -= f[q + w];
            if (j > 0 && region[q - 1]) acc -= f[q - 1];
            if (j + 1 < w && region[q + 1]) acc -= f[q + 1];
            y[q] = acc;
        }
    }
}

namespace serial {

void gemm(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            real acc = accumulate ? c[int64_t(i) * n + j] : real(0);
            for (int t = 0; t < k; ++t) acc += a[int64_t(i) * k + t] * b[int64_t(t) * n + j];
            c[int64_t(i) * n + j] = acc;
        }
    }
}

void conv2d_forward(const real* x, const real* w, const real* b, const ConvGeom& g, real* y) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.out_c; ++co) {
        for (int yo = 0; yo < oh; ++yo) {
            for (int xo = 0; xo < ow; ++xo) {
                real acc = b ? b[co] : real(0);
                for (int ci = 0; ci < g.in_c; ++ci) {
                    for (int t = 0; t < g.kh; ++t) {
                        const int iy = yo * g.stride - g.pad + t * g.dilation;
                        if (iy < 0 || iy >= g.in_h) continue;
                        for (int s = 0; s < g.kw; ++s) {
                            const int ix = xo * g.stride - g.pad + s * g.dilation;
                            if (ix < 0 || ix >= g.in_w) continue;
                            acc += w[((int64_t(co) * g.in_c + ci) * g.kh + t) * g.kw + s] *
                                   x[(int64_t(ci) * g.in_h + iy) * g.in_w + ix];
                        }
                    }
                }
                y[(int64_t(co) * oh + yo) * ow + xo] = acc;
            }
        }
    }
}

void conv2d_backward_input(const real* dy, const real* w, const ConvGeom& g, real* dx) {
    const int oh = g.out_h(), ow = g.out_w();
    std::memset(dx, 0, sizeof(real) * size_t(g.in_c) * g.in_h * g.in_w);
    for (int co = 0; co < g.out_c; ++co) {
        for (int yo = 0; yo < oh; ++yo) {
            for (int xo = 0; xo < ow; ++xo) {
                const real gv = dy[(int64_t(co) * oh + yo) * ow + xo];
                for (int ci = 0; ci < g.in_c; ++ci) {
                    for (int t = 0; t < g.kh; ++t) {
                        const int iy = yo * g.stride - g.pad + t * g.dilation;
                        if (iy < 0 || iy >= g.in_h) continue;
                        for (int s = 0; s < g.kw; ++s) {
                            const int ix = xo * g.stride - g.pad + s * g.dilation;
                            if (ix < 0 || ix >= g.in_w) continue;
                            dx[(int64_t(ci) * g.in_h + iy) * g.in_w + ix] +=
                                gv * w[((int64_t(co) * g.in_c + ci) * g.kh + t) * g.kw + s];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const real* x, const real* dy, const ConvGeom& g, real* dw, real* db) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.out_c; ++co) {
        for (int yo = 0; yo < oh; ++yo) {
            for (int xo = 0; xo < ow; ++xo) {
                const real gv = dy[(int64_t(co) * oh + yo) * ow + xo];
                for (int ci = 0; ci < g.in_c; ++ci) {
                    for (int t = 0; t < g.kh; ++t) {
                        const int iy = yo * g.stride - g.pad + t * g.dilation;
                        if (iy < 0 || iy >= g.in_h) continue;
                        for (int s = 0; s < g.kw; ++s) {
                            const int ix = xo * g.stride - g.pad + s * g.dilation;
                            if (ix < 0 || ix >= g.in_w) continue;
                            dw[((int64_t(co) * g.in_c + ci) * g.kh + t) * g.kw + s] +=
                                gv * x[(int64_t(ci) * g.in_h + iy) * g.in_w + ix];
                        }
                    }
                }
            }
        }
    }
    if (db) {
        for (int co = 0; co < g.out_c; ++co) {
            real acc = 0;
            for (int64_t j = 0; j < int64_t(oh) * ow; ++j) acc += dy[int64_t(co) * oh * ow + j];
            db[co] += acc;
        }
    }
}

void convt2d_forward(const real* x, const real* w, const real* b, const ConvTGeom& g, real* y) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int64_t i = 0; i < int64_t(g.out_c) * oh * ow; ++i) y[i] = 0;
    for (int ci = 0; ci < g.in_c; ++ci) {
        for (int iy = 0; iy < g.in_h; ++iy) {
            for (int ix = 0; ix < g.in_w; ++ix) {
                const real xv = x[(int64_t(ci) * g.in_h + iy) * g.in_w + ix];
                for (int co = 0; co < g.out_c; ++co) {
                    for (int t = 0; t < g.kh; ++t) {
                        const int oy = iy * g.stride - g.pad + t;
                        if (oy < 0 || oy >= oh) continue;
                        for (int s = 0; s < g.kw; ++s) {
                            const int ox = ix * g.stride - g.pad + s;
                            if (ox < 0 || ox >= ow) continue;
                            y[(int64_t(co) * oh + oy) * ow + ox] +=
                                xv * w[((int64_t(ci) * g.out_c + co) * g.kh + t) * g.kw + s];
                        }
                    }
                }
            }
        }
    }
    if (b) {
        for (int co = 0; co < g.out_c; ++co)
            for (int64_t j = 0; j < int64_t(oh) * ow; ++j) y[int64_t(co) * oh * ow + j] += b[co];
    }
}

void convt2d_backward_input(const real* dy, const real* w, const ConvTGeom& g, real* dx) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int ci = 0; ci < g.in_c; ++ci) {
        for (int iy = 0; iy < g.in_h; ++iy) {
            for (int ix = 0; ix < g.in_w; ++ix) {
                real acc = 0;
                for (int co = 0; co < g.out_c; ++co) {
                    for (int t = 0; t < g.kh; ++t) {
                        const int oy = iy * g.stride - g.pad + t;
                        if (oy < 0 || oy >= oh) continue;
                        for (int s = 0; s < g.kw; ++s) {
                            const int ox = ix * g.stride - g.pad + s;
                            if (ox < 0 || ox >= ow) continue;
                            acc += dy[(int64_t(co) * oh + oy) * ow + ox] *
                                   w[((int64_t(ci) * g.out_c + co) * g.kh + t) * g.kw + s];
                        }
                    }
                }
                dx[(int64_t(ci) * g.in_h + iy) * g.in_w + ix] = acc;
            }
        }
    }
}

void convt2d_backward_params(const real* x, const real* dy, const ConvTGeom& g, real* dw, real* db) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int ci = 0; ci < g.in_c; ++ci) {
        for (int iy = 0; iy < g.in_h; ++iy) {
            for (int ix = 0; ix < g.in_w; ++ix) {
                const real xv = x[(int64_t(ci) * g.in_h + iy) * g.in_w + ix];
                for (int co = 0; co < g.out_c; ++co) {
                    for (int t = 0; t < g.kh; ++t) {
                        const int oy = iy * g.stride - g.pad + t;
                        if (oy < 0 || oy >= oh) continue;
                        for (int s = 0; s < g.kw; ++s) {
                            const int ox = ix * g.stride - g.pad + s;
                            if (ox < 0 || ox >= ow) continue;
                            dw[((int64_t(ci) * g.out_c + co) * g.kh + t) * g.kw + s] +=
                                xv * dy[(int64_t(co) * oh + oy) * ow + ox];
                        }
                    }
                }
            }
        }
    }
    if (db) {
        for (int co = 0; co < g.out_c; ++co) {
            real acc = 0;
            for (int64_t j = 0; j < int64_t(oh) * ow; ++j) acc += dy[int64_t(co) * oh * ow + j];
            db[co] += acc;
        }
    }
}

void laplacian_apply(const real* f, const uint8_t* region, int h, int w, real* y) {
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const int64_t q = int64_t(i) * w + j;
            if (!region[q]) continue;
            real acc = 4 * f[q];
            if (i > 0 && region[q - w]) acc -= f[q - w];
            if (i + 1 < h && region[q + w]) acc -= f[q + w];
            if (j > 0 && region[q - 1]) acc -= f[q - 1];
            if (j + 1 < w && region[q + 1]) acc -= f[q + 1];
            y[q] = acc;
        }
    }
}

}  // namespace serial

}  // namespace artinp::kernels
