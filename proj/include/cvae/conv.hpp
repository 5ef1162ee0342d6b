#pragma once

#include <cblas.h>

#include <cstring>
#include <vector>

#include "cvae/tensor.hpp"

namespace cvae {

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb, double beta,
                 double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
                beta, c, ldc);
}

// Geometry of a strided cross-correlation over NHWC data.
struct ConvGeom {
    int n, h, w, cin;  // input
    int k, stride, pad;
    int ho, wo;  // output spatial size

    ConvGeom(int n_, int h_, int w_, int cin_, int k_, int stride_, int pad_)
        : n(n_), h(h_), w(w_), cin(cin_), k(k_), stride(stride_), pad(pad_) {
        if (stride < 1) throw DimensionError("conv: stride must be >= 1");
        if (k > h + 2 * pad || k > w + 2 * pad)
            throw DimensionError("conv: kernel larger than padded input");
        ho = (h + 2 * pad - k) / stride + 1;
        wo = (w + 2 * pad - k) / stride + 1;
    }

    std::size_t rows() const { return std::size_t(n) * ho * wo; }
    std::size_t cols() const { return std::size_t(k) * k * cin; }
};

// cols: [n*ho*wo, k*k*cin], zero-filled outside the padded input.
inline void im2col(const double* x, const ConvGeom& g, double* cols) {
    const std::size_t ccount = g.cols();
    for (int in = 0; in < g.n; ++in) {
        const double* xb = x + std::size_t(in) * g.h * g.w * g.cin;
        for (int oy = 0; oy < g.ho; ++oy) {
            for (int ox = 0; ox < g.wo; ++ox) {
                double* row =
                    cols + (std::size_t(in) * g.ho * g.wo + std::size_t(oy) * g.wo + ox) * ccount;
                for (int ky = 0; ky < g.k; ++ky) {
                    int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) {
                        std::memset(row + std::size_t(ky) * g.k * g.cin, 0,
                                    sizeof(double) * g.k * g.cin);
                        continue;
                    }
                    for (int kx = 0; kx < g.k; ++kx) {
                        int ix = ox * g.stride - g.pad + kx;
                        double* dst = row + (std::size_t(ky) * g.k + kx) * g.cin;
                        if (ix < 0 || ix >= g.w) {
                            std::memset(dst, 0, sizeof(double) * g.cin);
                        } else {
                            std::memcpy(dst, xb + (std::size_t(iy) * g.w + ix) * g.cin,
                                        sizeof(double) * g.cin);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col; x must be zeroed by the caller first.
inline void col2im(const double* cols, const ConvGeom& g, double* x) {
    const std::size_t ccount = g.cols();
    for (int in = 0; in < g.n; ++in) {
        double* xb = x + std::size_t(in) * g.h * g.w * g.cin;
        for (int oy = 0; oy < g.ho; ++oy) {
            for (int ox = 0; ox < g.wo; ++ox) {
                const double* row =
                    cols + (std::size_t(in) * g.ho * g.wo + std::size_t(oy) * g.wo + ox) * ccount;
                for (int ky = 0; ky < g.k; ++ky) {
                    int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int kx = 0; kx < g.k; ++kx) {
                        int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.w) continue;
                        const double* src = row + (std::size_t(ky) * g.k + kx) * g.cin;
                        double* dst = xb + (std::size_t(iy) * g.w + ix) * g.cin;
                        for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
                    }
                }
            }
        }
    }
}

}  // namespace cvae
