#include "lapdae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <vector>

#include <cblas.h>
#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef LAPDAE_HAVE_OPENBLAS_SET_NUM_THREADS
extern "C" void openblas_set_num_threads(int);
#endif

namespace lapdae::ops {
namespace {

// BLAS is pinned to one thread; batch-level parallelism lives in the
// loops below, which keeps results bit-identical run to run.
void pin_blas_threads() {
#ifdef LAPDAE_HAVE_OPENBLAS_SET_NUM_THREADS
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(1); });
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

struct ConvDims {
    int64_t batch, in_ch, in_h, in_w;
    int64_t out_ch, k, out_h, out_w;
    int stride, padding;
};

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
                     bool transpose) {
    if (x.rank() != 4)
        throw DimensionError("conv: input must be 4-D (B,C,H,W), got " + x.shape_str());
    if (w.rank() != 4)
        throw DimensionError("conv: kernels must be 4-D, got " + w.shape_str());
    if (w.dim(2) != w.dim(3))
        throw DimensionError("conv: kernel spatial extents differ (axis 2 = " +
                             std::to_string(w.dim(2)) + ", axis 3 = " + std::to_string(w.dim(3)) + ")");
    if (w.dim(2) % 2 == 0)
        throw DimensionError("conv: kernel size must be odd, got " + std::to_string(w.dim(2)));
    if (stride < 1) throw DimensionError("conv: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw DimensionError("conv: padding must be >= 0, got " + std::to_string(padding));
    int64_t kernel_in = transpose ? w.dim(0) : w.dim(1);
    int64_t kernel_out = transpose ? w.dim(1) : w.dim(0);
    if (x.dim(1) != kernel_in)
        throw DimensionError("conv: input channels (input axis 1 = " + std::to_string(x.dim(1)) +
                             ") do not match kernel (kernel axis " + (transpose ? "0" : "1") + " = " +
                             std::to_string(kernel_in) + ")");
    if (!b.empty() && (b.rank() != 1 || b.dim(0) != kernel_out))
        throw DimensionError("conv: bias shape " + b.shape_str() + " does not match output channels " +
                             std::to_string(kernel_out));
}

// col is (C*K*K, out_h*out_w) row-major for one sample.
void im2col(const float* src, int64_t C, int64_t H, int64_t W, int64_t K, int stride, int padding,
            int64_t out_h, int64_t out_w, float* col) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t kh = 0; kh < K; ++kh) {
            for (int64_t kw = 0; kw < K; ++kw) {
                float* row = col + ((c * K + kh) * K + kw) * out_h * out_w;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                    int64_t ih = oh * stride - padding + kh;
                    float* dst = row + oh * out_w;
                    if (ih < 0 || ih >= H) {
                        std::memset(dst, 0, sizeof(float) * static_cast<size_t>(out_w));
                        continue;
                    }
                    const float* srow = src + (c * H + ih) * W;
                    // valid ow range: 0 <= ow*stride - padding + kw < W
                    int64_t lo = 0, hi = out_w;
                    if (padding > kw) lo = (padding - kw + stride - 1) / stride;
                    int64_t limit = W - 1 + padding - kw;       // ow*stride <= limit
                    if (limit < 0)
                        hi = 0;
                    else
                        hi = std::min<int64_t>(out_w, limit / stride + 1);
                    if (lo > hi) lo = hi;
                    if (lo > 0) std::memset(dst, 0, sizeof(float) * static_cast<size_t>(lo));
                    if (hi < out_w)
                        std::memset(dst + hi, 0, sizeof(float) * static_cast<size_t>(out_w - hi));
                    if (stride == 1) {
                        if (hi > lo)
                            std::memcpy(dst + lo, srow + lo - padding + kw,
                                        sizeof(float) * static_cast<size_t>(hi - lo));
                    } else {
                        for (int64_t ow = lo; ow < hi; ++ow)
                            dst[ow] = srow[ow * stride - padding + kw];
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col into one sample (C,H,W); dst must be zeroed.
void col2im(const float* col, int64_t C, int64_t H, int64_t W, int64_t K, int stride, int padding,
            int64_t out_h, int64_t out_w, float* dst) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t kh = 0; kh < K; ++kh) {
            for (int64_t kw = 0; kw < K; ++kw) {
                const float* row = col + ((c * K + kh) * K + kw) * out_h * out_w;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                    int64_t ih = oh * stride - padding + kh;
                    if (ih < 0 || ih >= H) continue;
                    float* drow = dst + (c * H + ih) * W;
                    const float* srow = row + oh * out_w;
                    int64_t lo = 0, hi = out_w;
                    if (padding > kw) lo = (padding - kw + stride - 1) / stride;
                    int64_t limit = W - 1 + padding - kw;
                    if (limit < 0)
                        hi = 0;
                    else
                        hi = std::min<int64_t>(out_w, limit / stride + 1);
                    for (int64_t ow = lo; ow < hi; ++ow)
                        drow[ow * stride - padding + kw] += srow[ow];
                }
            }
        }
    }
}

void sgemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
           int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
                c, static_cast<int>(ldc));
}

} // namespace

int64_t conv_out_size(int64_t in, int64_t k, int stride, int padding) {
    int64_t eff = in + 2 * padding;
    if (eff < k)
        throw DimensionError("conv: spatial extent " + std::to_string(in) + " with padding " +
                             std::to_string(padding) + " is smaller than kernel " + std::to_string(k));
    return (eff - k) / stride + 1;
}

int64_t conv_transpose_out_size(int64_t in, int64_t k, int stride, int padding, int output_padding) {
    int64_t out = (in - 1) * stride - 2 * padding + k + output_padding;
    if (out < 1)
        throw DimensionError("conv_transpose: output extent " + std::to_string(out) +
                             " < 1 for input " + std::to_string(in));
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
    pin_blas_threads();
    check_conv_args(x, w, b, stride, padding, false);
    int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t O = w.dim(0), K = w.dim(2);
    int64_t out_h = conv_out_size(H, K, stride, padding);
    int64_t out_w = conv_out_size(W, K, stride, padding);
    Tensor y({B, O, out_h, out_w});

    int64_t ckk = C * K * K, ohw = out_h * out_w;
    std::vector<std::vector<float>> ws(static_cast<size_t>(max_threads()));
#pragma omp parallel for schedule(static)
    for (int64_t bi = 0; bi < B; ++bi) {
        auto& col = ws[static_cast<size_t>(thread_id())];
        col.resize(static_cast<size_t>(ckk * ohw));
        im2col(x.data() + bi * C * H * W, C, H, W, K, stride, padding, out_h, out_w, col.data());
        float* yb = y.data() + bi * O * ohw;
        sgemm(false, false, O, ohw, ckk, 1.0f, w.data(), ckk, col.data(), ohw, 0.0f, yb, ohw);
        if (!b.empty()) {
            for (int64_t o = 0; o < O; ++o) {
                float bias = b[o];
                float* row = yb + o * ohw;
                for (int64_t i = 0; i < ohw; ++i) row[i] += bias;
            }
        }
    }
    return y;
}

Tensor conv2d_grad_input(const Tensor& gy, const Tensor& w, int stride, int padding, int64_t in_h,
                         int64_t in_w) {
    pin_blas_threads();
    int64_t B = gy.dim(0), O = gy.dim(1), out_h = gy.dim(2), out_w = gy.dim(3);
    int64_t C = w.dim(1), K = w.dim(2);
    if (w.dim(0) != O)
        throw DimensionError("conv2d_grad_input: grad channels (axis 1 = " + std::to_string(O) +
                             ") do not match kernel axis 0 = " + std::to_string(w.dim(0)));
    Tensor gx({B, C, in_h, in_w});
    int64_t ckk = C * K * K, ohw = out_h * out_w;
    std::vector<std::vector<float>> ws(static_cast<size_t>(max_threads()));
#pragma omp parallel for schedule(static)
    for (int64_t bi = 0; bi < B; ++bi) {
        auto& col = ws[static_cast<size_t>(thread_id())];
        col.resize(static_cast<size_t>(ckk * ohw));
        sgemm(true, false, ckk, ohw, O, 1.0f, w.data(), ckk, gy.data() + bi * O * ohw, ohw, 0.0f,
              col.data(), ohw);
        col2im(col.data(), C, in_h, in_w, K, stride, padding, out_h, out_w,
               gx.data() + bi * C * in_h * in_w);
    }
    return gx;
}

Tensor conv2d_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int padding, int64_t k) {
    pin_blas_threads();
    int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t O = gy.dim(1), out_h = gy.dim(2), out_w = gy.dim(3);
    int64_t ckk = C * k * k, ohw = out_h * out_w;
    int nt = max_threads();
    std::vector<std::vector<float>> ws(static_cast<size_t>(nt));
    std::vector<std::vector<float>> acc(static_cast<size_t>(nt));
#pragma omp parallel for schedule(static)
    for (int64_t bi = 0; bi < B; ++bi) {
        int t = thread_id();
        auto& col = ws[static_cast<size_t>(t)];
        col.resize(static_cast<size_t>(ckk * ohw));
        auto& a = acc[static_cast<size_t>(t)];
        if (a.empty()) a.assign(static_cast<size_t>(O * ckk), 0.0f);
        im2col(x.data() + bi * C * H * W, C, H, W, k, stride, padding, out_h, out_w, col.data());
        sgemm(false, true, O, ckk, ohw, 1.0f, gy.data() + bi * O * ohw, ohw, col.data(), ohw, 1.0f,
              a.data(), ckk);
    }
    Tensor gw({O, C, k, k});
    for (auto& a : acc) {
        if (a.empty()) continue;
        for (int64_t i = 0; i < gw.numel(); ++i) gw[i] += a[static_cast<size_t>(i)];
    }
    return gw;
}

Tensor conv2d_grad_bias(const Tensor& gy) {
    int64_t B = gy.dim(0), O = gy.dim(1), ohw = gy.dim(2) * gy.dim(3);
    Tensor gb({O});
    for (int64_t o = 0; o < O; ++o) {
        double s = 0.0;
        for (int64_t bi = 0; bi < B; ++bi) {
            const float* row = gy.data() + (bi * O + o) * ohw;
            for (int64_t i = 0; i < ohw; ++i) s += row[i];
        }
        gb[o] = static_cast<float>(s);
    }
    return gb;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
                        int output_padding) {
    check_conv_args(x, w, b, stride, padding, true);
    if (output_padding < 0 || output_padding >= stride)
        throw DimensionError("conv_transpose: output_padding must be in [0, stride), got " +
                             std::to_string(output_padding));
    int64_t H = x.dim(2), W = x.dim(3), K = w.dim(2), O = w.dim(1);
    int64_t out_h = conv_transpose_out_size(H, K, stride, padding, output_padding);
    int64_t out_w = conv_transpose_out_size(W, K, stride, padding, output_padding);
    // The adjoint view: x plays the role of an output gradient of a conv2d
    // whose kernel maps O -> I channels.
    Tensor y = conv2d_grad_input(x, w, stride, padding, out_h, out_w);
    if (!b.empty()) {
        int64_t B = y.dim(0), ohw = out_h * out_w;
#pragma omp parallel for schedule(static)
        for (int64_t bi = 0; bi < B; ++bi)
            for (int64_t o = 0; o < O; ++o) {
                float* row = y.data() + (bi * O + o) * ohw;
                float bias = b[o];
                for (int64_t i = 0; i < ohw; ++i) row[i] += bias;
            }
    }
    return y;
}

Tensor conv_transpose2d_grad_input(const Tensor& gy, const Tensor& w, int stride, int padding) {
    return conv2d(gy, w, Tensor(), stride, padding);
}

Tensor conv_transpose2d_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int padding,
                                    int64_t k) {
    pin_blas_threads();
    // Same contraction as conv2d_grad_kernel with the roles of the tensors
    // swapped: gW_t(i, o*k*k) accumulates x_b(i, HW) * im2col(gy_b)^T.
    int64_t B = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t O = gy.dim(1), gh = gy.dim(2), gw_ = gy.dim(3);
    int64_t okk = O * k * k, hw = H * W;
    int nt = max_threads();
    std::vector<std::vector<float>> ws(static_cast<size_t>(nt));
    std::vector<std::vector<float>> acc(static_cast<size_t>(nt));
#pragma omp parallel for schedule(static)
    for (int64_t bi = 0; bi < B; ++bi) {
        int t = thread_id();
        auto& col = ws[static_cast<size_t>(t)];
        col.resize(static_cast<size_t>(okk * hw));
        auto& a = acc[static_cast<size_t>(t)];
        if (a.empty()) a.assign(static_cast<size_t>(I * okk), 0.0f);
        im2col(gy.data() + bi * O * gh * gw_, O, gh, gw_, k, stride, padding, H, W, col.data());
        sgemm(false, true, I, okk, hw, 1.0f, x.data() + bi * I * hw, hw, col.data(), hw, 1.0f,
              a.data(), okk);
    }
    Tensor gw({I, O, k, k});
    for (auto& a : acc) {
        if (a.empty()) continue;
        for (int64_t i = 0; i < gw.numel(); ++i) gw[i] += a[static_cast<size_t>(i)];
    }
    return gw;
}

Tensor conv_transpose2d_grad_bias(const Tensor& gy) { return conv2d_grad_bias(gy); }

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    const float* src = x.data();
    float* dst = y.data();
    int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
    return y;
}

Tensor relu_grad(const Tensor& x, const Tensor& gy) {
    Tensor::check_same_shape(x, gy, "relu_grad");
    Tensor g(x.shape());
    int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) g[i] = x[i] > 0.0f ? gy[i] : 0.0f;
    return g;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        float v = x[i];
        if (v >= 0.0f) {
            y[i] = 1.0f / (1.0f + std::exp(-v));
        } else {
            float e = std::exp(v);     // never overflows for v < 0
            y[i] = e / (1.0f + e);
        }
    }
    return y;
}

Tensor sigmoid_grad(const Tensor& y, const Tensor& gy) {
    Tensor::check_same_shape(y, gy, "sigmoid_grad");
    Tensor g(y.shape());
    int64_t n = y.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) g[i] = gy[i] * y[i] * (1.0f - y[i]);
    return g;
}

double mse(const Tensor& z, const Tensor& x) {
    Tensor::check_same_shape(z, x, "mse_loss");
    double s = 0.0;
    for (int64_t i = 0; i < z.numel(); ++i) {
        double d = static_cast<double>(z[i]) - static_cast<double>(x[i]);
        s += d * d;
    }
    return s / static_cast<double>(z.numel());
}

Tensor mse_grad_z(const Tensor& z, const Tensor& x) {
    Tensor::check_same_shape(z, x, "mse_loss");
    Tensor g(z.shape());
    float scale = 2.0f / static_cast<float>(z.numel());
    int64_t n = z.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) g[i] = scale * (z[i] - x[i]);
    return g;
}

double dot(const Tensor& a, const Tensor& b) {
    Tensor::check_same_shape(a, b, "dot");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

} // namespace lapdae::ops
