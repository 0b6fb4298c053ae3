#pragma once

// Scalar-templated forward kernels. The float instantiation backs the public
// ops; the double instantiation backs the shadow re-execution used by the
// finite-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace msat {
namespace kernels {

template <typename T>
void conv2d_forward(const T* in, int n, int c, int h, int w, const T* weight, int f, int kh,
                    int kw, const T* bias, int stride, int pad, T* out, int oh, int ow) {
    const int64_t in_plane = static_cast<int64_t>(h) * w;
    const int64_t out_plane = static_cast<int64_t>(oh) * ow;
    for (int b = 0; b < n; ++b) {
        for (int fo = 0; fo < f; ++fo) {
            T* dst = out + (static_cast<int64_t>(b) * f + fo) * out_plane;
            std::fill(dst, dst + out_plane, bias[fo]);
            for (int ci = 0; ci < c; ++ci) {
                const T* src = in + (static_cast<int64_t>(b) * c + ci) * in_plane;
                const T* wrow = weight + ((static_cast<int64_t>(fo) * c + ci) * kh) * kw;
                for (int i = 0; i < kh; ++i) {
                    for (int j = 0; j < kw; ++j) {
                        const T wv = wrow[i * kw + j];
                        if (wv == T(0)) continue;
                        for (int y = 0; y < oh; ++y) {
                            const int iy = y * stride - pad + i;
                            if (iy < 0 || iy >= h) continue;
                            const T* srow = src + static_cast<int64_t>(iy) * w;
                            T* drow = dst + static_cast<int64_t>(y) * ow;
                            for (int x = 0; x < ow; ++x) {
                                const int ix = x * stride - pad + j;
                                if (ix < 0 || ix >= w) continue;
                                drow[x] += wv * srow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

inline int pool_start(int i, int in_extent, int bins) {
    return static_cast<int>((static_cast<int64_t>(i) * in_extent) / bins);
}
inline int pool_end(int i, int in_extent, int bins) {
    return static_cast<int>((static_cast<int64_t>(i + 1) * in_extent) / bins);
}

template <typename T>
void adaptive_avg_pool2d_forward(const T* in, int n, int c, int h, int w, int bh, int bw,
                                 T* out) {
    for (int p = 0; p < n * c; ++p) {
        const T* src = in + static_cast<int64_t>(p) * h * w;
        T* dst = out + static_cast<int64_t>(p) * bh * bw;
        for (int by = 0; by < bh; ++by) {
            const int y0 = pool_start(by, h, bh), y1 = pool_end(by, h, bh);
            for (int bx = 0; bx < bw; ++bx) {
                const int x0 = pool_start(bx, w, bw), x1 = pool_end(bx, w, bw);
                T acc = T(0);
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) acc += src[y * w + x];
                dst[by * bw + bx] = acc / T((y1 - y0) * (x1 - x0));
            }
        }
    }
}

template <typename T>
void upsample_nearest_forward(const T* in, int n, int c, int h, int w, int oh, int ow, T* out) {
    for (int p = 0; p < n * c; ++p) {
        const T* src = in + static_cast<int64_t>(p) * h * w;
        T* dst = out + static_cast<int64_t>(p) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const int sy = static_cast<int>((static_cast<int64_t>(y) * h) / oh);
            for (int x = 0; x < ow; ++x) {
                const int sx = static_cast<int>((static_cast<int64_t>(x) * w) / ow);
                dst[y * ow + x] = src[sy * w + sx];
            }
        }
    }
}

template <typename T>
void linear_forward(const T* x, int n, int in_dim, const T* weight, int out_dim, const T* bias,
                    T* out) {
    for (int b = 0; b < n; ++b) {
        const T* xr = x + static_cast<int64_t>(b) * in_dim;
        T* yr = out + static_cast<int64_t>(b) * out_dim;
        for (int o = 0; o < out_dim; ++o) {
            T acc = bias[o];
            const T* wr = weight + static_cast<int64_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    }
}

// Iteration helper for single-axis reductions/maps on row-major data:
// the tensor is viewed as [outer, axis, inner].
struct AxisView {
    int64_t outer = 1, axis = 1, inner = 1;
};

template <typename ShapeT>
AxisView axis_view(const ShapeT& shape, int axis) {
    AxisView v;
    for (int i = 0; i < axis; ++i) v.outer *= shape[i];
    v.axis = shape[axis];
    for (size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

template <typename T>
void softmax_forward(const T* in, const AxisView& v, T* out) {
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t i = 0; i < v.inner; ++i) {
            const T* src = in + o * v.axis * v.inner + i;
            T* dst = out + o * v.axis * v.inner + i;
            T mx = src[0];
            for (int64_t a = 1; a < v.axis; ++a) mx = std::max(mx, src[a * v.inner]);
            T denom = T(0);
            for (int64_t a = 0; a < v.axis; ++a) {
                const T e = std::exp(src[a * v.inner] - mx);
                dst[a * v.inner] = e;
                denom += e;
            }
            for (int64_t a = 0; a < v.axis; ++a) dst[a * v.inner] /= denom;
        }
    }
}

template <typename T>
void log_sum_exp_forward(const T* in, const AxisView& v, T* out) {
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t i = 0; i < v.inner; ++i) {
            const T* src = in + o * v.axis * v.inner + i;
            T mx = src[0];
            for (int64_t a = 1; a < v.axis; ++a) mx = std::max(mx, src[a * v.inner]);
            T acc = T(0);
            for (int64_t a = 0; a < v.axis; ++a) acc += std::exp(src[a * v.inner] - mx);
            out[o * v.inner + i] = mx + std::log(acc);
        }
    }
}

template <typename T>
void mean_over_axis_forward(const T* in, const AxisView& v, T* out) {
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t i = 0; i < v.inner; ++i) {
            const T* src = in + o * v.axis * v.inner + i;
            T acc = T(0);
            for (int64_t a = 0; a < v.axis; ++a) acc += src[a * v.inner];
            out[o * v.inner + i] = acc / T(v.axis);
        }
    }
}

template <typename T>
T sum_all_forward(const T* in, int64_t n) {
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) acc += in[i];
    return acc;
}

template <typename T>
T sigmoid_value(T x) {
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace kernels
}  // namespace msat
