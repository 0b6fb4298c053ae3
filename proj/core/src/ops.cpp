#include "msat/ops.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace msat {

namespace {

using detail::Node;
using detail::NodePtr;
using detail::ShadowFn;

bool want_grad(std::initializer_list<const Tensor*> inputs) {
    if (!GradMode::enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

NodePtr new_op_node(OpKind kind, Shape shape, std::vector<NodePtr> inputs, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0f);
    n->requires_grad = requires_grad;
    if (requires_grad) {
        n->grad.assign(n->value.size(), 0.0f);
        n->inputs = std::move(inputs);
    }
    return n;
}

Tensor finalize(NodePtr n, std::function<void(Node&)> backward, ShadowFn shadow) {
    if (n->requires_grad) {
        n->backward = std::move(backward);
        n->shadow = std::move(shadow);
        Tape::current().record(n);
    }
    return Tensor::wrap(std::move(n));
}

Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    for (int i = 0; i < static_cast<int>(s.size()); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

void check_axis(const Tensor& x, int axis, const char* op) {
    MSAT_REQUIRE(axis >= 0 && axis < x.rank(), op, ": axis ", axis,
                 " out of range for shape ", shape_str(x.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    MSAT_REQUIRE(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()),
                 " vs ", shape_str(b.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
    MSAT_REQUIRE(input.rank() == 4, "conv2d: input must be [N,C,H,W], got ",
                 shape_str(input.shape()));
    MSAT_REQUIRE(weight.rank() == 4, "conv2d: weight must be [F,C,kh,kw], got ",
                 shape_str(weight.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int f = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    MSAT_REQUIRE(weight.dim(1) == c, "conv2d: weight channel dim ", weight.dim(1),
                 " does not match input channels ", c);
    MSAT_REQUIRE(bias.rank() == 1 && bias.dim(0) == f, "conv2d: bias dim ",
                 shape_str(bias.shape()), " does not match filter count ", f);
    MSAT_REQUIRE(stride >= 1, "conv2d: stride must be positive, got ", stride);
    MSAT_REQUIRE(padding >= 0, "conv2d: padding must be non-negative, got ", padding);
    MSAT_REQUIRE(h + 2 * padding >= kh, "conv2d: kernel height ", kh,
                 " exceeds padded input height ", h + 2 * padding);
    MSAT_REQUIRE(w + 2 * padding >= kw, "conv2d: kernel width ", kw,
                 " exceeds padded input width ", w + 2 * padding);
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;

    auto node = new_op_node(OpKind::conv2d, {n, f, oh, ow},
                            {input.node_ptr(), weight.node_ptr(), bias.node_ptr()},
                            want_grad({&input, &weight, &bias}));
    kernels::conv2d_forward(input.data().data(), n, c, h, w, weight.data().data(), f, kh, kw,
                            bias.data().data(), stride, padding, node->value.data(), oh, ow);

    auto backward = [=](Node& self) {
        Node& in = *self.inputs[0];
        Node& wt = *self.inputs[1];
        Node& bs = *self.inputs[2];
        const bool need_din = in.requires_grad;
        const bool need_dw = wt.requires_grad;
        const float* g = self.sweep.data();
        for (int b = 0; b < n; ++b) {
            for (int fo = 0; fo < f; ++fo) {
                const float* gp = g + (static_cast<int64_t>(b) * f + fo) * oh * ow;
                if (bs.requires_grad) {
                    float acc = 0.0f;
                    for (int i = 0; i < oh * ow; ++i) acc += gp[i];
                    bs.sweep[fo] += acc;
                }
                if (!need_din && !need_dw) continue;
                for (int ci = 0; ci < c; ++ci) {
                    const float* src = in.value.data() + (static_cast<int64_t>(b) * c + ci) * h * w;
                    float* dsrc = need_din
                        ? in.sweep.data() + (static_cast<int64_t>(b) * c + ci) * h * w
                        : nullptr;
                    for (int i = 0; i < kh; ++i) {
                        for (int j = 0; j < kw; ++j) {
                            const int64_t widx = ((static_cast<int64_t>(fo) * c + ci) * kh + i) * kw + j;
                            const float wv = wt.value[widx];
                            float dw_acc = 0.0f;
                            for (int y = 0; y < oh; ++y) {
                                const int iy = y * stride - padding + i;
                                if (iy < 0 || iy >= h) continue;
                                for (int x = 0; x < ow; ++x) {
                                    const int ix = x * stride - padding + j;
                                    if (ix < 0 || ix >= w) continue;
                                    const float gv = gp[y * ow + x];
                                    if (need_din) dsrc[iy * w + ix] += wv * gv;
                                    if (need_dw) dw_acc += src[iy * w + ix] * gv;
                                }
                            }
                            if (need_dw) wt.sweep[widx] += dw_acc;
                        }
                    }
                }
            }
        }
    };
    auto shadow = [=](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(static_cast<size_t>(n) * f * oh * ow);
        kernels::conv2d_forward(ins[0]->data(), n, c, h, w, ins[1]->data(), f, kh, kw,
                                ins[2]->data(), stride, padding, out.data(), oh, ow);
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor adaptive_avg_pool2d(const Tensor& input, int bin_h, int bin_w) {
    MSAT_REQUIRE(input.rank() == 4, "adaptive_avg_pool2d: input must be [N,C,H,W], got ",
                 shape_str(input.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    MSAT_REQUIRE(bin_h >= 1 && bin_w >= 1, "adaptive_avg_pool2d: bins must be positive");
    MSAT_REQUIRE(bin_h <= h && bin_w <= w, "adaptive_avg_pool2d: bins (", bin_h, ",", bin_w,
                 ") exceed spatial extent (", h, ",", w, ")");

    auto node = new_op_node(OpKind::adaptive_avg_pool2d, {n, c, bin_h, bin_w},
                            {input.node_ptr()}, want_grad({&input}));
    kernels::adaptive_avg_pool2d_forward(input.data().data(), n, c, h, w, bin_h, bin_w,
                                         node->value.data());

    auto backward = [=](Node& self) {
        Node& in = *self.inputs[0];
        for (int p = 0; p < n * c; ++p) {
            float* dsrc = in.sweep.data() + static_cast<int64_t>(p) * h * w;
            const float* g = self.sweep.data() + static_cast<int64_t>(p) * bin_h * bin_w;
            for (int by = 0; by < bin_h; ++by) {
                const int y0 = kernels::pool_start(by, h, bin_h);
                const int y1 = kernels::pool_end(by, h, bin_h);
                for (int bx = 0; bx < bin_w; ++bx) {
                    const int x0 = kernels::pool_start(bx, w, bin_w);
                    const int x1 = kernels::pool_end(bx, w, bin_w);
                    const float gv = g[by * bin_w + bx] / static_cast<float>((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) dsrc[y * w + x] += gv;
                }
            }
        }
    };
    auto shadow = [=](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(static_cast<size_t>(n) * c * bin_h * bin_w);
        kernels::adaptive_avg_pool2d_forward(ins[0]->data(), n, c, h, w, bin_h, bin_w,
                                             out.data());
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor upsample_nearest(const Tensor& input, int out_h, int out_w) {
    MSAT_REQUIRE(input.rank() == 4, "upsample_nearest: input must be [N,C,H,W], got ",
                 shape_str(input.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    MSAT_REQUIRE(out_h >= h && out_w >= w, "upsample_nearest: target (", out_h, ",", out_w,
                 ") would downscale source (", h, ",", w, ")");

    auto node = new_op_node(OpKind::upsample_nearest, {n, c, out_h, out_w},
                            {input.node_ptr()}, want_grad({&input}));
    kernels::upsample_nearest_forward(input.data().data(), n, c, h, w, out_h, out_w,
                                      node->value.data());

    auto backward = [=](Node& self) {
        Node& in = *self.inputs[0];
        for (int p = 0; p < n * c; ++p) {
            float* dsrc = in.sweep.data() + static_cast<int64_t>(p) * h * w;
            const float* g = self.sweep.data() + static_cast<int64_t>(p) * out_h * out_w;
            for (int y = 0; y < out_h; ++y) {
                const int sy = static_cast<int>((static_cast<int64_t>(y) * h) / out_h);
                for (int x = 0; x < out_w; ++x) {
                    const int sx = static_cast<int>((static_cast<int64_t>(x) * w) / out_w);
                    dsrc[sy * w + sx] += g[y * out_w + x];
                }
            }
        }
    };
    auto shadow = [=](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(static_cast<size_t>(n) * c * out_h * out_w);
        kernels::upsample_nearest_forward(ins[0]->data(), n, c, h, w, out_h, out_w, out.data());
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    MSAT_REQUIRE(input.rank() == 2, "linear: input must be [N,in], got ",
                 shape_str(input.shape()));
    MSAT_REQUIRE(weight.rank() == 2, "linear: weight must be [out,in], got ",
                 shape_str(weight.shape()));
    const int n = input.dim(0), in_dim = input.dim(1), out_dim = weight.dim(0);
    MSAT_REQUIRE(weight.dim(1) == in_dim, "linear: weight inner dim ", weight.dim(1),
                 " does not match input dim ", in_dim);
    MSAT_REQUIRE(bias.rank() == 1 && bias.dim(0) == out_dim, "linear: bias dim ",
                 shape_str(bias.shape()), " does not match output dim ", out_dim);

    auto node = new_op_node(OpKind::linear, {n, out_dim},
                            {input.node_ptr(), weight.node_ptr(), bias.node_ptr()},
                            want_grad({&input, &weight, &bias}));
    kernels::linear_forward(input.data().data(), n, in_dim, weight.data().data(), out_dim,
                            bias.data().data(), node->value.data());

    auto backward = [=](Node& self) {
        Node& in = *self.inputs[0];
        Node& wt = *self.inputs[1];
        Node& bs = *self.inputs[2];
        const float* g = self.sweep.data();
        for (int b = 0; b < n; ++b) {
            const float* gr = g + static_cast<int64_t>(b) * out_dim;
            const float* xr = in.value.data() + static_cast<int64_t>(b) * in_dim;
            float* dxr = in.requires_grad ? in.sweep.data() + static_cast<int64_t>(b) * in_dim
                                          : nullptr;
            for (int o = 0; o < out_dim; ++o) {
                const float gv = gr[o];
                if (gv == 0.0f) continue;
                if (bs.requires_grad) bs.sweep[o] += gv;
                const float* wr = wt.value.data() + static_cast<int64_t>(o) * in_dim;
                float* dwr = wt.requires_grad
                    ? wt.sweep.data() + static_cast<int64_t>(o) * in_dim
                    : nullptr;
                for (int i = 0; i < in_dim; ++i) {
                    if (dxr) dxr[i] += gv * wr[i];
                    if (dwr) dwr[i] += gv * xr[i];
                }
            }
        }
    };
    auto shadow = [=](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(static_cast<size_t>(n) * out_dim);
        kernels::linear_forward(ins[0]->data(), n, in_dim, ins[1]->data(), out_dim,
                                ins[2]->data(), out.data());
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor relu(const Tensor& x) {
    auto node = new_op_node(OpKind::relu, x.shape(), {x.node_ptr()}, want_grad({&x}));
    const auto& src = x.data();
    for (size_t i = 0; i < src.size(); ++i) node->value[i] = src[i] > 0.0f ? src[i] : 0.0f;

    auto backward = [](Node& self) {
        Node& in = *self.inputs[0];
        for (size_t i = 0; i < self.sweep.size(); ++i)
            if (in.value[i] > 0.0f) in.sweep[i] += self.sweep[i];
    };
    auto shadow = [](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(*ins[0]);
        for (auto& v : out) v = v > 0.0 ? v : 0.0;
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor sigmoid(const Tensor& x) {
    auto node = new_op_node(OpKind::sigmoid, x.shape(), {x.node_ptr()}, want_grad({&x}));
    const auto& src = x.data();
    for (size_t i = 0; i < src.size(); ++i) node->value[i] = kernels::sigmoid_value(src[i]);

    auto backward = [](Node& self) {
        Node& in = *self.inputs[0];
        for (size_t i = 0; i < self.sweep.size(); ++i) {
            const float y = self.value[i];
            in.sweep[i] += self.sweep[i] * y * (1.0f - y);
        }
    };
    auto shadow = [](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(*ins[0]);
        for (auto& v : out) v = kernels::sigmoid_value(v);
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor log(const Tensor& x) {
    for (float v : x.data())
        MSAT_REQUIRE(v > 0.0f, "log: input must be strictly positive, got ", v);
    auto node = new_op_node(OpKind::log, x.shape(), {x.node_ptr()}, want_grad({&x}));
    const auto& src = x.data();
    for (size_t i = 0; i < src.size(); ++i) node->value[i] = std::log(src[i]);

    auto backward = [](Node& self) {
        Node& in = *self.inputs[0];
        for (size_t i = 0; i < self.sweep.size(); ++i)
            in.sweep[i] += self.sweep[i] / in.value[i];
    };
    auto shadow = [](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(*ins[0]);
        for (auto& v : out) v = std::log(v);
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor clamp(const Tensor& x, float lo, float hi) {
    MSAT_REQUIRE(lo <= hi, "clamp: lo ", lo, " > hi ", hi);
    auto node = new_op_node(OpKind::clamp, x.shape(), {x.node_ptr()}, want_grad({&x}));
    node->op_attrs = {lo, hi};
    const auto& src = x.data();
    for (size_t i = 0; i < src.size(); ++i) node->value[i] = std::min(std::max(src[i], lo), hi);

    auto backward = [=](Node& self) {
        Node& in = *self.inputs[0];
        for (size_t i = 0; i < self.sweep.size(); ++i)
            if (in.value[i] > lo && in.value[i] < hi) in.sweep[i] += self.sweep[i];
    };
    auto shadow = [=](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(*ins[0]);
        for (auto& v : out) v = std::min(std::max(v, static_cast<double>(lo)),
                                         static_cast<double>(hi));
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor softmax(const Tensor& x, int axis) {
    check_axis(x, axis, "softmax");
    auto node = new_op_node(OpKind::softmax, x.shape(), {x.node_ptr()}, want_grad({&x}));
    const auto view = kernels::axis_view(x.shape(), axis);
    kernels::softmax_forward(x.data().data(), view, node->value.data());

    auto backward = [view](Node& self) {
        Node& in = *self.inputs[0];
        for (int64_t o = 0; o < view.outer; ++o) {
            for (int64_t i = 0; i < view.inner; ++i) {
                const int64_t base = o * view.axis * view.inner + i;
                float dot = 0.0f;
                for (int64_t a = 0; a < view.axis; ++a) {
                    const int64_t k = base + a * view.inner;
                    dot += self.sweep[k] * self.value[k];
                }
                for (int64_t a = 0; a < view.axis; ++a) {
                    const int64_t k = base + a * view.inner;
                    in.sweep[k] += self.value[k] * (self.sweep[k] - dot);
                }
            }
        }
    };
    auto shadow = [view](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(ins[0]->size());
        kernels::softmax_forward(ins[0]->data(), view, out.data());
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor log_sum_exp(const Tensor& x, int axis) {
    check_axis(x, axis, "log_sum_exp");
    auto node = new_op_node(OpKind::log_sum_exp, drop_axis(x.shape(), axis), {x.node_ptr()},
                            want_grad({&x}));
    const auto view = kernels::axis_view(x.shape(), axis);
    kernels::log_sum_exp_forward(x.data().data(), view, node->value.data());

    auto backward = [view](Node& self) {
        Node& in = *self.inputs[0];
        for (int64_t o = 0; o < view.outer; ++o) {
            for (int64_t i = 0; i < view.inner; ++i) {
                const float lse = self.value[o * view.inner + i];
                const float g = self.sweep[o * view.inner + i];
                if (g == 0.0f) continue;
                const int64_t base = o * view.axis * view.inner + i;
                for (int64_t a = 0; a < view.axis; ++a) {
                    const int64_t k = base + a * view.inner;
                    in.sweep[k] += g * std::exp(in.value[k] - lse);
                }
            }
        }
    };
    auto shadow = [view](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(static_cast<size_t>(view.outer * view.inner));
        kernels::log_sum_exp_forward(ins[0]->data(), view, out.data());
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto node = new_op_node(OpKind::add, a.shape(), {a.node_ptr(), b.node_ptr()},
                            want_grad({&a, &b}));
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] + bv[i];

    auto backward = [](Node& self) {
        for (int side = 0; side < 2; ++side) {
            Node& in = *self.inputs[side];
            for (size_t i = 0; i < self.sweep.size(); ++i) in.sweep[i] += self.sweep[i];
        }
    };
    auto shadow = [](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(*ins[0]);
        for (size_t i = 0; i < out.size(); ++i) out[i] += (*ins[1])[i];
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto node = new_op_node(OpKind::sub, a.shape(), {a.node_ptr(), b.node_ptr()},
                            want_grad({&a, &b}));
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] - bv[i];

    auto backward = [](Node& self) {
        Node& lhs = *self.inputs[0];
        Node& rhs = *self.inputs[1];
        for (size_t i = 0; i < self.sweep.size(); ++i) {
            lhs.sweep[i] += self.sweep[i];
            rhs.sweep[i] -= self.sweep[i];
        }
    };
    auto shadow = [](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(*ins[0]);
        for (size_t i = 0; i < out.size(); ++i) out[i] -= (*ins[1])[i];
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    MSAT_REQUIRE(a.shape() == b.shape() || a_scalar || b_scalar,
                 "mul: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()),
                 " (only scalar broadcast is supported)");
    const Shape out_shape = a_scalar ? b.shape() : a.shape();
    auto node = new_op_node(OpKind::mul, out_shape, {a.node_ptr(), b.node_ptr()},
                            want_grad({&a, &b}));
    const auto& av = a.data();
    const auto& bv = b.data();
    if (a.shape() == b.shape()) {
        for (size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] * bv[i];
    } else if (b_scalar) {
        for (size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] * bv[0];
    } else {
        for (size_t i = 0; i < bv.size(); ++i) node->value[i] = av[0] * bv[i];
    }

    auto backward = [](Node& self) {
        Node& lhs = *self.inputs[0];
        Node& rhs = *self.inputs[1];
        if (lhs.shape == rhs.shape) {
            for (size_t i = 0; i < self.sweep.size(); ++i) {
                lhs.sweep[i] += self.sweep[i] * rhs.value[i];
                rhs.sweep[i] += self.sweep[i] * lhs.value[i];
            }
            return;
        }
        Node& scalar = lhs.numel() == 1 ? lhs : rhs;
        Node& dense = lhs.numel() == 1 ? rhs : lhs;
        double acc = 0.0;
        for (size_t i = 0; i < self.sweep.size(); ++i) {
            dense.sweep[i] += self.sweep[i] * scalar.value[0];
            acc += static_cast<double>(self.sweep[i]) * dense.value[i];
        }
        scalar.sweep[0] += static_cast<float>(acc);
    };
    auto shadow = [a_scalar, b_scalar](const std::vector<const std::vector<double>*>& ins) {
        const auto& x = *ins[0];
        const auto& y = *ins[1];
        if (x.size() == y.size()) {
            std::vector<double> out(x);
            for (size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
            return out;
        }
        if (b_scalar && !a_scalar) {
            std::vector<double> out(x);
            for (auto& v : out) v *= y[0];
            return out;
        }
        std::vector<double> out(y);
        for (auto& v : out) v *= x[0];
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor affine(const Tensor& x, float scale, float shift) {
    auto node = new_op_node(OpKind::affine, x.shape(), {x.node_ptr()}, want_grad({&x}));
    const auto& src = x.data();
    for (size_t i = 0; i < src.size(); ++i) node->value[i] = scale * src[i] + shift;

    auto backward = [scale](Node& self) {
        Node& in = *self.inputs[0];
        for (size_t i = 0; i < self.sweep.size(); ++i) in.sweep[i] += self.sweep[i] * scale;
    };
    auto shadow = [scale, shift](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(*ins[0]);
        for (auto& v : out) v = static_cast<double>(scale) * v + static_cast<double>(shift);
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor mean_over_axis(const Tensor& x, int axis) {
    check_axis(x, axis, "mean_over_axis");
    auto node = new_op_node(OpKind::mean_over_axis, drop_axis(x.shape(), axis),
                            {x.node_ptr()}, want_grad({&x}));
    const auto view = kernels::axis_view(x.shape(), axis);
    kernels::mean_over_axis_forward(x.data().data(), view, node->value.data());

    auto backward = [view](Node& self) {
        Node& in = *self.inputs[0];
        const float inv = 1.0f / static_cast<float>(view.axis);
        for (int64_t o = 0; o < view.outer; ++o) {
            for (int64_t i = 0; i < view.inner; ++i) {
                const float g = self.sweep[o * view.inner + i] * inv;
                const int64_t base = o * view.axis * view.inner + i;
                for (int64_t a = 0; a < view.axis; ++a) in.sweep[base + a * view.inner] += g;
            }
        }
    };
    auto shadow = [view](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(static_cast<size_t>(view.outer * view.inner));
        kernels::mean_over_axis_forward(ins[0]->data(), view, out.data());
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor sum_all(const Tensor& x) {
    auto node = new_op_node(OpKind::sum_all, {1}, {x.node_ptr()}, want_grad({&x}));
    node->value[0] = kernels::sum_all_forward(x.data().data(), x.numel());

    auto backward = [](Node& self) {
        Node& in = *self.inputs[0];
        const float g = self.sweep[0];
        for (auto& v : in.sweep) v += g;
    };
    auto shadow = [](const std::vector<const std::vector<double>*>& ins) {
        return std::vector<double>{
            kernels::sum_all_forward(ins[0]->data(), static_cast<int64_t>(ins[0]->size()))};
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor mean_all(const Tensor& x) {
    return affine(sum_all(x), 1.0f / static_cast<float>(x.numel()), 0.0f);
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    MSAT_REQUIRE(!parts.empty(), "concat_channels: empty input list");
    const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    int total_c = 0;
    std::vector<NodePtr> inputs;
    std::vector<int> channels;
    bool grad = false;
    for (const auto& p : parts) {
        MSAT_REQUIRE(p.rank() == 4, "concat_channels: parts must be [N,C,H,W], got ",
                     shape_str(p.shape()));
        MSAT_REQUIRE(p.dim(0) == n && p.dim(2) == h && p.dim(3) == w,
                     "concat_channels: part shape ", shape_str(p.shape()),
                     " incompatible with ", shape_str(parts[0].shape()));
        total_c += p.dim(1);
        channels.push_back(p.dim(1));
        inputs.push_back(p.node_ptr());
        grad = grad || p.requires_grad();
    }
    auto node = new_op_node(OpKind::concat_channels, {n, total_c, h, w}, std::move(inputs),
                            grad && GradMode::enabled());
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int b = 0; b < n; ++b) {
        int64_t dst_c = 0;
        for (size_t k = 0; k < parts.size(); ++k) {
            const auto& src = parts[k].data();
            const int ck = channels[k];
            std::copy(src.begin() + static_cast<int64_t>(b) * ck * plane,
                      src.begin() + static_cast<int64_t>(b + 1) * ck * plane,
                      node->value.begin() + (static_cast<int64_t>(b) * total_c + dst_c) * plane);
            dst_c += ck;
        }
    }

    auto backward = [=](Node& self) {
        for (int b = 0; b < n; ++b) {
            int64_t src_c = 0;
            for (size_t k = 0; k < self.inputs.size(); ++k) {
                Node& in = *self.inputs[k];
                const int ck = channels[k];
                const float* g = self.sweep.data() + (static_cast<int64_t>(b) * total_c + src_c) * plane;
                float* d = in.sweep.data() + static_cast<int64_t>(b) * ck * plane;
                for (int64_t i = 0; i < ck * plane; ++i) d[i] += g[i];
                src_c += ck;
            }
        }
    };
    auto shadow = [=](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(static_cast<size_t>(n) * total_c * plane);
        for (int b = 0; b < n; ++b) {
            int64_t dst_c = 0;
            for (size_t k = 0; k < ins.size(); ++k) {
                const int ck = channels[k];
                std::copy(ins[k]->begin() + static_cast<int64_t>(b) * ck * plane,
                          ins[k]->begin() + static_cast<int64_t>(b + 1) * ck * plane,
                          out.begin() + (static_cast<int64_t>(b) * total_c + dst_c) * plane);
                dst_c += ck;
            }
        }
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    MSAT_REQUIRE(shape_numel(shape) == x.numel(), "reshape: cannot view ",
                 shape_str(x.shape()), " as ", shape_str(shape));
    auto node = new_op_node(OpKind::reshape, shape, {x.node_ptr()}, want_grad({&x}));
    node->value = x.data();

    auto backward = [](Node& self) {
        Node& in = *self.inputs[0];
        for (size_t i = 0; i < self.sweep.size(); ++i) in.sweep[i] += self.sweep[i];
    };
    auto shadow = [](const std::vector<const std::vector<double>*>& ins) { return *ins[0]; };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor take(const Tensor& x, int64_t flat_index) {
    MSAT_REQUIRE(flat_index >= 0 && flat_index < x.numel(), "take: index ", flat_index,
                 " out of range for ", x.numel(), " elements");
    auto node = new_op_node(OpKind::take, {1}, {x.node_ptr()}, want_grad({&x}));
    node->value[0] = x.data()[static_cast<size_t>(flat_index)];

    auto backward = [flat_index](Node& self) {
        self.inputs[0]->sweep[static_cast<size_t>(flat_index)] += self.sweep[0];
    };
    auto shadow = [flat_index](const std::vector<const std::vector<double>*>& ins) {
        return std::vector<double>{(*ins[0])[static_cast<size_t>(flat_index)]};
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor take_per_row(const Tensor& x, const std::vector<int>& rows) {
    MSAT_REQUIRE(x.rank() == 2, "take_per_row: input must be [N,K], got ",
                 shape_str(x.shape()));
    const int n = x.dim(0), k = x.dim(1);
    MSAT_REQUIRE(static_cast<int>(rows.size()) == n, "take_per_row: got ", rows.size(),
                 " indices for ", n, " rows");
    for (int i = 0; i < n; ++i)
        MSAT_REQUIRE(rows[i] >= 0 && rows[i] < k, "take_per_row: index ", rows[i],
                     " out of range [0,", k, ") at row ", i);

    auto node = new_op_node(OpKind::take_per_row, {n}, {x.node_ptr()}, want_grad({&x}));
    for (int i = 0; i < n; ++i)
        node->value[i] = x.data()[static_cast<size_t>(i) * k + rows[i]];

    auto rows_copy = rows;
    auto backward = [rows_copy, k](Node& self) {
        Node& in = *self.inputs[0];
        for (size_t i = 0; i < self.sweep.size(); ++i)
            in.sweep[i * k + rows_copy[i]] += self.sweep[i];
    };
    auto shadow = [rows_copy, k](const std::vector<const std::vector<double>*>& ins) {
        std::vector<double> out(rows_copy.size());
        for (size_t i = 0; i < rows_copy.size(); ++i) out[i] = (*ins[0])[i * k + rows_copy[i]];
        return out;
    };
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

Tensor detach(const Tensor& x) {
    return Tensor::from_data(x.shape(), x.data(), false);
}

int64_t argmax(const std::vector<float>& v) {
    MSAT_REQUIRE(!v.empty(), "argmax: empty vector");
    return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
}

int argmax_row(const Tensor& x, int row) {
    MSAT_REQUIRE(x.rank() == 2, "argmax_row: input must be rank 2");
    const int k = x.dim(1);
    const float* base = x.data().data() + static_cast<int64_t>(row) * k;
    return static_cast<int>(std::distance(base, std::max_element(base, base + k)));
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
    Tensor out = Tensor::zeros({static_cast<int>(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        MSAT_REQUIRE(labels[i] >= 0 && labels[i] < num_classes, "one_hot: label ", labels[i],
                     " out of range [0,", num_classes, ")");
        out.data()[i * num_classes + labels[i]] = 1.0f;
    }
    return out;
}

namespace detail {

Tensor make_diff_op(OpKind kind, Shape out_shape, std::vector<float> value,
                    std::vector<NodePtr> inputs, std::function<void(Node&)> backward,
                    ShadowFn shadow) {
    bool grad = false;
    if (GradMode::enabled())
        for (const auto& in : inputs) grad = grad || in->requires_grad;
    auto node = new_op_node(kind, std::move(out_shape), std::move(inputs), grad);
    MSAT_REQUIRE(node->value.size() == value.size(), "make_diff_op: value size mismatch");
    node->value = std::move(value);
    return finalize(std::move(node), std::move(backward), std::move(shadow));
}

}  // namespace detail

}  // namespace msat
