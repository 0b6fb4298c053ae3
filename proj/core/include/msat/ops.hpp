#pragma once

#include <vector>

#include "msat/tensor.hpp"

namespace msat {

// Differentiable tensor operations. Every op validates shapes up front,
// computes the forward value, and (when gradients are being recorded)
// registers a backward closure plus a double-precision shadow evaluation
// on the current tape.
//
// Broadcasting is deliberately limited to the bias term inside conv2d and
// linear, and to scalar-times-tensor in mul; all other shapes must match
// exactly.

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);
Tensor adaptive_avg_pool2d(const Tensor& input, int bin_h, int bin_w);
Tensor upsample_nearest(const Tensor& input, int out_h, int out_w);
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);  // requires strictly positive input
Tensor clamp(const Tensor& x, float lo, float hi);

Tensor softmax(const Tensor& x, int axis);
// Reduces the given axis; max-shifted for stability. A rank-1 input yields
// a scalar (shape [1]).
Tensor log_sum_exp(const Tensor& x, int axis);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Elementwise product; one operand may be a single-element tensor, which
// multiplies the other elementwise.
Tensor mul(const Tensor& a, const Tensor& b);
// scale * x + shift with compile-time constants.
Tensor affine(const Tensor& x, float scale, float shift);

Tensor mean_over_axis(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, const Shape& shape);

// Single element by flat index, as a scalar tensor.
Tensor take(const Tensor& x, int64_t flat_index);
// rows[i] selects one column of row i: out[i] = x[i, rows[i]].
Tensor take_per_row(const Tensor& x, const std::vector<int>& rows);

// Copies the value into a fresh constant leaf; gradients do not flow back.
Tensor detach(const Tensor& x);

// Non-differentiable helpers.
int64_t argmax(const std::vector<float>& v);
int argmax_row(const Tensor& x, int row);
Tensor one_hot(const std::vector<int>& labels, int num_classes);

namespace detail {

// Assembles a differentiable node from explicit closures. Extension point
// for custom ops (and for test fixtures that need a deliberately wrong
// backward).
Tensor make_diff_op(OpKind kind, Shape out_shape, std::vector<float> value,
                    std::vector<NodePtr> inputs, std::function<void(Node&)> backward,
                    ShadowFn shadow);

}  // namespace detail

}  // namespace msat
