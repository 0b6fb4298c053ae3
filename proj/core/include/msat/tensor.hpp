#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "msat/common.hpp"

namespace msat {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Operation identity of a graph node; leaf means "not produced by an op".
enum class OpKind : uint8_t {
    leaf,
    conv2d,
    adaptive_avg_pool2d,
    upsample_nearest,
    linear,
    relu,
    sigmoid,
    softmax,
    log_sum_exp,
    add,
    sub,
    mul,
    affine,
    mean_over_axis,
    sum_all,
    concat_channels,
    reshape,
    log,
    clamp,
    take,
    take_per_row,
};

const char* op_kind_name(OpKind kind);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Recomputes the node's forward value in double precision from its inputs'
// double buffers. Used by the finite-difference gradient oracle.
using ShadowFn = std::function<std::vector<double>(const std::vector<const std::vector<double>*>&)>;

struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // sized iff requires_grad
    bool requires_grad = false;

    OpKind kind = OpKind::leaf;
    std::vector<NodePtr> inputs;
    std::vector<float> op_attrs;  // op-specific scalars (e.g. clamp bounds)
    // Adds this node's sweep gradient into the inputs' sweep buffers.
    std::function<void(Node&)> backward;
    ShadowFn shadow;

    std::vector<float> sweep;  // transient buffer owned by Tape::backward

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
};

}  // namespace detail

// Dense row-major float32 tensor; value-semantic handle to a shared graph
// node. Gradients live next to the values and accumulate across backward
// calls until zero_grad().
class Tensor {
 public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, float v, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor scalar(float v, bool requires_grad = false);
    static Tensor uniform(const Shape& shape, float lo, float hi, std::mt19937& rng,
                          bool requires_grad = false);
    static Tensor normal(const Shape& shape, float mean, float stddev, std::mt19937& rng,
                         bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    int dim(int i) const;
    int64_t numel() const;

    std::vector<float>& data();
    const std::vector<float>& data() const;
    std::vector<float>& grad();
    const std::vector<float>& grad() const;

    bool requires_grad() const;
    // Leaf tensors only; flips gradient tracking and (de)allocates the buffer.
    void set_requires_grad(bool requires_grad);
    void zero_grad();

    float item() const;
    float at(const std::vector<int>& index) const;

    bool all_finite() const;

    detail::Node* node() const { return node_.get(); }
    const detail::NodePtr& node_ptr() const { return node_; }

    static Tensor wrap(detail::NodePtr node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

 private:
    detail::NodePtr node_;
};

// Thread-local gradient-recording switch.
class GradMode {
 public:
    static bool enabled();
    static void set_enabled(bool on);
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }

 private:
    bool prev_;
};

// Ordered record of the differentiable ops executed on this thread. The
// recording order is a topological order of the graph, so the backward sweep
// walks it in reverse, visiting each node once and summing gradients at
// fan-out points.
class Tape {
 public:
    static Tape& current();

    void record(detail::NodePtr node);
    void clear();
    size_t size() const { return records_.size(); }
    const std::vector<detail::NodePtr>& records() const { return records_; }

    // Seeds d(loss)/d(loss)=1 and accumulates d(loss)/d(node) into .grad of
    // every requires_grad ancestor of loss. Repeated calls accumulate.
    void backward(const Tensor& loss);

 private:
    std::vector<detail::NodePtr> records_;
};

inline void backward(const Tensor& loss) { Tape::current().backward(loss); }

}  // namespace msat
