#include "msat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace msat {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        MSAT_REQUIRE(d > 0, "tensor extents must be positive, got ", d);
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::conv2d: return "conv2d";
        case OpKind::adaptive_avg_pool2d: return "adaptive_avg_pool2d";
        case OpKind::upsample_nearest: return "upsample_nearest";
        case OpKind::linear: return "linear";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::softmax: return "softmax";
        case OpKind::log_sum_exp: return "log_sum_exp";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::affine: return "affine";
        case OpKind::mean_over_axis: return "mean_over_axis";
        case OpKind::sum_all: return "sum_all";
        case OpKind::concat_channels: return "concat_channels";
        case OpKind::reshape: return "reshape";
        case OpKind::log: return "log";
        case OpKind::clamp: return "clamp";
        case OpKind::take: return "take";
        case OpKind::take_per_row: return "take_per_row";
    }
    return "unknown";
}

namespace {

detail::NodePtr make_leaf(const Shape& shape, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    node->shape = shape;
    node->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->value.size(), 0.0f);
    return node;
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return wrap(make_leaf(shape, requires_grad));
}

Tensor Tensor::full(const Shape& shape, float v, bool requires_grad) {
    auto node = make_leaf(shape, requires_grad);
    std::fill(node->value.begin(), node->value.end(), v);
    return wrap(std::move(node));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> data, bool requires_grad) {
    MSAT_REQUIRE(shape_numel(shape) == static_cast<int64_t>(data.size()),
                 "data length ", data.size(), " does not match shape ", shape_str(shape));
    auto node = make_leaf(shape, requires_grad);
    node->value = std::move(data);
    return wrap(std::move(node));
}

Tensor Tensor::scalar(float v, bool requires_grad) { return full({1}, v, requires_grad); }

Tensor Tensor::uniform(const Shape& shape, float lo, float hi, std::mt19937& rng,
                       bool requires_grad) {
    MSAT_REQUIRE(lo <= hi, "uniform: lo > hi");
    auto node = make_leaf(shape, requires_grad);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : node->value) v = dist(rng);
    return wrap(std::move(node));
}

Tensor Tensor::normal(const Shape& shape, float mean, float stddev, std::mt19937& rng,
                      bool requires_grad) {
    auto node = make_leaf(shape, requires_grad);
    std::normal_distribution<float> dist(mean, stddev);
    for (auto& v : node->value) v = dist(rng);
    return wrap(std::move(node));
}

const Shape& Tensor::shape() const {
    MSAT_REQUIRE(node_, "use of undefined tensor");
    return node_->shape;
}

int Tensor::dim(int i) const {
    const Shape& s = shape();
    MSAT_REQUIRE(i >= 0 && i < static_cast<int>(s.size()), "dim index ", i,
                 " out of range for shape ", shape_str(s));
    return s[i];
}

int64_t Tensor::numel() const {
    MSAT_REQUIRE(node_, "use of undefined tensor");
    return node_->numel();
}

std::vector<float>& Tensor::data() {
    MSAT_REQUIRE(node_, "use of undefined tensor");
    return node_->value;
}

const std::vector<float>& Tensor::data() const {
    MSAT_REQUIRE(node_, "use of undefined tensor");
    return node_->value;
}

std::vector<float>& Tensor::grad() {
    MSAT_REQUIRE(node_ && node_->requires_grad, "tensor has no gradient buffer");
    return node_->grad;
}

const std::vector<float>& Tensor::grad() const {
    MSAT_REQUIRE(node_ && node_->requires_grad, "tensor has no gradient buffer");
    return node_->grad;
}

bool Tensor::requires_grad() const {
    MSAT_REQUIRE(node_, "use of undefined tensor");
    return node_->requires_grad;
}

void Tensor::set_requires_grad(bool requires_grad) {
    MSAT_REQUIRE(node_, "use of undefined tensor");
    MSAT_REQUIRE(node_->kind == OpKind::leaf,
                 "requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = requires_grad;
    if (requires_grad)
        node_->grad.assign(node_->value.size(), 0.0f);
    else
        node_->grad.clear();
}

void Tensor::zero_grad() {
    if (node_ && node_->requires_grad)
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

float Tensor::item() const {
    MSAT_REQUIRE(numel() == 1, "item() needs a single-element tensor, got shape ",
                 shape_str(shape()));
    return node_->value[0];
}

float Tensor::at(const std::vector<int>& index) const {
    const Shape& s = shape();
    MSAT_REQUIRE(index.size() == s.size(), "index rank mismatch");
    int64_t flat = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        MSAT_REQUIRE(index[i] >= 0 && index[i] < s[i], "index out of range at axis ", i);
        flat = flat * s[i] + index[i];
    }
    return node_->value[static_cast<size_t>(flat)];
}

bool Tensor::all_finite() const {
    MSAT_REQUIRE(node_, "use of undefined tensor");
    for (float v : node_->value)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(detail::NodePtr node) { records_.push_back(std::move(node)); }

void Tape::clear() { records_.clear(); }

void Tape::backward(const Tensor& loss) {
    MSAT_REQUIRE(loss.defined(), "backward: undefined loss tensor");
    MSAT_REQUIRE(loss.numel() == 1, "backward: loss must be scalar, got shape ",
                 shape_str(loss.shape()));
    MSAT_REQUIRE(loss.requires_grad(),
                 "backward: loss does not depend on any requires_grad tensor");

    // Ancestry of the loss; other tape entries are skipped.
    std::unordered_set<detail::Node*> ancestry;
    std::vector<detail::Node*> stack{loss.node()};
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        if (!ancestry.insert(n).second) continue;
        for (const auto& in : n->inputs) stack.push_back(in.get());
    }

    for (detail::Node* n : ancestry) n->sweep.assign(n->value.size(), 0.0f);
    loss.node()->sweep[0] = 1.0f;

    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        detail::Node* n = it->get();
        if (n->backward && ancestry.count(n)) n->backward(*n);
    }

    for (detail::Node* n : ancestry) {
        if (n->requires_grad) {
            for (size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->sweep[i];
        }
        n->sweep.clear();
        n->sweep.shrink_to_fit();
    }
}

}  // namespace msat
