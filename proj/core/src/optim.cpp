#include "msat/optim.hpp"

#include <cmath>

namespace msat {

void zero_grad(const ParamRefs& params) {
    for (Parameter* p : params) p->value.zero_grad();
}

void sgd_step(const ParamRefs& params, float lr, float momentum) {
    MSAT_REQUIRE(lr >= 0.0f, "sgd_step: negative learning rate ", lr);
    MSAT_REQUIRE(momentum >= 0.0f, "sgd_step: negative momentum ", momentum);
    for (Parameter* p : params) {
        auto& data = p->value.data();
        const auto& grad = p->value.grad();
        if (p->momentum.size() != data.size()) p->momentum.assign(data.size(), 0.0f);
        for (size_t i = 0; i < data.size(); ++i) {
            p->momentum[i] = momentum * p->momentum[i] + grad[i];
            data[i] -= lr * p->momentum[i];
        }
        ++p->steps;
    }
}

void adam_step(const ParamRefs& params, float lr, float beta1, float beta2, float eps) {
    MSAT_REQUIRE(lr >= 0.0f, "adam_step: negative learning rate ", lr);
    for (Parameter* p : params) {
        auto& data = p->value.data();
        const auto& grad = p->value.grad();
        if (p->adam_m.size() != data.size()) {
            p->adam_m.assign(data.size(), 0.0f);
            p->adam_v.assign(data.size(), 0.0f);
        }
        ++p->steps;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(p->steps));
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(p->steps));
        for (size_t i = 0; i < data.size(); ++i) {
            p->adam_m[i] = beta1 * p->adam_m[i] + (1.0f - beta1) * grad[i];
            p->adam_v[i] = beta2 * p->adam_v[i] + (1.0f - beta2) * grad[i] * grad[i];
            const double mhat = p->adam_m[i] / bc1;
            const double vhat = p->adam_v[i] / bc2;
            data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

double global_grad_norm(const ParamRefs& params) {
    double acc = 0.0;
    for (const Parameter* p : params)
        for (float g : p->value.grad()) acc += static_cast<double>(g) * g;
    return std::sqrt(acc);
}

void clip_gradients(const ParamRefs& params, float max_norm) {
    MSAT_REQUIRE(max_norm >= 0.0f, "clip_gradients: negative max_norm ", max_norm);
    const double norm = global_grad_norm(params);
    if (norm <= max_norm) return;
    const float scale = static_cast<float>(max_norm / norm);
    for (Parameter* p : params)
        for (float& g : p->value.grad()) g *= scale;
}

uint64_t params_checksum(const ParamRefs& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const Parameter* p : params) {
        h = fnv1a(p->name.data(), p->name.size(), h);
        const auto& data = p->value.data();
        h = fnv1a(data.data(), data.size() * sizeof(float), h);
    }
    return h;
}

}  // namespace msat
