#pragma once

#include <string>
#include <vector>

#include "msat/tensor.hpp"

namespace msat {

// A named trainable tensor plus its optimizer state. State buffers are
// allocated on first use and always share the parameter's shape.
struct Parameter {
    std::string name;
    Tensor value;

    std::vector<float> momentum;   // SGD velocity
    std::vector<float> adam_m;     // first moment
    std::vector<float> adam_v;     // second moment
    int64_t steps = 0;

    Parameter() = default;
    Parameter(std::string name_, Tensor value_) : name(std::move(name_)), value(std::move(value_)) {
        MSAT_REQUIRE(value.requires_grad(), "parameter '", name, "' must require grad");
    }
};

using ParamRefs = std::vector<Parameter*>;

void zero_grad(const ParamRefs& params);

// Classical momentum: v <- mu*v + g; p <- p - lr*v.
void sgd_step(const ParamRefs& params, float lr, float momentum);

// Bias-corrected Adam.
void adam_step(const ParamRefs& params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
               float eps = 1e-8f);

double global_grad_norm(const ParamRefs& params);

// Rescales all gradients when their global l2 norm exceeds max_norm.
void clip_gradients(const ParamRefs& params, float max_norm);

// Checksum over parameter values; phase-isolation and freeze contracts.
uint64_t params_checksum(const ParamRefs& params);

}  // namespace msat
