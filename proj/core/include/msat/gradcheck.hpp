#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "msat/tensor.hpp"

namespace msat {

// Finite-difference gradient oracle. Analytic gradients come from the float32
// backward pass under test; the difference quotients are evaluated by
// re-executing the recorded graph in double precision (central differences,
// eps = 1e-3). The reported score is
//     |analytic - fd| / max(|analytic|, |fd|, 1e-2)
// so score <= 1e-4 means "relative error <= 1e-4 with absolute floor 1e-6".

constexpr double kGradCheckEps = 1e-3;
constexpr double kGradCheckTol = 1e-4;

// Re-evaluates the graph rooted at `loss` in double precision, optionally
// overriding single elements of leaf tensors. When region_change is given it
// is set when any relu/clamp evaluation lands on the other side of its kink
// than in the recorded float32 forward — central differences across such a
// flip are meaningless and the probe must be discarded.
struct LeafOverride {
    detail::Node* node;
    int64_t index;
    double value;
};
double shadow_eval(const Tensor& loss, const std::vector<LeafOverride>& overrides = {},
                   bool* region_change = nullptr);

// Checks d(loss)/d(input) for an already-built scalar loss whose graph lives
// on the current tape. Returns the worst score over all input elements.
double gradcheck_graph(const Tensor& loss, const std::vector<Tensor>& inputs,
                       double eps = kGradCheckEps);

// Convenience wrapper: clears the current tape, marks the inputs as
// requiring grad, builds loss = fn(inputs) and delegates to gradcheck_graph.
double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                 std::vector<Tensor> inputs, double eps = kGradCheckEps);

// True when the recorded graph evaluates a kinked op (relu, clamp) within
// `margin` of its kink, where central differences are meaningless.
bool has_kink_risk(const Tensor& loss, double margin = 1e-2);

struct GradCheckReport {
    std::string op;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Runs the oracle over every differentiable op family plus a tiny end-to-end
// network, 10 random points each. One report entry per family.
std::vector<GradCheckReport> gradcheck_suite(uint64_t seed, std::ostream* log = nullptr);

bool gradcheck_all_passed(const std::vector<GradCheckReport>& reports);

}  // namespace msat
