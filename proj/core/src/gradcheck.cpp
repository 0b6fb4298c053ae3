#include "msat/gradcheck.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "msat/network.hpp"
#include "msat/ops.hpp"

namespace msat {

namespace {

using detail::Node;

std::vector<Node*> loss_ancestry(const Tensor& loss) {
    std::vector<Node*> out;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{loss.node()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        out.push_back(n);
        for (const auto& in : n->inputs) stack.push_back(in.get());
    }
    return out;
}

}  // namespace

namespace {

// -1 below, 0 inside, +1 above the clamp window.
int clamp_region(double v, double lo, double hi) { return v <= lo ? -1 : (v >= hi ? 1 : 0); }

bool crossed_kink(const Node* n, const std::vector<double>& shadow_in) {
    const auto& base = n->inputs[0]->value;
    if (n->kind == OpKind::relu) {
        for (size_t i = 0; i < base.size(); ++i)
            if ((shadow_in[i] > 0.0) != (base[i] > 0.0f)) return true;
    } else if (n->kind == OpKind::clamp) {
        const double lo = n->op_attrs[0], hi = n->op_attrs[1];
        for (size_t i = 0; i < base.size(); ++i)
            if (clamp_region(shadow_in[i], lo, hi) != clamp_region(base[i], lo, hi))
                return true;
    }
    return false;
}

}  // namespace

double shadow_eval(const Tensor& loss, const std::vector<LeafOverride>& overrides,
                   bool* region_change) {
    MSAT_REQUIRE(loss.numel() == 1, "shadow_eval: loss must be scalar");
    std::unordered_map<Node*, std::vector<double>> memo;
    std::vector<std::pair<Node*, bool>> stack{{loss.node(), false}};
    while (!stack.empty()) {
        auto [n, expanded] = stack.back();
        stack.pop_back();
        if (memo.count(n)) continue;
        if (!n->shadow) {
            // Leaf (or an op outside the gradient path): its float32 value is
            // the constant, possibly with one element overridden.
            std::vector<double> buf(n->value.begin(), n->value.end());
            for (const auto& ov : overrides)
                if (ov.node == n) buf[static_cast<size_t>(ov.index)] = ov.value;
            memo.emplace(n, std::move(buf));
            continue;
        }
        if (!expanded) {
            stack.push_back({n, true});
            for (const auto& in : n->inputs)
                if (!memo.count(in.get())) stack.push_back({in.get(), false});
            continue;
        }
        std::vector<const std::vector<double>*> ins;
        ins.reserve(n->inputs.size());
        for (const auto& in : n->inputs) ins.push_back(&memo.at(in.get()));
        if (region_change && !*region_change &&
            (n->kind == OpKind::relu || n->kind == OpKind::clamp))
            *region_change = crossed_kink(n, *ins[0]);
        memo.emplace(n, n->shadow(ins));
    }
    return memo.at(loss.node())[0];
}

double gradcheck_graph(const Tensor& loss, const std::vector<Tensor>& inputs, double eps) {
    MSAT_REQUIRE(loss.numel() == 1, "gradcheck: loss must be scalar");
    for (Tensor t : inputs) {
        MSAT_REQUIRE(t.requires_grad(), "gradcheck: all inputs must require grad");
        t.zero_grad();
    }
    Tape::current().backward(loss);

    double worst = 0.0;
    for (const Tensor& t : inputs) {
        const auto& analytic = t.grad();
        for (int64_t e = 0; e < t.numel(); ++e) {
            const double base = t.data()[static_cast<size_t>(e)];
            bool crossed = false;
            const double lp = shadow_eval(loss, {{t.node(), e, base + eps}}, &crossed);
            const double lm = shadow_eval(loss, {{t.node(), e, base - eps}}, &crossed);
            if (crossed) continue;  // perturbation flipped an activation region
            const double fd = (lp - lm) / (2.0 * eps);
            const double a = analytic[static_cast<size_t>(e)];
            const double err = std::abs(a - fd);
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-2});
            worst = std::max(worst, err / denom);
        }
    }
    return worst;
}

double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                 std::vector<Tensor> inputs, double eps) {
    Tape& tape = Tape::current();
    tape.clear();
    for (Tensor& t : inputs)
        if (!t.requires_grad()) t.set_requires_grad(true);
    Tensor loss = fn(inputs);
    const double score = gradcheck_graph(loss, inputs, eps);
    tape.clear();
    return score;
}

bool has_kink_risk(const Tensor& loss, double margin) {
    for (Node* n : loss_ancestry(loss)) {
        if (n->kind == OpKind::relu) {
            for (float v : n->inputs[0]->value)
                if (std::abs(v) < margin) return true;
        } else if (n->kind == OpKind::clamp) {
            const float lo = n->op_attrs[0], hi = n->op_attrs[1];
            for (float v : n->inputs[0]->value)
                if (std::abs(v - lo) < margin || std::abs(v - hi) < margin) return true;
        }
    }
    return false;
}

namespace {

Tensor rand_signed(const Shape& shape, float lo, float hi, std::mt19937& rng) {
    Tensor t = Tensor::uniform(shape, lo, hi, rng, true);
    std::uniform_int_distribution<int> coin(0, 1);
    for (auto& v : t.data())
        if (coin(rng)) v = -v;
    return t;
}

// Random linear probe reducing an op output to a scalar; coefficients are
// bounded away from zero so every output element influences the loss.
Tensor probe(const Tensor& y, std::mt19937& rng) {
    Tensor c = rand_signed(y.shape(), 0.5f, 1.5f, rng);
    c.set_requires_grad(false);
    return sum_all(mul(y, c));
}

// One finite-difference point with kink-aware resampling: rebuilds the graph
// until no relu/clamp evaluation sits near its kink, then checks it.
double checked_point(
    std::mt19937& rng,
    const std::function<std::pair<std::vector<Tensor>, Tensor>(std::mt19937&)>& build) {
    Tape& tape = Tape::current();
    constexpr int kMaxAttempts = 64;
    for (int attempt = 0;; ++attempt) {
        tape.clear();
        auto [inputs, loss] = build(rng);
        if (attempt + 1 < kMaxAttempts && has_kink_risk(loss)) continue;
        const double score = gradcheck_graph(loss, inputs);
        tape.clear();
        return score;
    }
}

struct SuiteRunner {
    std::mt19937 rng;
    std::vector<GradCheckReport> reports;
    std::ostream* log = nullptr;
    static constexpr int kPoints = 10;

    void family(
        const std::string& name,
        const std::function<std::pair<std::vector<Tensor>, Tensor>(std::mt19937&)>& build) {
        GradCheckReport r;
        r.op = name;
        for (int p = 0; p < kPoints; ++p)
            r.max_rel_err = std::max(r.max_rel_err, checked_point(rng, build));
        r.pass = r.max_rel_err <= kGradCheckTol;
        if (log) {
            (*log) << std::left << std::setw(22) << name << " max_rel_err="
                   << std::scientific << std::setprecision(2) << r.max_rel_err << "  "
                   << (r.pass ? "PASS" : "FAIL") << "\n" << std::defaultfloat;
        }
        reports.push_back(std::move(r));
    }
};

}  // namespace

std::vector<GradCheckReport> gradcheck_suite(uint64_t seed, std::ostream* log) {
    SuiteRunner s;
    s.rng.seed(static_cast<std::mt19937::result_type>(hash_mix(seed, 0x6c617265)));
    s.log = log;

    auto uni = [](std::mt19937& rng, const Shape& shape, float lo, float hi) {
        return Tensor::uniform(shape, lo, hi, rng, true);
    };

    s.family("conv2d", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {1, 2, 5, 5}, -1, 1), uni(rng, {3, 2, 3, 3}, -0.5f, 0.5f),
                               uni(rng, {3}, -0.5f, 0.5f)};
        Tensor loss = probe(conv2d(in[0], in[1], in[2], 2, 1), rng);
        return std::make_pair(in, loss);
    });
    s.family("adaptive_avg_pool2d", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 2, 5, 4}, -1, 1)};
        Tensor loss = probe(adaptive_avg_pool2d(in[0], 3, 2), rng);
        return std::make_pair(in, loss);
    });
    s.family("upsample_nearest", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {1, 2, 2, 3}, -1, 1)};
        Tensor loss = probe(upsample_nearest(in[0], 5, 7), rng);
        return std::make_pair(in, loss);
    });
    s.family("linear", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {3, 4}, -1, 1), uni(rng, {2, 4}, -1, 1),
                               uni(rng, {2}, -0.5f, 0.5f)};
        Tensor loss = probe(linear(in[0], in[1], in[2]), rng);
        return std::make_pair(in, loss);
    });
    s.family("relu", [&](std::mt19937& rng) {
        std::vector<Tensor> in{rand_signed({2, 7}, 0.05f, 1.0f, rng)};
        Tensor loss = probe(relu(in[0]), rng);
        return std::make_pair(in, loss);
    });
    s.family("sigmoid", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 7}, -2, 2)};
        Tensor loss = probe(sigmoid(in[0]), rng);
        return std::make_pair(in, loss);
    });
    s.family("log", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 5}, 0.2f, 3.0f)};
        Tensor loss = probe(msat::log(in[0]), rng);
        return std::make_pair(in, loss);
    });
    s.family("clamp", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {3, 5}, -1, 1)};
        Tensor loss = probe(clamp(in[0], -0.5f, 0.5f), rng);
        return std::make_pair(in, loss);
    });
    s.family("softmax", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {3, 5}, -2, 2)};
        Tensor loss = probe(softmax(in[0], 1), rng);
        return std::make_pair(in, loss);
    });
    s.family("log_sum_exp", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {3, 5}, -2, 2)};
        Tensor loss = probe(log_sum_exp(in[0], 1), rng);
        return std::make_pair(in, loss);
    });
    s.family("add", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 3}, -1, 1), uni(rng, {2, 3}, -1, 1)};
        Tensor loss = probe(add(in[0], in[1]), rng);
        return std::make_pair(in, loss);
    });
    s.family("sub", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 3}, -1, 1), uni(rng, {2, 3}, -1, 1)};
        Tensor loss = probe(sub(in[0], in[1]), rng);
        return std::make_pair(in, loss);
    });
    s.family("mul", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 3}, -1, 1), uni(rng, {2, 3}, -1, 1),
                               uni(rng, {1}, 0.3f, 1.5f)};
        Tensor dense = mul(in[0], in[1]);
        Tensor loss = probe(mul(dense, in[2]), rng);
        return std::make_pair(in, loss);
    });
    s.family("affine", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 3}, -1, 1)};
        Tensor loss = probe(affine(in[0], 1.7f, -0.3f), rng);
        return std::make_pair(in, loss);
    });
    s.family("mean_over_axis", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 3, 4}, -1, 1)};
        Tensor loss = probe(mean_over_axis(in[0], 1), rng);
        return std::make_pair(in, loss);
    });
    s.family("sum_all", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {3, 4}, -1, 1)};
        Tensor loss = probe(sum_all(in[0]), rng);
        return std::make_pair(in, loss);
    });
    s.family("concat_channels", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {1, 2, 3, 3}, -1, 1), uni(rng, {1, 3, 3, 3}, -1, 1)};
        Tensor loss = probe(concat_channels({in[0], in[1]}), rng);
        return std::make_pair(in, loss);
    });
    s.family("reshape", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {2, 6}, -1, 1)};
        Tensor loss = probe(reshape(in[0], {3, 4}), rng);
        return std::make_pair(in, loss);
    });
    s.family("take", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {3, 4}, -1, 1)};
        std::uniform_int_distribution<int64_t> pick(0, in[0].numel() - 1);
        Tensor loss = probe(take(in[0], pick(rng)), rng);
        return std::make_pair(in, loss);
    });
    s.family("take_per_row", [&](std::mt19937& rng) {
        std::vector<Tensor> in{uni(rng, {3, 5}, -1, 1)};
        std::uniform_int_distribution<int> pick(0, 4);
        std::vector<int> rows{pick(rng), pick(rng), pick(rng)};
        Tensor loss = probe(take_per_row(in[0], rows), rng);
        return std::make_pair(in, loss);
    });
    s.family("network", [&](std::mt19937& rng) {
        NetworkConfig cfg;
        cfg.stage_channels = {2, 2, 2, 2};
        cfg.embed_dim = 4;
        cfg.input_height = 16;
        cfg.input_width = 16;
        auto net = std::make_shared<Network>(cfg, rng);
        std::vector<Tensor> in{Tensor::uniform({1, 3, 16, 16}, -1, 1, rng, true)};
        for (Parameter* p : net->parameters()) in.push_back(p->value);
        Tensor loss = probe(net->forward(in[0], 1), rng);
        return std::make_pair(in, loss);
    });

    return s.reports;
}

bool gradcheck_all_passed(const std::vector<GradCheckReport>& reports) {
    for (const auto& r : reports)
        if (!r.pass) return false;
    return !reports.empty();
}

}  // namespace msat
