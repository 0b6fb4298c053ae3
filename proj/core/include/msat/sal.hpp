#pragma once

#include <random>

#include "msat/network.hpp"
#include "msat/semantic_encoder.hpp"
#include "msat/video_data.hpp"

namespace msat {

// Two-layer discriminator scoring whether an embedding is a real semantic
// code; sigmoid output in (0,1).
struct Discriminator {
    LinearLayer hidden;  // embed_dim -> 32
    LinearLayer out;     // 32 -> 1

    Discriminator() = default;
    Discriminator(int embed_dim, std::mt19937& rng);
    Tensor forward(const Tensor& x) const;  // [N, embed_dim] -> [N, 1]
    ParamRefs parameters();

    static constexpr int kHiddenDim = 32;
};

// Linear classification layer over the fused clip embedding.
struct Classifier {
    LinearLayer proj;  // embed_dim -> num_classes

    Classifier() = default;
    Classifier(int embed_dim, int num_classes, std::mt19937& rng);
    Tensor forward(const Tensor& x) const;
    ParamRefs parameters();
    int num_classes() const { return proj.weight.value.dim(0); }
};

// Per-step losses. total = cls + lambda_adv * adv_g holds exactly.
struct LossReport {
    float cls = 0.0f;
    float adv_d = 0.0f;
    float adv_g = 0.0f;
    float total = 0.0f;
    float lambda_adv = 0.0f;
};

// Mean over the batch of log_sum_exp(logits_row) - logits_row[label].
Tensor classification_loss(const Tensor& logits, const std::vector<int>& labels);

// -[mean log D(codes) + mean log(1 - D(fused))], probabilities clamped to
// (eps, 1-eps). The fused batch is detached: this phase trains D only.
Tensor discriminator_loss(const Tensor& codes, const Tensor& fused, const Discriminator& disc,
                          float eps = 1e-7f);

// Non-saturating generator objective -mean log D(fused); gradients flow into
// the generator through D, whose parameters this phase leaves untouched.
Tensor generator_loss(const Tensor& fused, const Discriminator& disc, float eps = 1e-7f);

struct SalContext {
    Network* generator = nullptr;
    Classifier* classifier = nullptr;
    Discriminator* discriminator = nullptr;
    const SemanticAutoencoder* encoder = nullptr;  // must be frozen

    float lr_generator = 0.001f;
    float momentum = 0.9f;
    float grad_clip = 20.0f;
    float lr_discriminator = 1e-4f;
    float lambda_adv = 1.0f;
    float eps_clamp = 1e-7f;
};

// One alternating round: phase 1 updates the discriminator on its own loss
// (real codes -> 1, fused embeddings -> 0); phase 2 re-runs the forward pass
// and updates generator + classifier on cls + lambda_adv * adv_g with
// gradient clipping and SGD momentum. The discriminator trains with Adam.
LossReport sal_step(const SnippetBatch& batch, SalContext& ctx);

}  // namespace msat
